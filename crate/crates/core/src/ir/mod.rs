//! Test-program AST: the SSA core produced by lowering plus every construct
//! the mutators introduce.

pub mod analysis;
mod emit;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::opset::{Attrs, OpKind};
use crate::tensor::{DType, Scalar, Shape};

pub(crate) use emit::zeros_attrs;
pub use emit::{emit, emit_condition, EmitError, EmitStyle};
pub use validate::{infer_types, validate, Violation, INT_CONST_BOUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Shape,
    pub dtype: DType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub returns: Vec<String>,
}

/// Index used by an unrolled slice step: a loop variable or a fixed offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexExpr {
    Var(String),
    Const(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuncDef {
    pub name: String,
    /// Explicit parameters; callers pass same-named outer variables.
    #[serde(default)]
    pub params: Vec<String>,
    /// Names the body captures from enclosing scopes at call time.
    pub free_vars: Vec<String>,
    pub body: Vec<Stmt>,
    pub returns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stmt {
    Assign {
        target: String,
        op: OpKind,
        args: Vec<String>,
        #[serde(default)]
        attrs: Attrs,
    },
    /// `target[.., index, ..] = op(arg[.., index, ..], ...)` along `axis`.
    SliceAssign {
        target: String,
        axis: usize,
        index: IndexExpr,
        op: OpKind,
        args: Vec<String>,
        #[serde(default)]
        attrs: Attrs,
    },
    ForLoop {
        var: String,
        extent: usize,
        body: Vec<Stmt>,
    },
    /// `target = stack([op(arg[.., var, ..], ...) for var in range(extent)], dim=axis)`.
    ComprehensionAssign {
        target: String,
        axis: usize,
        var: String,
        extent: usize,
        op: OpKind,
        args: Vec<String>,
        #[serde(default)]
        attrs: Attrs,
    },
    BackupStore {
        tmp: String,
        source: String,
        pos: Vec<usize>,
    },
    PointStore {
        target: String,
        pos: Vec<usize>,
        value: Scalar,
    },
    RestoreStore {
        target: String,
        pos: Vec<usize>,
        tmp: String,
    },
    IfBlock {
        cond: ConditionExpr,
        body: Vec<Stmt>,
    },
    FuncDef(FuncDef),
    Call {
        results: Vec<String>,
        func: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Gt,
    Lt,
    Ge,
    Le,
}

impl CmpOp {
    pub const ALL: [CmpOp; 4] = [CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Gt => ord == Greater,
            CmpOp::Lt => ord == Less,
            CmpOp::Ge => ord != Less,
            CmpOp::Le => ord != Greater,
        }
    }
}

/// One operand of a synthesized condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ScalarExpr {
    Element { var: String, pos: Vec<usize> },
    ShapeDim { var: String, dim: usize },
    Rank { var: String },
    Max { var: String },
    Min { var: String },
    IntConst { value: i64 },
}

impl ScalarExpr {
    pub fn var(&self) -> Option<&str> {
        match self {
            ScalarExpr::Element { var, .. }
            | ScalarExpr::ShapeDim { var, .. }
            | ScalarExpr::Rank { var }
            | ScalarExpr::Max { var }
            | ScalarExpr::Min { var } => Some(var),
            ScalarExpr::IntConst { .. } => None,
        }
    }

    /// Grammar alternative name, used for coverage accounting.
    pub fn form(&self) -> &'static str {
        match self {
            ScalarExpr::Element { .. } => "element",
            ScalarExpr::ShapeDim { .. } => "shape_dim",
            ScalarExpr::Rank { .. } => "rank",
            ScalarExpr::Max { .. } => "max",
            ScalarExpr::Min { .. } => "min",
            ScalarExpr::IntConst { .. } => "const",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionExpr {
    pub lhs: ScalarExpr,
    pub op: CmpOp,
    pub rhs: ScalarExpr,
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_condition(self))
    }
}

impl Program {
    /// Total number of statements, counting nested bodies.
    pub fn statement_count(&self) -> usize {
        fn count(body: &[Stmt]) -> usize {
            body.iter()
                .map(|s| {
                    1 + match s {
                        Stmt::ForLoop { body, .. } | Stmt::IfBlock { body, .. } => count(body),
                        Stmt::FuncDef(f) => count(&f.body),
                        _ => 0,
                    }
                })
                .sum()
        }
        count(&self.body)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Visit every statement, depth first, in program order.
    pub fn walk(&self, mut f: impl FnMut(&Stmt)) {
        fn go(body: &[Stmt], f: &mut dyn FnMut(&Stmt)) {
            for s in body {
                f(s);
                match s {
                    Stmt::ForLoop { body, .. } | Stmt::IfBlock { body, .. } => go(body, f),
                    Stmt::FuncDef(d) => go(&d.body, f),
                    _ => {}
                }
            }
        }
        go(&self.body, &mut f);
    }

    pub fn contains_tcb(&self) -> bool {
        let mut found = false;
        self.walk(|s| found |= matches!(s, Stmt::IfBlock { .. }));
        found
    }

    /// Every name appearing anywhere in the program.
    pub fn all_names(&self) -> std::collections::BTreeSet<String> {
        let mut names: std::collections::BTreeSet<String> = self.params.iter().map(|p| p.name.clone()).collect();
        self.walk(|s| {
            names.extend(analysis::stmt_binds(s));
            match s {
                Stmt::FuncDef(d) => names.extend(d.params.iter().cloned()),
                Stmt::ComprehensionAssign { var, .. } => {
                    names.insert(var.clone());
                }
                _ => {}
            }
        });
        names
    }

    /// Next unused name of the form `<prefix><k>`.
    pub fn fresh_name(&self, prefix: &str) -> String {
        let names = self.all_names();
        let next = names
            .iter()
            .filter_map(|n| n.strip_prefix(prefix).and_then(|k| k.parse::<usize>().ok()))
            .map(|k| k + 1)
            .max()
            .unwrap_or(0);
        format!("{prefix}{next}")
    }
}

/// Name prefixes for generated identifiers.
pub mod names {
    pub const VALUE: &str = "v";
    pub const PARAM: &str = "x";
    pub const BACKUP: &str = "_bk";
    pub const LOOP: &str = "i";
    pub const FUNC: &str = "subfunc";
}
