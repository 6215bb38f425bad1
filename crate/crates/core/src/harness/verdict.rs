//! Verdict kinds and fingerprinting.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictKind {
    Pass,
    CompilerCrash,
    CompilerHang,
    RunCrash,
    Inconsistent,
    InvalidSeed,
}

impl VerdictKind {
    pub const ALL: [VerdictKind; 6] = [
        VerdictKind::Pass,
        VerdictKind::CompilerCrash,
        VerdictKind::CompilerHang,
        VerdictKind::RunCrash,
        VerdictKind::Inconsistent,
        VerdictKind::InvalidSeed,
    ];
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{self:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub detail: String,
    /// Empty for `Pass`.
    pub fingerprint: String,
}

impl Verdict {
    pub fn pass() -> Self {
        Verdict { kind: VerdictKind::Pass, detail: String::new(), fingerprint: String::new() }
    }

    /// A crash, hang or invalid-seed verdict fingerprinted from stderr.
    pub fn from_stderr(kind: VerdictKind, detail: String, stderr: &str) -> Self {
        let fingerprint = match kind {
            VerdictKind::Pass => String::new(),
            VerdictKind::CompilerHang => kind.to_string(),
            _ => format!("{kind}: {}", normalize(&error_line(stderr).unwrap_or_else(|| detail.clone()))),
        };
        Verdict { kind, detail, fingerprint }
    }

    /// An output mismatch at `index`.
    pub fn inconsistent(index: usize, detail: String) -> Self {
        Verdict { kind: VerdictKind::Inconsistent, detail, fingerprint: format!("Inconsistent: output {index}") }
    }
}

fn regexes() -> &'static [(Regex, &'static str); 4] {
    static RES: OnceLock<[(Regex, &'static str); 4]> = OnceLock::new();
    RES.get_or_init(|| {
        [
            (Regex::new(r"0x[0-9a-fA-F]+").unwrap(), "0x?"),
            (Regex::new(r#"(?:[A-Za-z]:)?(?:[\\/][^\s\\/:'",()]+)+[\\/]?"#).unwrap(), "<path>"),
            (Regex::new(r"\bline \d+").unwrap(), "line ?"),
            (Regex::new(r":\d+(:\d+)?\b").unwrap(), ":?"),
        ]
    })
}

/// Strip hex addresses, file paths and line numbers.
pub fn normalize(line: &str) -> String {
    let mut s = line.trim().to_string();
    for (re, rep) in regexes() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s
}

/// The last line of `stderr` naming an error type, else its last non-empty line.
pub fn error_line(stderr: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^[A-Za-z_][\w.]*(Error|Exception|Fault|Panic|Abort)\w*(:|$)").unwrap());
    let lines: Vec<&str> = stderr.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    lines.iter().rev().find(|l| re.is_match(l)).or(lines.last()).map(|l| l.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temp_paths_and_addresses_do_not_matter() {
        let a = "Traceback (most recent call last):\n  File \"/tmp/x1/case_ab12/program.py\", line 7, in f\nRuntimeError: bad tensor at 0x7ffd1234 in /tmp/x1/case_ab12/program.py:7\n";
        let b = "Traceback (most recent call last):\n  File \"/var/tmp/q/case_ff00/program.py\", line 31, in f\nRuntimeError: bad tensor at 0xdeadbeef in /var/tmp/q/case_ff00/program.py:31\n";
        let va = Verdict::from_stderr(VerdictKind::CompilerCrash, "exit 1".into(), a);
        let vb = Verdict::from_stderr(VerdictKind::CompilerCrash, "exit 1".into(), b);
        assert_eq!(va.fingerprint, vb.fingerprint);
        assert_eq!(va.fingerprint, "CompilerCrash: RuntimeError: bad tensor at 0x? in <path>:?");
    }

    #[test]
    fn kinds_separate_fingerprints() {
        let hang = Verdict::from_stderr(VerdictKind::CompilerHang, "timeout".into(), "");
        let crash = Verdict::from_stderr(VerdictKind::RunCrash, "exit 1".into(), "");
        assert_ne!(hang.fingerprint, crash.fingerprint);
        assert_eq!(Verdict::inconsistent(0, "a".into()).fingerprint, Verdict::inconsistent(0, "b".into()).fingerprint);
        assert_ne!(Verdict::inconsistent(0, "a".into()).fingerprint, Verdict::inconsistent(1, "a".into()).fingerprint);
    }

    #[test]
    fn error_line_prefers_exception_names() {
        assert_eq!(error_line("x\nValueError: nope\nexiting\n").unwrap(), "ValueError: nope");
        assert_eq!(error_line("just text\n").unwrap(), "just text");
        assert_eq!(error_line("\n\n"), None);
    }
}
