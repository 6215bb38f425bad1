"""Run a dynfuzz case directory under PyTorch.

    python3 dynfuzz_runner.py --case <dir> --mode eager|compiled --out <file>

Compiled mode wraps ``f`` with ``torch.compile``; the backend string comes
from ``--backend`` or ``$DYNFUZZ_COMPILE_BACKEND`` and is passed through
verbatim. ``__COMPILE_OK__`` is printed once the compiled callable exists.
"""

import argparse
import importlib.util
import json
import os
import sys

import numpy as np
import torch

SENTINEL = "__COMPILE_OK__"
DTYPES = {"f32": torch.float32, "f64": torch.float64, "i64": torch.int64, "bool": torch.bool}
NAMES = {v: k for k, v in DTYPES.items()}


def parse_float(x):
    return float(x) if isinstance(x, str) else x


def load_archive(path):
    with open(path) as fh:
        doc = json.load(fh)
    out = {}
    for name, t in doc["tensors"].items():
        data = t["data"]
        if t["dtype"] == "f32":
            arr = np.array([np.float32(x) for x in data], dtype=np.float32)
        elif t["dtype"] == "f64":
            arr = np.array([parse_float(x) for x in data], dtype=np.float64)
        elif t["dtype"] == "i64":
            arr = np.array(data, dtype=np.int64)
        else:
            arr = np.array(data, dtype=np.bool_)
        out[name] = torch.from_numpy(arr.reshape(t["shape"]))
    return out


def fmt(x, dtype):
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    # Shortest round-trip spelling at the tensor's own width.
    return np.format_float_positional(dtype(x), unique=True, trim="-")


def dump_archive(tensors, path):
    doc = {}
    for name, t in tensors.items():
        t = t.detach().cpu().contiguous()
        kind = NAMES[t.dtype]
        flat = t.reshape(-1).numpy()
        if kind == "f32":
            data = [fmt(x, np.float32) for x in flat]
        elif kind == "f64":
            data = [fmt(x, np.float64) for x in flat]
        elif kind == "i64":
            data = [int(x) for x in flat]
        else:
            data = [bool(x) for x in flat]
        doc[name] = {"dtype": kind, "shape": list(t.shape), "data": data}
    with open(path, "w") as fh:
        json.dump({"tensors": doc}, fh)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--case", required=True)
    ap.add_argument("--mode", choices=["eager", "compiled"], required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--backend", default=os.environ.get("DYNFUZZ_COMPILE_BACKEND", "inductor"))
    args = ap.parse_args()

    with open(os.path.join(args.case, "meta.json")) as fh:
        meta = json.load(fh)
    inputs = load_archive(os.path.join(args.case, "inputs.json"))
    spec = importlib.util.spec_from_file_location("case_program", os.path.join(args.case, "program.py"))
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    f = module.f
    if args.mode == "compiled":
        torch._dynamo.reset()
        f = torch.compile(f, backend=args.backend)
        print(SENTINEL, flush=True)
    outs = f(*[inputs[name] for name in meta["param_order"]])
    if len(outs) != meta["return_arity"]:
        raise RuntimeError(f"expected {meta['return_arity']} outputs, got {len(outs)}")
    dump_archive({str(i): t for i, t in enumerate(outs)}, args.out)


if __name__ == "__main__":
    sys.exit(main())
