"""``.lcp.json`` instance files.

Floats are written with Python's shortest round-trip representation, so a
save/load cycle reproduces every float64 bit for bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..operators import Fidelity, MatVecOperator
from .lcp import InstanceError, LcpInstance, generate_instance, scheme_from_dict
from .mobility import model_from_dict

FORMAT_VERSION = 1
SUFFIX = ".lcp.json"


class SchemaError(InstanceError):
    """Malformed instance file; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def to_dict(inst: LcpInstance, include_dense: bool = True) -> dict:
    d = {
        "version": FORMAT_VERSION,
        "n": int(inst.n),
        "b": [float(v) for v in inst.b],
    }
    if include_dense and inst.dense_A is not None:
        d["dense_A"] = inst.dense_A.tolist()
    if inst.low_scheme is not None:
        low = {"scheme": inst.low_scheme.tag, "params": inst.low_scheme.params()}
        if include_dense and inst.dense_A_low is not None:
            low["dense"] = inst.dense_A_low.tolist()
        d["lowfi"] = low
    d["generator"] = dict(inst.generator)
    d["L"] = _num(inst.L)
    d["mu"] = _num(inst.mu)
    d["cost_ratio"] = float(inst.cost_ratio)
    return d


def dumps(inst: LcpInstance, include_dense: bool = True) -> str:
    return json.dumps(to_dict(inst, include_dense), allow_nan=False, separators=(",", ":")) + "\n"


def serialize(inst: LcpInstance, path, include_dense: bool = True) -> Path:
    path = Path(path)
    path.write_text(dumps(inst, include_dense), encoding="utf-8")
    return path


def _require(d: dict, key: str, kind, where: str = ""):
    path = f"{where}.{key}" if where else key
    if key not in d:
        raise SchemaError(path, "missing field")
    v = d[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(path, "expected a number")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise SchemaError(path, "expected an integer")
        return v
    if not isinstance(v, kind):
        raise SchemaError(path, f"expected {kind.__name__}")
    return v


def _vector(v, n: int, path: str) -> np.ndarray:
    if not isinstance(v, list) or len(v) != n:
        raise SchemaError(path, f"expected a list of {n} numbers")
    try:
        out = np.array(v, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, "non-numeric entry") from exc
    if out.shape != (n,):
        raise SchemaError(path, f"expected a list of {n} numbers")
    return out


def _matrix(v, n: int, path: str) -> np.ndarray:
    if not isinstance(v, list) or len(v) != n:
        raise SchemaError(path, f"expected {n} rows")
    rows = [_vector(r, n, f"{path}[{k}]") for k, r in enumerate(v)]
    return np.array(rows, dtype=np.float64).reshape(n, n)


def from_dict(d: dict) -> LcpInstance:
    if not isinstance(d, dict):
        raise SchemaError("$", "expected an object")
    version = _require(d, "version", int)
    if version != FORMAT_VERSION:
        raise SchemaError("version", f"unsupported version {version} (expected {FORMAT_VERSION})")
    n = _require(d, "n", int)
    if n < 0:
        raise SchemaError("n", "must be nonnegative")
    b = _vector(_require(d, "b", list), n, "b")
    cost_ratio = _require(d, "cost_ratio", float)
    generator = _require(d, "generator", dict)
    L = d.get("L")
    mu = d.get("mu")
    L = float("nan") if L is None else _require(d, "L", float)
    mu = float("nan") if mu is None else _require(d, "mu", float)

    if "dense_A" in d:
        dense = _matrix(d["dense_A"], n, "dense_A")
        A_high = MatVecOperator.from_dense(dense, Fidelity.HIGH, name="dense")
        regenerated = None
    else:
        regenerated = _regenerate(generator)
        if regenerated.n != n:
            raise SchemaError("generator", "regenerated instance does not match n")
        A_high, dense = regenerated.A_high, regenerated.dense_A

    inst = LcpInstance(
        n=n, b=b, A_high=A_high, dense_A=A_high.dense, L=L, mu=mu,
        cost_ratio=cost_ratio, seed=int(generator.get("seed", 0)), generator=dict(generator),
    )
    if regenerated is not None:
        inst.config, inst.contacts, inst.model = regenerated.config, regenerated.contacts, regenerated.model

    if "lowfi" in d:
        low = _require(d, "lowfi", dict)
        tag = _require(low, "scheme", str, "lowfi")
        params = _require(low, "params", dict, "lowfi")
        try:
            scheme = scheme_from_dict(tag, params)
        except KeyError as exc:
            raise SchemaError(f"lowfi.params.{exc.args[0]}", "missing field") from exc
        except InstanceError as exc:
            raise SchemaError("lowfi.scheme", str(exc)) from exc
        if "dense" in low:
            dense_low = _matrix(low["dense"], n, "lowfi.dense")
            inst.A_low = MatVecOperator.from_dense(dense_low, Fidelity.LOW, name=tag)
            inst.dense_A_low = inst.A_low.dense
            inst.low_scheme = scheme
        else:
            inst = inst.with_low_fidelity(scheme)
    return inst


def _regenerate(gen: dict) -> LcpInstance:
    try:
        return generate_instance(
            m=int(gen["m"]), seed=int(gen["seed"]), model=model_from_dict(gen["model"]),
            dx=float(gen["dx"]), eps_x=float(gen["eps_x"]), dt=float(gen.get("dt", 1e-2)),
            max_regenerations=1,
        )
    except KeyError as exc:
        raise SchemaError(f"generator.{exc.args[0]}", "missing field (needed without dense_A)") from exc


def loads(text: str) -> LcpInstance:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from exc
    return from_dict(d)


def deserialize(path) -> LcpInstance:
    return loads(Path(path).read_text(encoding="utf-8"))
