"""
File formats: problem JSON, result JSON and CSV tables.

Floats are written with 17 significant digits so that every exported
array re-imports bit for bit and repeated runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import is_dataclass
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np

from .discretization import DiscreteTriple
from .geometry import GeneratorSet, GeometryError
from .optimality import DualCertificate
from .paths import ContinuousPath, PathError
from .problem import (PerturbationField, ProblemError, ProblemSpec, QuadraticRunningCost,
                      QuadraticTerminalCost)

PathLike = Union[str, Path]

BUNDLED_DIR = Path(__file__).parent / "data"


def bundled_problem_path(name: str = "scalar_example") -> Path:
    return BUNDLED_DIR / f"{name}.json"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


class _FloatRepr(float):
    """Float whose JSON text has exactly the 17-significant-digit form."""

    def __repr__(self) -> str:
        return _fmt(self)


def to_jsonable(obj: Any) -> Any:
    """Convert numpy data, dataclasses and non-finite floats to JSON values.

    Infinite and NaN values become the strings "inf", "-inf" and "nan".
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if math.isnan(val):
            return "nan"
        if math.isinf(val):
            return "inf" if val > 0 else "-inf"
        return _FloatRepr(val)
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if is_dataclass(obj):
        return to_jsonable(vars(obj))
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class _Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        # the C encoder ignores float subclasses, so use the Python one
        indent = " " * self.indent if isinstance(self.indent, int) else self.indent
        return json.encoder._make_iterencode(
            {}, self.default, json.encoder.py_encode_basestring_ascii, indent,
            repr, self.key_separator, self.item_separator, self.sort_keys,
            self.skipkeys, _one_shot)(o, 0)


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), cls=_Encoder, indent=2, sort_keys=True) + "\n"


def write_json(obj: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ProblemError(f"file not found: {path}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"invalid JSON in {path}: {exc.msg} at line {exc.lineno}") from None


# problem files ----------------------------------------------------------

def _array(data: dict, key: str, prefix: str, ndim: int, required: bool = True):
    if key not in data:
        if required:
            raise ProblemError("missing field", f"{prefix}{key}")
        return None
    try:
        arr = np.asarray(data[key], dtype=float)
    except (TypeError, ValueError):
        raise ProblemError("must be numeric", f"{prefix}{key}") from None
    if ndim == 2:
        arr = np.atleast_2d(arr)
    elif ndim == 1:
        arr = np.atleast_1d(arr)
    if arr.ndim != ndim:
        raise ProblemError(f"expected a {ndim}-dimensional array", f"{prefix}{key}")
    if not np.all(np.isfinite(arr)):
        raise ProblemError("must be finite", f"{prefix}{key}")
    return arr


def _number(data: dict, key: str, prefix: str = "", default=None) -> float:
    if key not in data:
        if default is None:
            raise ProblemError("missing field", f"{prefix}{key}")
        return float(default)
    try:
        return float(data[key])
    except (TypeError, ValueError):
        raise ProblemError("must be a number", f"{prefix}{key}") from None


def _terminal_cost(data: dict, n: int):
    kind = data.get("type", "quadratic")
    if kind != "quadratic":
        raise ProblemError(f"unsupported type {kind!r}", "terminal_cost.type")
    Q = _array(data, "Q", "terminal_cost.", 2)
    target = _array(data, "target", "terminal_cost.", 1)
    if Q.shape != (n, n) or target.size != n:
        raise ProblemError(f"expected Q of shape ({n}, {n}) and target of length {n}", "terminal_cost")
    return QuadraticTerminalCost(Q, target)


def _running_cost(data: dict, n: int, d: int):
    kind = data.get("type", "quadratic_blocks")
    if kind == "quadratic_blocks":
        weights = data.get("weights", {})
        if not isinstance(weights, dict):
            raise ProblemError("must be an object", "running_cost.weights")
        try:
            return QuadraticRunningCost.from_blocks(n, d, {k: float(v) for k, v in weights.items()},
                                                   _number(data, "c0", "running_cost.", 0.0))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ProblemError):
                raise
            raise ProblemError("weights must be numbers", "running_cost.weights") from None
    if kind == "quadratic":
        H = _array(data, "H", "running_cost.", 2)
        g = _array(data, "g", "running_cost.", 1, required=False)
        return QuadraticRunningCost(n, d, H, g, _number(data, "c0", "running_cost.", 0.0))
    raise ProblemError(f"unsupported type {kind!r}", "running_cost.type")


def problem_from_dict(data: dict) -> ProblemSpec:
    """Build and validate a :class:`ProblemSpec` from its JSON form.

    See docs/schema.md for the layout.  Errors carry the dotted path of
    the offending field.
    """
    if not isinstance(data, dict):
        raise ProblemError("top level must be an object")
    gens = _array(data, "generators", "", 2)
    try:
        C = GeneratorSet(gens)
    except GeometryError as exc:
        raise ProblemError(str(exc), "generators") from None
    n = C.n
    pert = data.get("perturbation")
    if not isinstance(pert, dict):
        raise ProblemError("missing or not an object", "perturbation")
    A = _array(pert, "A", "perturbation.", 2)
    B = _array(pert, "B", "perturbation.", 2)
    c = _array(pert, "c", "perturbation.", 1, required=False)
    if A.shape != (n, n):
        raise ProblemError(f"expected shape ({n}, {n})", "perturbation.A")
    if B.shape[0] != n:
        raise ProblemError(f"expected {n} rows", "perturbation.B")
    if c is not None and c.size != n:
        raise ProblemError(f"expected length {n}", "perturbation.c")
    f = PerturbationField(A, B, c, lipschitz=_number(pert, "lipschitz_K", "perturbation."),
                          growth=_number(pert, "growth_M", "perturbation."))
    d = f.d
    if "terminal_cost" not in data:
        raise ProblemError("missing field", "terminal_cost")
    phi = _terminal_cost(data["terminal_cost"], n)
    ell = _running_cost(data.get("running_cost", {}), n, d)
    reference = None
    if "reference" in data:
        try:
            reference = ContinuousPath.from_dict(data["reference"])
        except (KeyError, PathError, ValueError) as exc:
            raise ProblemError(str(exc), "reference") from None
        if reference.n != n or reference.d != d:
            raise ProblemError("reference dimensions disagree with the problem", "reference")
    u0 = _array(data, "u0", "", 1, required=False)
    return ProblemSpec(C, f, _array(data, "x0", "", 1), _number(data, "r"), _number(data, "T"),
                       _number(data, "tau", default=0.0), phi, ell, u0=u0, reference=reference,
                       name=str(data.get("name", "problem")),
                       ilm_epsilon=_number(data, "ilm_epsilon", default=0.5))


def load_problem(path: PathLike) -> ProblemSpec:
    """Read a problem JSON file; see :func:`problem_from_dict`."""
    return problem_from_dict(read_json(path))


def problem_to_dict(spec: ProblemSpec) -> dict:
    """Inverse of :func:`problem_from_dict` for catalog costs and affine drifts."""
    if spec.f.kind != "affine":
        raise ProblemError("only affine drifts can be exported", "perturbation")
    phi, ell = spec.terminal_cost, spec.running_cost
    if not isinstance(phi, QuadraticTerminalCost) or not isinstance(ell, QuadraticRunningCost):
        raise ProblemError("only quadratic costs can be exported")
    out = {"name": spec.name, "generators": spec.C.matrix, "x0": spec.x0, "r": spec.r, "T": spec.T,
           "tau": spec.tau, "ilm_epsilon": spec.ilm_epsilon,
           "perturbation": {"A": spec.f.A, "B": spec.f.B, "c": spec.f.c,
                            "lipschitz_K": spec.f.lipschitz, "growth_M": spec.f.growth},
           "terminal_cost": {"type": "quadratic", "Q": phi.Q, "target": phi.target},
           "running_cost": {"type": "quadratic", "H": ell.H, "g": ell.g, "c0": ell.c0}}
    if spec.u0 is not None:
        out["u0"] = spec.u0
    if isinstance(spec.reference, ContinuousPath):
        out["reference"] = spec.reference.to_dict()
    return out


# results ------------------------------------------------------------------

def save_triple(z: DiscreteTriple, path: PathLike) -> Path:
    return write_json(z.to_dict(), path)


def load_triple(path: PathLike) -> DiscreteTriple:
    data = read_json(path)
    for key in ("z_opt", "z"):
        if key in data:
            data = data[key]
            break
    return DiscreteTriple.from_dict(data)


def save_certificate(cert: DualCertificate, path: PathLike) -> Path:
    return write_json(cert.to_dict(), path)


def load_certificate(path: PathLike) -> DualCertificate:
    data = read_json(path)
    if "certificate" in data:
        data = data["certificate"]
    return DualCertificate.from_dict(data)


def save_path(path_obj: ContinuousPath, path: PathLike) -> Path:
    return write_json(path_obj.to_dict(), path)


def load_path(path: PathLike) -> ContinuousPath:
    return ContinuousPath.from_dict(read_json(path))


# CSV ------------------------------------------------------------------------

def write_trajectory_csv(obj, path: PathLike) -> Path:
    """Write columns t, x_1..x_n, u_1..u_n, a_1..a_d, one row per node.

    ``obj`` is a :class:`DiscreteTriple` or a :class:`ContinuousPath`.
    """
    if isinstance(obj, DiscreteTriple):
        times, x, u, a = obj.mesh.times, obj.x, obj.u, obj.a
    else:
        times, x, u, a = obj.times, obj.x, obj.u, obj.a
    n, d = x.shape[1], a.shape[1]
    header = (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(n)]
              + [f"a_{i + 1}" for i in range(d)])
    rows = [[t, *xr, *ur, *ar] for t, xr, ur, ar in zip(times, x, u, a)]
    return write_csv(header, rows, path)


def write_csv(header: Iterable[str], rows: Iterable[Iterable], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path: PathLike):
    """Return (header, rows) with numeric cells converted to float."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader]
    return header, rows


CONVERGENCE_COLUMNS = ["k", "J_k", "w12_gap_sum", "initial_u_rate", "u_rate_variation"]


def write_convergence_csv(study, path: PathLike) -> Path:
    return write_csv(CONVERGENCE_COLUMNS, study.as_table(), path)
