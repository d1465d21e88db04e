"""JSON model files for the generic engines.

A model file carries everything one run needs: the interaction terms as
dense complex matrices, the initial system and environment mixtures, an
optional explicit environment operator for the two-sided process, and
optional configured rates.  Complex scalars are stored as [re, im]
pairs so the files stay valid JSON and diff cleanly.

Validation errors carry the JSON path of the offending node so a
malformed file fails with its location, not a stack trace.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .engine import Form2Config, InteractionHamiltonian, InteractionTerm
from .numerics import as_cmatrix, kron
from .oracle import ComposedModel

__all__ = [
    "FORMAT_TAG",
    "ModelFormatError",
    "ModelSpec",
    "load_model",
    "load_model_text",
    "load_bundled",
    "bundled_names",
    "resolve_model",
    "save_model",
    "model_to_dict",
]

FORMAT_TAG = "spinpdp-model/1"
CONSISTENCY_TOL = 1e-10


class ModelFormatError(ValueError):
    """Malformed model file; `location` names the offending JSON path."""

    def __init__(self, location: str, message: str):
        self.location = location
        self.reason = message
        super().__init__(f"{location}: {message}")


def _fail(location: str, message: str) -> "ModelFormatError":
    raise ModelFormatError(location, message)


def _complex_scalar(node, loc: str) -> complex:
    if (
        not isinstance(node, (list, tuple))
        or len(node) != 2
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in node)
    ):
        _fail(loc, "complex entries must be [re, im] number pairs")
    if not all(math.isfinite(x) for x in node):
        _fail(loc, "complex entries must be finite")
    return complex(node[0], node[1])


def _vector(node, loc: str, dim: int) -> np.ndarray:
    if not isinstance(node, list) or len(node) != dim:
        _fail(loc, f"expected a vector of {dim} [re, im] pairs")
    return np.array(
        [_complex_scalar(e, f"{loc}[{i}]") for i, e in enumerate(node)], dtype=np.complex128
    )


def _matrix(node, loc: str, rows: int, cols: int) -> np.ndarray:
    if not isinstance(node, list) or len(node) != rows:
        _fail(loc, f"expected a {rows}x{cols} matrix (list of {rows} rows)")
    out = np.empty((rows, cols), dtype=np.complex128)
    for i, row in enumerate(node):
        if not isinstance(row, list) or len(row) != cols:
            _fail(f"{loc}[{i}]", f"expected a row of {cols} [re, im] pairs")
        for j, e in enumerate(row):
            out[i, j] = _complex_scalar(e, f"{loc}[{i}][{j}]")
    return out


def _mixture(node, loc: str, dim: int) -> tuple[tuple[float, np.ndarray], ...]:
    if not isinstance(node, list) or not node:
        _fail(loc, "expected a nonempty list of {weight, state} entries")
    entries = []
    for i, item in enumerate(node):
        here = f"{loc}[{i}]"
        if not isinstance(item, dict) or set(item) != {"weight", "state"}:
            _fail(here, "each mixture entry needs exactly the keys 'weight' and 'state'")
        w = item["weight"]
        if not isinstance(w, (int, float)) or isinstance(w, bool) or not math.isfinite(w) or w < 0:
            _fail(f"{here}.weight", "weight must be a finite number >= 0")
        state = _vector(item["state"], f"{here}.state", dim)
        norm = float(np.linalg.norm(state))
        if abs(norm - 1.0) > CONSISTENCY_TOL:
            _fail(f"{here}.state", f"state norm {norm:.12f} differs from 1 beyond {CONSISTENCY_TOL:.0e}")
        entries.append((float(w), state))
    total = math.fsum(w for w, _ in entries)
    if abs(total - 1.0) > CONSISTENCY_TOL:
        _fail(loc, f"weights sum to {total:.12f}, expected 1 within {CONSISTENCY_TOL:.0e}")
    return tuple(entries)


def _mixture_density(mixture: tuple[tuple[float, np.ndarray], ...]) -> np.ndarray:
    dim = mixture[0][1].shape[0]
    rho = np.zeros((dim, dim), dtype=np.complex128)
    for w, v in mixture:
        rho += w * np.outer(v, v.conj())
    return rho


@dataclass(frozen=True)
class ModelSpec:
    """Validated in-memory form of one model file."""

    name: str
    hamiltonian: InteractionHamiltonian
    system_mixture: tuple[tuple[float, np.ndarray], ...]
    env_mixture: tuple[tuple[float, np.ndarray], ...]
    env_matrix: np.ndarray | None
    form2_rates: np.ndarray | None
    default_form: int

    @property
    def dS(self) -> int:
        return self.hamiltonian.dS

    @property
    def dE(self) -> int:
        return self.hamiltonian.dE

    def system_density(self) -> np.ndarray:
        return _mixture_density(self.system_mixture)

    def env_density(self) -> np.ndarray:
        return _mixture_density(self.env_mixture)

    def env_operator(self) -> np.ndarray:
        """Initial environment operator for the two-sided process."""
        if self.env_matrix is not None:
            return self.env_matrix.copy()
        return self.env_density()

    def form2_config(self) -> Form2Config:
        if self.form2_rates is None:
            raise ValueError(f"model '{self.name}' carries no form-2 rates")
        return Form2Config(const_rates=self.form2_rates)

    def composed(self) -> ComposedModel:
        return ComposedModel(self.hamiltonian.total_matrix(), dS=self.dS, dE=self.dE)

    def initial_density(self) -> np.ndarray:
        return kron(self.system_density(), self.env_density())


def _decode(doc, source: str) -> ModelSpec:
    if not isinstance(doc, dict):
        _fail("<root>", "model file must be a JSON object")
    tag = doc.get("format")
    if tag != FORMAT_TAG:
        _fail("format", f"expected format tag '{FORMAT_TAG}', got {tag!r}")
    known = {
        "format", "name", "dims", "form", "terms",
        "system_mixture", "env_mixture", "env_matrix", "form2_rates",
    }
    for key in doc:
        if key not in known:
            _fail(key, "unknown key")

    name = doc.get("name", source)
    if not isinstance(name, str) or not name:
        _fail("name", "name must be a nonempty string")

    dims = doc.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != 2
        or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims)
    ):
        _fail("dims", "dims must be [dS, dE] with positive integers")
    ds, de = dims

    form = doc.get("form", 1)
    if form not in (1, 2):
        _fail("form", "form must be 1 or 2")

    raw_terms = doc.get("terms")
    if not isinstance(raw_terms, list) or not raw_terms:
        _fail("terms", "expected a nonempty list of {system, env} operator pairs")
    terms = []
    for i, item in enumerate(raw_terms):
        here = f"terms[{i}]"
        if not isinstance(item, dict) or set(item) != {"system", "env"}:
            _fail(here, "each term needs exactly the keys 'system' and 'env'")
        a = _matrix(item["system"], f"{here}.system", ds, ds)
        b = _matrix(item["env"], f"{here}.env", de, de)
        terms.append(InteractionTerm(a_op=a, b_op=b))
    try:
        h = InteractionHamiltonian(terms=tuple(terms), dS=ds, dE=de)
    except ValueError as exc:
        _fail("terms", str(exc))

    if "system_mixture" not in doc:
        _fail("system_mixture", "missing")
    if "env_mixture" not in doc:
        _fail("env_mixture", "missing")
    sys_mix = _mixture(doc["system_mixture"], "system_mixture", ds)
    env_mix = _mixture(doc["env_mixture"], "env_mixture", de)

    env_matrix = None
    if doc.get("env_matrix") is not None:
        env_matrix = _matrix(doc["env_matrix"], "env_matrix", de, de)
        defect = float(np.abs(env_matrix - _mixture_density(env_mix)).max())
        if defect > CONSISTENCY_TOL:
            _fail(
                "env_matrix",
                f"differs from the env_mixture density by {defect:.2e} "
                f"(tolerance {CONSISTENCY_TOL:.0e})",
            )

    form2_rates = None
    if doc.get("form2_rates") is not None:
        node = doc["form2_rates"]
        n = len(terms)
        if not isinstance(node, list) or len(node) != n:
            _fail("form2_rates", f"expected {n} [rate_left, rate_right] pairs, one per term")
        rates = np.empty((n, 2), dtype=np.float64)
        for i, pair in enumerate(node):
            here = f"form2_rates[{i}]"
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in pair)
            ):
                _fail(here, "expected a [rate_left, rate_right] number pair")
            if not all(math.isfinite(x) and x >= 0 for x in pair):
                _fail(here, "rates must be finite and >= 0")
            rates[i] = pair
        form2_rates = rates

    if form == 2 and form2_rates is None:
        _fail("form", "form 2 requires form2_rates")

    return ModelSpec(
        name=name,
        hamiltonian=h,
        system_mixture=sys_mix,
        env_mixture=env_mix,
        env_matrix=env_matrix,
        form2_rates=form2_rates,
        default_form=form,
    )


def load_model_text(text: str, source: str = "<string>") -> ModelSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return _decode(doc, source)


def load_model(path) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return load_model_text(text, source=str(path))


def bundled_names() -> list[str]:
    root = resources.files("spinpdp").joinpath("models")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".model"))


def load_bundled(name: str) -> ModelSpec:
    if not name.endswith(".model"):
        name += ".model"
    res = resources.files("spinpdp").joinpath("models").joinpath(name)
    if not res.is_file():
        raise FileNotFoundError(f"no bundled model named {name!r}; have {bundled_names()}")
    return load_model_text(res.read_text(encoding="utf-8"), source=f"bundled:{name}")


def resolve_model(ref: str) -> ModelSpec:
    """Load a model from a filesystem path, falling back to bundled names."""
    import os

    if os.path.exists(ref):
        return load_model(ref)
    try:
        return load_bundled(ref)
    except FileNotFoundError:
        raise FileNotFoundError(
            f"model file {ref!r} not found on disk and not a bundled name {bundled_names()}"
        ) from None


def _encode_matrix(m: np.ndarray) -> list:
    cm = as_cmatrix(m)
    return [[[float(e.real), float(e.imag)] for e in row] for row in cm]


def _encode_vector(v: np.ndarray) -> list:
    return [[float(e.real), float(e.imag)] for e in np.asarray(v, dtype=np.complex128)]


def _encode_mixture(mix) -> list:
    return [{"weight": float(w), "state": _encode_vector(v)} for w, v in mix]


def model_to_dict(spec: ModelSpec) -> dict:
    doc = {
        "format": FORMAT_TAG,
        "name": spec.name,
        "dims": [spec.dS, spec.dE],
        "form": spec.default_form,
        "terms": [
            {"system": _encode_matrix(t.a_op), "env": _encode_matrix(t.b_op)}
            for t in spec.hamiltonian.terms
        ],
        "system_mixture": _encode_mixture(spec.system_mixture),
        "env_mixture": _encode_mixture(spec.env_mixture),
    }
    if spec.env_matrix is not None:
        doc["env_matrix"] = _encode_matrix(spec.env_matrix)
    if spec.form2_rates is not None:
        doc["form2_rates"] = [[float(a), float(b)] for a, b in spec.form2_rates]
    return doc


def save_model(spec: ModelSpec, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(model_to_dict(spec), f, indent=1)
        f.write("\n")
