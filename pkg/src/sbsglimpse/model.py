"""Pure-dephasing model description, validation and file I/O.

Units: hbar = 1. Pointer energies and coupling eigenvalues are angular
frequencies; times are in their inverse.

The Hamiltonian is

    H = sum_i eps_i |i><i|  +  sum_i |i><i| (x) sum_k V_k^i

with one Hermitian coupling ``V_k^i`` per pointer state ``i`` and
environment ``k``. Environments never couple to each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import qcore

HERMITIAN_TOL = qcore.DEFAULT_TOL.hermitian


class InvalidModelError(ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid model: " + "; ".join(self.violations))


class ModelFileError(ValueError):
    """The model document could not be read or does not match the schema."""


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    dim: int
    couplings: tuple[np.ndarray, ...]
    rho0: np.ndarray

    @classmethod
    def from_arrays(cls, couplings, rho0) -> "EnvironmentSpec":
        cs = tuple(np.array(v, dtype=complex) for v in couplings)
        r = np.array(rho0, dtype=complex)
        return cls(dim=r.shape[0], couplings=cs, rho0=r)

    @classmethod
    def from_eig(cls, couplings, eigvals, eigvecs) -> "EnvironmentSpec":
        """Build from the initial state's spectral data; ``eigvecs`` holds eigenvectors as columns."""
        p = np.asarray(eigvals, dtype=float)
        u = np.asarray(eigvecs, dtype=complex)
        return cls.from_arrays(couplings, (u * p) @ u.conj().T)

    @cached_property
    def coupling_eigh(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Eigendecompositions of the couplings, reused for every propagator."""
        out = []
        for v in self.couplings:
            if not np.any(v):
                out.append((np.zeros(self.dim), np.eye(self.dim, dtype=complex)))
            else:
                out.append(np.linalg.eigh(0.5 * (v + v.conj().T)))
        return tuple(out)

    def propagator(self, i: int, t: float) -> np.ndarray:
        evals, evecs = self.coupling_eigh[i]
        return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


@dataclass(frozen=True)
class ScanSettings:
    t_max: float = 10 * math.pi
    grid_points: int = 4096
    tol_orth: float = 1e-8
    tol_sep: float = 1e-10
    refine_iters: int = 60

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.grid_points < 1 or self.refine_iters < 1:
            raise ValueError("grid_points and refine_iters must be positive")
        for name in ("tol_orth", "tol_sep"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v}")


@dataclass(frozen=True, eq=False)
class DephasingModel:
    d_Q: int
    eps: np.ndarray
    amplitudes: np.ndarray
    environments: tuple[EnvironmentSpec, ...]
    scan: ScanSettings | None = field(default=None)

    @classmethod
    def build(cls, eps, amplitudes, environments, scan=None, normalize=False) -> "DephasingModel":
        a = np.array(amplitudes, dtype=complex).reshape(-1)
        if normalize:
            a = qcore.ket(a)
        return cls(
            d_Q=len(a),
            eps=np.array(eps, dtype=float).reshape(-1),
            amplitudes=a,
            environments=tuple(environments),
            scan=scan,
        )

    @property
    def n_env(self) -> int:
        return len(self.environments)

    @property
    def env_dims(self) -> list[int]:
        return [e.dim for e in self.environments]

    @property
    def dims(self) -> list[int]:
        return [self.d_Q] + self.env_dims

    def amplitudes_at(self, t: float) -> np.ndarray:
        return self.amplitudes * np.exp(-1j * self.eps * t)

    def with_environments(self, keep: Sequence[int]) -> "DephasingModel":
        return DephasingModel(self.d_Q, self.eps, self.amplitudes,
                              tuple(self.environments[k] for k in keep), self.scan)

    def equals(self, other: "DephasingModel") -> bool:
        """Bit-exact comparison of every array in the two models."""
        if (self.d_Q, self.n_env, self.scan) != (other.d_Q, other.n_env, other.scan):
            return False
        if not (np.array_equal(self.eps, other.eps) and np.array_equal(self.amplitudes, other.amplitudes)):
            return False
        for e, f in zip(self.environments, other.environments):
            if e.dim != f.dim or not np.array_equal(e.rho0, f.rho0) or len(e.couplings) != len(f.couplings):
                return False
            if not all(np.array_equal(u, v) for u, v in zip(e.couplings, f.couplings)):
                return False
        return True


def validate(model: DephasingModel, tol: float = HERMITIAN_TOL) -> list[str]:
    """Return the list of violations; an empty list means the model is admissible."""
    out = []
    if model.d_Q < 1:
        out.append("d_Q must be positive")
    eps = np.asarray(model.eps)
    if eps.shape != (model.d_Q,):
        out.append(f"dimension mismatch: eps has {eps.size} entries, d_Q = {model.d_Q}")
    elif not (np.isrealobj(eps) or np.allclose(np.imag(eps), 0)) or not np.all(np.isfinite(eps)):
        out.append("eps must be finite real numbers")
    a = np.asarray(model.amplitudes)
    if a.shape != (model.d_Q,):
        out.append(f"dimension mismatch: amplitudes has {a.size} entries, d_Q = {model.d_Q}")
    elif abs(np.sum(np.abs(a) ** 2) - 1.0) > 1e-12:
        out.append("amplitudes not normalized")
    if not model.environments:
        out.append("model needs at least one environment")
    for k, env in enumerate(model.environments):
        where = f"environment {k}"
        if env.dim < 1:
            out.append(f"{where}: dim must be positive")
            continue
        if len(env.couplings) != model.d_Q:
            out.append(f"{where}: dimension mismatch: {len(env.couplings)} couplings for d_Q = {model.d_Q}")
        for i, v in enumerate(env.couplings):
            if v.shape != (env.dim, env.dim):
                out.append(f"{where}: dimension mismatch: V[{i}] has shape {v.shape}, expected {(env.dim, env.dim)}")
            elif not np.all(np.isfinite(v)):
                out.append(f"{where}: coupling V[{i}] has non-finite entries")
            elif not qcore.is_hermitian(v, tol):
                out.append(f"{where}: coupling not Hermitian (V[{i}])")
        r = env.rho0
        if r.shape != (env.dim, env.dim):
            out.append(f"{where}: dimension mismatch: rho0 has shape {r.shape}, expected {(env.dim, env.dim)}")
        elif not np.all(np.isfinite(r)):
            out.append(f"{where}: rho0 has non-finite entries")
        else:
            if not qcore.is_positive_semidefinite(r, tol):
                out.append(f"{where}: rho0 not positive semidefinite")
            if not qcore.is_trace_one(r, tol):
                out.append(f"{where}: rho0 trace not one")
    return out


def require_valid(model: DephasingModel) -> None:
    # models are treated as immutable, so the verdict is cached on the instance
    problems = model.__dict__.get("_violations")
    if problems is None:
        problems = validate(model)
        object.__setattr__(model, "_violations", problems)
    if problems:
        raise InvalidModelError(problems)


def total_hamiltonian(model: DephasingModel) -> np.ndarray:
    """Full Hamiltonian on ``d_Q * prod(d_k)`` dimensions (used by the direct-evolution oracle)."""
    require_valid(model)
    dims = model.env_dims
    d_env = int(np.prod(dims))
    h = np.kron(np.diag(model.eps).astype(complex), np.eye(d_env))
    for i in range(model.d_Q):
        env_part = np.zeros((d_env, d_env), dtype=complex)
        for k, env in enumerate(model.environments):
            factors = [np.eye(d) for d in dims]
            factors[k] = env.couplings[i]
            env_part += qcore.tensor(*factors)
        pointer = np.zeros((model.d_Q, model.d_Q))
        pointer[i, i] = 1.0
        h += np.kron(pointer, env_part)
    return h


def random_model(seed: int, d_Q: int, env_dims: Sequence[int], asymmetric: bool = False,
                 separable: bool = False, amplitudes=None, scale: float = 1.0) -> DephasingModel:
    """Draw a reproducible valid model.

    ``asymmetric`` zeroes every ``V_k^0``. ``separable`` draws all couplings of
    an environment diagonal in one random basis and the initial environment
    state diagonal in that same basis, so the evolution never entangles.
    """
    rng = np.random.default_rng(seed)
    eps = rng.uniform(-1.0, 1.0, d_Q) * scale
    if amplitudes is None:
        a = rng.standard_normal(d_Q) + 1j * rng.standard_normal(d_Q)
    else:
        a = np.asarray(amplitudes, dtype=complex)
    envs = []
    for d in env_dims:
        if separable:
            w = qcore.random_unitary(d, rng)
            couplings = [(w * rng.uniform(-2.0, 2.0, d) * scale) @ w.conj().T for _ in range(d_Q)]
            p = rng.dirichlet(np.ones(d))
            rho0 = (w * p) @ w.conj().T
            couplings = [0.5 * (v + v.conj().T) for v in couplings]
            rho0 = 0.5 * (rho0 + rho0.conj().T)
        else:
            couplings = [qcore.random_hermitian(d, rng, scale) for _ in range(d_Q)]
            rho0 = qcore.random_density(d, rng)
        if asymmetric:
            couplings[0] = np.zeros((d, d), dtype=complex)
        envs.append(EnvironmentSpec.from_arrays(couplings, rho0))
    return DephasingModel.build(eps, a, envs, normalize=True)


def reference_model(p0: float = 0.3, amplitudes=None, t_max: float = 10 * math.pi,
                    grid_points: int = 4096) -> DephasingModel:
    """Qubit coupled to one qubit environment: V^0 = 0, V^1 = diag(0, 1), rho0 = diag(p0, 1 - p0)."""
    a = np.full(2, 1 / math.sqrt(2)) if amplitudes is None else np.asarray(amplitudes, dtype=complex)
    env = EnvironmentSpec.from_arrays([np.zeros((2, 2)), np.diag([0.0, 1.0])], np.diag([p0, 1 - p0]))
    return DephasingModel.build([0.0, 0.0], a, [env],
                                scan=ScanSettings(t_max=t_max, grid_points=grid_points))


# --------------------------------------------------------------------------
# model file format: JSON, complex numbers as [re, im]


def _schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("model_schema.json").read_text())


def _cplx(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def _pairs(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def model_from_dict(doc: dict) -> DephasingModel:
    """Build a model from a parsed document. Raises :class:`ModelFileError` on schema violations."""
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelFileError(f"schema violation at {path}: {exc.message}") from None
    try:
        envs = []
        for e in doc["environments"]:
            couplings = [_cplx(v) for v in e["V"]]
            r = e["rho0"]
            if isinstance(r, dict):
                env = EnvironmentSpec.from_eig(couplings, r["eigvals"], _cplx(r["eigvecs"]))
            else:
                env = EnvironmentSpec.from_arrays(couplings, _cplx(r))
            if env.dim != e["dim"]:
                raise ModelFileError(f"environment dim {e['dim']} does not match rho0 shape {env.rho0.shape}")
            envs.append(env)
        scan = ScanSettings(**doc["scan"]) if "scan" in doc else None
        model = DephasingModel(
            d_Q=int(doc["dQ"]),
            eps=np.asarray(doc["eps"], dtype=float),
            amplitudes=_cplx(doc["amplitudes"]).reshape(-1),
            environments=tuple(envs),
            scan=scan,
        )
    except (ValueError, TypeError, IndexError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(str(exc)) from None
    return model


def model_to_dict(model: DephasingModel) -> dict:
    doc = {
        "dQ": model.d_Q,
        "eps": [float(x) for x in model.eps],
        "amplitudes": _pairs(model.amplitudes),
        "environments": [
            {"dim": e.dim, "rho0": _pairs(e.rho0), "V": [_pairs(v) for v in e.couplings]}
            for e in model.environments
        ],
    }
    if model.scan is not None:
        s = model.scan
        doc["scan"] = {"t_max": s.t_max, "grid_points": s.grid_points, "tol_orth": s.tol_orth,
                       "tol_sep": s.tol_sep, "refine_iters": s.refine_iters}
    return doc


def load_model(path) -> DephasingModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)


def save_model(model: DephasingModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
