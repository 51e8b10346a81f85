"""Dense complex linear algebra kernels.

Operators are plain ``numpy`` complex arrays; nothing here mutates its inputs.
Subsystem ordering follows ``numpy.kron``: the first factor is the most
significant index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """Default numerical tolerances, overridable per call."""

    hermitian: float = 1e-10
    unitary: float = 1e-10
    operator_eq: float = 1e-9
    orthogonality: float = 1e-8


DEFAULT_TOL = Tolerances()


def as_operator(a) -> np.ndarray:
    op = np.asarray(a, dtype=complex)
    if op.ndim != 2:
        raise ValueError(f"operator must be 2-dimensional, got shape {op.shape}")
    return op


def ket(amplitudes, normalize: bool = True) -> np.ndarray:
    """Return a 1-d complex state vector, normalized unless told otherwise."""
    v = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if v.size == 0:
        raise ValueError("state vector must be nonempty")
    if normalize:
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        v = v / norm
    return v


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a, tol: float = DEFAULT_TOL.hermitian) -> bool:
    a = as_operator(a)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def is_unitary(a, tol: float = DEFAULT_TOL.unitary) -> bool:
    a = as_operator(a)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a @ a.conj().T - np.eye(a.shape[0]))) <= tol)


def is_positive_semidefinite(a, tol: float = DEFAULT_TOL.hermitian) -> bool:
    a = as_operator(a)
    if not is_hermitian(a, tol):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (a + a.conj().T)).min() >= -tol)


def is_trace_one(a, tol: float = DEFAULT_TOL.hermitian) -> bool:
    return bool(abs(np.trace(as_operator(a)) - 1.0) <= tol)


def is_density_operator(a, tol: float = DEFAULT_TOL.hermitian) -> bool:
    return is_positive_semidefinite(a, tol) and is_trace_one(a, tol)


def tensor(*ops) -> np.ndarray:
    """Kronecker product of one or more operators (or vectors)."""
    if not ops:
        raise ValueError("tensor needs at least one factor")
    return reduce(np.kron, (np.asarray(o, dtype=complex) for o in ops))


def _check_dims(n: int, dims: Sequence[int]) -> list[int]:
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise ValueError(f"subsystem dimensions must be positive, got {dims}")
    if int(np.prod(dims)) != n:
        raise ValueError(f"dimension mismatch: dims {dims} multiply to {int(np.prod(dims))}, operator has {n}")
    return dims


def partial_trace(op, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    The kept subsystems stay in their original order.
    """
    op = as_operator(op)
    if op.shape[0] != op.shape[1]:
        raise ValueError("partial_trace needs a square operator")
    dims = _check_dims(op.shape[0], dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise ValueError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    t = op.reshape(dims + dims)
    # trace the highest indices first so the remaining axis numbers stay valid
    for ax in sorted(set(range(n)) - set(keep), reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=ax, axis2=ax + m)
    d = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d, d)


def partial_transpose(op, dims: Sequence[int], sides: Iterable[int]) -> np.ndarray:
    op = as_operator(op)
    dims = _check_dims(op.shape[0], dims)
    n = len(dims)
    t = op.reshape(dims + dims)
    perm = list(range(2 * n))
    for s in sides:
        perm[s], perm[s + n] = perm[s + n], perm[s]
    return t.transpose(perm).reshape(op.shape)


def exp_hermitian(h, t: float, tol: float = DEFAULT_TOL.hermitian) -> np.ndarray:
    """Return ``exp(-i h t)`` for Hermitian ``h`` via its eigendecomposition."""
    h = as_operator(h)
    if not is_hermitian(h, tol):
        raise ValueError("exp_hermitian requires a Hermitian generator")
    evals, evecs = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def trace_norm(a) -> float:
    """Sum of singular values (sum of |eigenvalues| for Hermitian input)."""
    a = as_operator(a)
    if np.allclose(a, a.conj().T, rtol=0, atol=1e-14):
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (a + a.conj().T)))))
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def trace_distance(a, b) -> float:
    a, b = as_operator(a), as_operator(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # canonical argument order makes the result exactly symmetric
    if a.tobytes() > b.tobytes():
        a, b = b, a
    d = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def fidelity_overlap(u, v) -> float:
    """|<u|v>| for normalized kets."""
    return float(abs(np.vdot(u, v)))


def strip_global_phase(v, tol: float = 1e-12) -> np.ndarray:
    """Rotate ``v`` so its first non-negligible amplitude is real positive."""
    v = np.asarray(v, dtype=complex)
    idx = np.flatnonzero(np.abs(v) > tol)
    if idx.size == 0:
        return v.copy()
    c = v[idx[0]]
    return v * (abs(c) / c)


def closest_orthonormal(vectors: np.ndarray) -> np.ndarray:
    """Polar (Loewdin) orthonormalization of the columns of ``vectors``."""
    w, _, vh = np.linalg.svd(np.asarray(vectors, dtype=complex), full_matrices=False)
    return w @ vh


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR of a Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (z + z.conj().T)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
