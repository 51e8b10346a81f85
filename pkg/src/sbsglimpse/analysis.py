"""Separability, separable branch decomposition and SBS certification.

When the evolution is non-entangling, the joint state of the central system
and one environment can be written as

    sigma(t) = sum_n p_n |psi_n(t)><psi_n(t)| (x) |n(t)><n(t)|

where ``|n(t)>`` diagonalizes both rho_00(t) and every product
w_i(t) w_j(t)^dagger, and the branch states differ only by phases,
psi_n = sum_i a_i(t) exp(-i phi_n^i) |i>  (phases referenced to pointer 0).
A glimpse of objectivity is an instant where the branch states collapse onto
an orthonormal set of group representatives.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from . import qcore
from .evolution import JointState, joint_state_factorized
from .model import DephasingModel, require_valid

# branches lighter than this carry no weight in the state and are not grouped
PROB_FLOOR = 1e-12
DEGENERACY_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-9


class NotSeparableError(ValueError):
    """The state is (or may be) entangled, so no separable branch form exists."""


class DecompositionError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# separability


@dataclass(frozen=True)
class SeparabilityResult:
    holds: bool
    deviation: float
    verdict: str  # "separable", "entangled" or "undetermined"
    per_env: tuple[float, ...] = ()


def _products(props: Sequence[np.ndarray]) -> dict[tuple[int, int], np.ndarray]:
    """w_i w_j^dagger for i < j, in lexicographic order."""
    return {(i, j): props[i] @ props[j].conj().T
            for i, j in itertools.combinations(range(len(props)), 2)}


def _env_deviation(model: DephasingModel, k: int, t: float) -> float:
    env = model.environments[k]
    w = [env.propagator(i, t) for i in range(model.d_Q)]
    diag = [wi @ env.rho0 @ wi.conj().T for wi in w]
    dev = 0.0
    for i, j in itertools.combinations(range(model.d_Q), 2):
        dev = max(dev, qcore.trace_norm(diag[i] - diag[j]))
    if model.d_Q > 2:
        prods = list(_products(w).values())
        for a, b in itertools.combinations(prods, 2):
            dev = max(dev, float(np.linalg.norm(a @ b - b @ a, 2)))
    return dev


def check_separability(model: DephasingModel, t: float, tol_sep: float = 1e-10) -> SeparabilityResult:
    """Test equality of all diagonal conditional environment operators.

    For d_Q > 2 the commutators of all propagator products are checked as
    well. When a larger central system fails the criteria but the
    partial transpose is still positive, the verdict is "undetermined".
    """
    require_valid(model)
    per_env = tuple(_env_deviation(model, k, t) for k in range(model.n_env))
    dev = max(per_env)
    if dev <= tol_sep:
        return SeparabilityResult(True, dev, "separable", per_env)
    verdict = "entangled"
    if model.d_Q > 2:
        state = joint_state_factorized(model, t)
        neg = max(negativity(reduce_to(state, [0, k + 1]), [0]) for k in range(model.n_env))
        if neg <= 1e-10:
            verdict = "undetermined"
    return SeparabilityResult(False, dev, verdict, per_env)


def reduce_to(state: JointState, keep: Sequence[int]) -> JointState:
    keep = sorted(keep)
    return JointState(state.reduced(keep), tuple(state.dims[k] for k in keep), state.t)


def negativity(state: JointState, cut: Iterable[int]) -> float:
    """Sum of |negative eigenvalues| of the partial transpose over the subsystems in ``cut``."""
    cut = sorted(set(int(c) for c in cut))
    n = len(state.dims)
    if not cut or len(cut) == n or cut[0] < 0 or cut[-1] >= n:
        raise ValueError(f"bad bipartition {cut} for {n} subsystems")
    pt = qcore.partial_transpose(state.sigma, state.dims, cut)
    ev = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    return float(np.sum(np.abs(ev[ev < 0])))


# --------------------------------------------------------------------------
# branch decomposition


@dataclass(frozen=True, eq=False)
class Branch:
    p: float
    psi: np.ndarray
    env_states: tuple[np.ndarray, ...]
    # phases[i, j] = arg of the eigenvalue of w_i w_j^dagger on this branch
    phases: np.ndarray
    index: tuple[int, ...] = ()

    @property
    def env_state(self) -> np.ndarray:
        if len(self.env_states) != 1:
            raise AttributeError("multi-environment branch: use env_states")
        return self.env_states[0]

    def env_projector(self) -> np.ndarray:
        return qcore.tensor(*(qcore.projector(v) for v in self.env_states))


@dataclass(frozen=True, eq=False)
class BranchDecomposition:
    branches: tuple[Branch, ...]
    t: float
    d_Q: int
    env_dims: tuple[int, ...]
    envs: tuple[int, ...]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([b.p for b in self.branches])

    def reconstruct(self) -> np.ndarray:
        cols = np.array([qcore.tensor(b.psi, *b.env_states) for b in self.branches]).T
        return (cols * self.probabilities) @ cols.conj().T


def _cluster_sorted(values: np.ndarray, tol: float) -> list[list[int]]:
    groups = [[0]]
    for n in range(1, len(values)):
        if abs(values[n] - values[groups[-1][-1]]) <= tol:
            groups[-1].append(n)
        else:
            groups.append([n])
    return groups


def _cluster_unimodular(values: np.ndarray, tol: float) -> list[list[int]]:
    left = list(range(len(values)))
    groups = []
    while left:
        a = left[0]
        g = [n for n in left if abs(values[n] - values[a]) <= tol]
        groups.append(g)
        left = [n for n in left if n not in g]
    return groups


def _refine_block(vecs: np.ndarray, ops: Sequence[np.ndarray], tol: float) -> np.ndarray:
    """Re-diagonalize the restriction of each operator in turn inside a degenerate block."""
    if vecs.shape[1] == 1 or not ops:
        return vecs
    m = vecs.conj().T @ ops[0] @ vecs
    tri, z = scipy.linalg.schur(m, output="complex")
    lam = np.diag(tri)
    order = np.argsort(np.angle(lam), kind="stable")
    lam, z = lam[order], z[:, order]
    new = vecs @ z
    out = []
    for g in _cluster_unimodular(lam, tol):
        out.append(_refine_block(new[:, g], ops[1:], tol))
    return np.hstack(out)


def env_eigensystem(model: DephasingModel, k: int, t: float, tol: float = DEGENERACY_TOL):
    """Common eigenbasis of rho_00^k(t) and the products w_i w_j^dagger.

    Returns ``(p, basis, phases)``: weights sorted ascending, basis vectors as
    columns, and ``phases[n, i, j]`` the eigenphase of w_i w_j^dagger on |n>.
    """
    env = model.environments[k]
    w = [env.propagator(i, t) for i in range(model.d_Q)]
    rho00 = w[0] @ env.rho0 @ w[0].conj().T
    prods = _products(w)
    p, vecs = np.linalg.eigh(0.5 * (rho00 + rho00.conj().T))
    blocks = _cluster_sorted(p, tol)
    ops = list(prods.values())
    basis = np.hstack([_refine_block(vecs[:, g], ops, tol) for g in blocks])
    # re-orthonormalize against round-off in the block solves
    basis = qcore.closest_orthonormal(basis)

    d_q = model.d_Q
    phases = np.zeros((env.dim, d_q, d_q))
    for (i, j), op in prods.items():
        d = basis.conj().T @ op @ basis
        off = d - np.diag(np.diag(d))
        if np.max(np.abs(off), initial=0.0) > 1e-7:
            raise DecompositionError(
                f"environment {k}: products w_i w_j^dagger not simultaneously diagonal (off-diagonal {np.max(np.abs(off)):.2e})")
        phases[:, i, j] = np.angle(np.diag(d))
        phases[:, j, i] = -phases[:, i, j]
    weights = np.clip(np.real(np.einsum("in,ij,jn->n", basis.conj(), rho00, basis)), 0.0, None)
    return weights, basis, phases


def _branch_psi(a_t: np.ndarray, phase_to_zero: np.ndarray) -> np.ndarray:
    # phase_to_zero[i] = phi_n^{0i}; the coefficient of |i> is exp(-i phi_n^{0i})
    return qcore.strip_global_phase(a_t * np.exp(-1j * phase_to_zero))


def product_decomposition(model: DephasingModel, t: float, tol_sep: float = 1e-10,
                          state: JointState | None = None,
                          separability: SeparabilityResult | None = None) -> BranchDecomposition:
    """Separable branch form over all environments (one branch per multi-index).

    ``state`` and ``separability`` may be passed in when the caller already
    computed them at the same ``t``.
    """
    require_valid(model)
    sep = check_separability(model, t, tol_sep) if separability is None else separability
    if not sep.holds:
        raise NotSeparableError(f"separability criteria fail at t={t} (deviation {sep.deviation:.3e}, {sep.verdict})")
    systems = [env_eigensystem(model, k, t) for k in range(model.n_env)]
    a_t = model.amplitudes_at(t)
    branches = []
    for idx in itertools.product(*(range(e.dim) for e in model.environments)):
        p = float(np.prod([systems[k][0][n] for k, n in enumerate(idx)]))
        ph = sum(systems[k][2][n] for k, n in enumerate(idx))
        ph = np.angle(np.exp(1j * ph))
        branches.append(Branch(
            p=p,
            psi=_branch_psi(a_t, ph[0]),
            env_states=tuple(systems[k][1][:, n] for k, n in enumerate(idx)),
            phases=ph,
            index=idx,
        ))
    dec = BranchDecomposition(tuple(branches), t, model.d_Q, tuple(model.env_dims), tuple(range(model.n_env)))
    state = joint_state_factorized(model, t) if state is None else state
    err = qcore.trace_distance(dec.reconstruct(), state.sigma)
    if err > RECONSTRUCTION_TOL:
        raise DecompositionError(f"branch reconstruction off by {err:.3e} at t={t}")
    return dec


def branch_decomposition(model: DephasingModel, t: float, tol_sep: float = 1e-10,
                         state: JointState | None = None,
                         separability: SeparabilityResult | None = None) -> BranchDecomposition:
    """Single-environment separable decomposition; see :func:`product_decomposition` for N > 1."""
    if model.n_env != 1:
        raise ValueError("branch_decomposition handles one environment; use product_decomposition")
    return product_decomposition(model, t, tol_sep, state, separability)


# --------------------------------------------------------------------------
# SBS detection


@dataclass(eq=False)
class GlimpseReport:
    is_glimpse: bool
    t: float
    d_Q: int
    groups: list[tuple[int, ...]]
    group_states: list[np.ndarray]
    group_probs: list[float]
    env_operators: list[np.ndarray]
    consistent: bool
    residuals: dict = field(default_factory=dict)
    mub_ok: bool = False


def _overlap_matrix(psis: Sequence[np.ndarray]) -> np.ndarray:
    m = np.array(psis)
    return np.abs(m.conj() @ m.T)


def _components(n: int, linked) -> list[list[int]]:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in itertools.combinations(range(n), 2):
        if linked(a, b):
            parent[find(a)] = find(b)
    comps: dict[int, list[int]] = {}
    for x in range(n):
        comps.setdefault(find(x), []).append(x)
    return sorted(comps.values(), key=min)


def _forced_groups(f: np.ndarray, max_groups: int) -> list[list[int]]:
    """Best-effort grouping used when no exact clustering exists."""
    n = f.shape[0]
    if n < 2:
        return [list(range(n))]
    groups = _components(n, lambda a, b: f[a, b] >= 0.5)
    while len(groups) > max_groups:
        best = max(itertools.combinations(range(len(groups)), 2),
                   key=lambda gh: max(f[a, b] for a in groups[gh[0]] for b in groups[gh[1]]))
        g, h = best
        groups[g] = sorted(groups[g] + groups[h])
        del groups[h]
    if len(groups) == 1:
        tri = np.triu_indices(n, 1)
        m = int(np.argmin(f[tri]))
        a, b = tri[0][m], tri[1][m]
        ga = [c for c in range(n) if c == a or (c != b and f[c, a] >= f[c, b])]
        groups = [ga, [c for c in range(n) if c not in ga]]
    return sorted(groups, key=min)


def _representative(psis, weights) -> np.ndarray:
    mix = sum(w * qcore.projector(v) for v, w in zip(psis, weights))
    _, vecs = np.linalg.eigh(mix)
    return qcore.strip_global_phase(vecs[:, -1])


def detect_sbs(decomp: BranchDecomposition, tol_orth: float = 1e-8) -> GlimpseReport:
    """Group branch states by overlap and decide whether the state is SBS at this instant.

    Overlaps must sit within ``tol_orth`` of 0 or 1; anything in between is
    an automatic non-glimpse. When no exact grouping exists the report still
    carries a forced candidate grouping for :func:`sbs_distance`.
    """
    live = [n for n, b in enumerate(decomp.branches) if b.p > PROB_FLOOR]
    psis = [decomp.branches[n].psi for n in live]
    f = _overlap_matrix(psis) if psis else np.zeros((0, 0))
    pairs = list(itertools.combinations(range(len(live)), 2))
    gap = max((min(f[a, b], 1 - f[a, b]) for a, b in pairs), default=0.0)
    min_overlap = min((f[a, b] for a, b in pairs), default=1.0)

    exact = _components(len(live), lambda a, b: f[a, b] >= 1 - tol_orth)
    label = {x: g for g, comp in enumerate(exact) for x in comp}
    consistent = all(
        (f[a, b] >= 1 - tol_orth) if label[a] == label[b] else (f[a, b] <= tol_orth) for a, b in pairs)

    d_q = decomp.d_Q
    count_ok = len(exact) >= 2 and (d_q == 2 or len(exact) == d_q)
    local = exact if consistent and len(exact) >= 2 else _forced_groups(f, max(2, d_q))

    groups = [tuple(live[x] for x in g) for g in local]
    probs = [float(sum(decomp.branches[n].p for n in g)) for g in groups]
    reps = [_representative([decomp.branches[n].psi for n in g], [decomp.branches[n].p for n in g])
            for g in groups]
    env_ops = [sum(decomp.branches[n].p / pg * decomp.branches[n].env_projector() for n in g)
               for g, pg in zip(groups, probs)]

    same = [1 - f[a, b] for g in local for a, b in itertools.combinations(g, 2)]
    cross = [f[a, b] for g, h in itertools.combinations(local, 2) for a in g for b in h]
    gram = np.abs(np.array(reps).conj() @ np.array(reps).T) if reps else np.zeros((0, 0))
    gram_err = float(np.max(np.abs(gram - np.eye(len(reps))), initial=0.0))

    is_glimpse = bool(consistent and count_ok and gram_err <= tol_orth and all(p > 0 for p in probs))
    report = GlimpseReport(
        is_glimpse=is_glimpse,
        t=decomp.t,
        d_Q=d_q,
        groups=groups,
        group_states=reps,
        group_probs=probs,
        env_operators=env_ops,
        consistent=consistent,
        residuals={
            # scan residual: worst distance of an overlap from {0, 1}, with a
            # group-count guard so an all-equal (single group) state never scores 0
            "orthogonality": 1.0 if consistent and not count_ok else float(gap),
            "overlap_gap": float(gap),
            "min_overlap": float(min_overlap),
            "cross_overlap": float(max(cross, default=0.0)),
            "equality": float(max(same, default=0.0)),
            "gram": gram_err,
        },
    )
    if is_glimpse:
        report.mub_ok = mub_check(report, d_q)
    return report


def mub_check(report: GlimpseReport, d_Q: int, tol: float = 1e-9) -> bool:
    """True iff every group representative is unbiased with respect to the pointer basis."""
    if not report.is_glimpse:
        raise ValueError("mub_check needs a certified glimpse")
    return all(np.all(np.abs(np.abs(v) ** 2 - 1.0 / d_Q) <= tol) for v in report.group_states)


def sbs_state(report: GlimpseReport) -> np.ndarray:
    """SBS operator built from the report's grouping, with representatives orthonormalized."""
    e = qcore.closest_orthonormal(np.array(report.group_states).T)
    return sum(p * np.kron(qcore.projector(e[:, g]), rho)
               for g, (p, rho) in enumerate(zip(report.group_probs, report.env_operators)))


def sbs_distance(state: JointState, report: GlimpseReport) -> float:
    return qcore.trace_distance(state.sigma, sbs_state(report))


# --------------------------------------------------------------------------
# discord-style classicality residual


def _side_first(state: JointState, side) -> np.ndarray:
    if len(state.dims) != 2:
        raise ValueError("discord_residual needs a bipartite state; reduce to one environment first")
    if side in ("system", 0):
        m = 0
    elif side in ("environment", 1):
        m = 1
    else:
        raise ValueError(f"side must be 'system' or 'environment', got {side!r}")
    da, db = state.dims
    s = state.sigma.reshape(da, db, da, db)
    return s if m == 0 else s.transpose(1, 0, 3, 2)


def _disturbance(s: np.ndarray, us: np.ndarray) -> np.ndarray:
    """Trace distance between the state and its dephasing in each basis ``us[g]`` (columns)."""
    dm, do = s.shape[:2]
    dim = dm * do
    big = np.einsum("gab,xy->gaxby", us, np.eye(do)).reshape(-1, dim, dim)
    rot = (qcore.dagger(big) @ s.reshape(dim, dim) @ big).reshape(-1, dm, do, dm, do)
    rot[:, np.arange(dm), :, np.arange(dm), :] = 0.0
    x = rot.reshape(-1, dim, dim)
    ev = np.linalg.eigvalsh(0.5 * (x + qcore.dagger(x)))
    return 0.5 * np.sum(np.abs(ev), axis=1)


def _bloch_basis(theta, phi) -> np.ndarray:
    c, s = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    e = np.exp(1j * np.asarray(phi))
    u = np.empty(np.shape(theta) + (2, 2), dtype=complex)
    u[..., 0, 0], u[..., 1, 0] = c, e * s
    u[..., 0, 1], u[..., 1, 1] = -np.conj(e) * s, c
    return u


def _fibonacci_sphere(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n) + 0.5
    theta = np.arccos(1 - 2 * k / n)
    phi = np.pi * (1 + 5 ** 0.5) * k
    return theta, np.mod(phi, 2 * np.pi)


def _seed_bases(s: np.ndarray, rng: np.random.Generator, n_random: int = 2) -> np.ndarray:
    """Eigenbases of the measured-side marginal and of a few conditional operators.

    For a state classical on the measured side, all of these operators are
    diagonal in the classical basis.
    """
    dm, do = s.shape[:2]
    marg = np.einsum("axbx->ab", s)
    mats = [marg]
    for _ in range(n_random):
        x = qcore.random_hermitian(do, rng)
        mats.append(marg + 0.37 * np.einsum("axby,yx->ab", s, x))
    out = []
    for m in mats:
        _, v = np.linalg.eigh(0.5 * (m + m.conj().T))
        out.append(v)
    return np.array(out)


def discord_residual(state: JointState, side="environment", grid_points: int = 10_000,
                     seed: int = 0, early_exit: float = 1e-12) -> float:
    """Minimum disturbance of the state under a projective measurement on one side.

    Zero certifies that the state is classical (zero discord) on that side.
    Candidate bases built from the state itself are tried first; since the
    residual is nonnegative, a candidate scoring below ``early_exit`` ends the
    search. Otherwise a qubit side is searched on a Fibonacci grid of Bloch
    directions and a larger side over Haar-random bases, and the best points
    are polished with Nelder-Mead.
    """
    s = _side_first(state, side)
    dm = s.shape[0]
    if dm == 1:
        return 0.0
    rng = np.random.default_rng(seed)
    seeds = _seed_bases(s, rng)
    vals = _disturbance(s, seeds)
    best = float(vals.min())
    if best <= early_exit:
        return best

    def polish(fun, x0, scale):
        sim = np.vstack([x0] + [x0 + scale * np.eye(len(x0))[i] for i in range(len(x0))])
        res = scipy.optimize.minimize(fun, x0, method="Nelder-Mead",
                                      options={"initial_simplex": sim, "xatol": 1e-12, "fatol": 1e-15,
                                               "maxiter": 400 * len(x0)})
        return float(res.fun)

    if dm == 2:
        th, ph = _fibonacci_sphere(grid_points)
        grid_vals = _disturbance(s, _bloch_basis(th, ph))
        best = min(best, float(grid_vals.min()))
        f = lambda x: float(_disturbance(s, _bloch_basis(x[0], x[1])[None])[0])
        for g in np.argsort(grid_vals)[:3]:
            best = min(best, polish(f, np.array([th[g], ph[g]]), 0.05))
        return best

    cands = np.concatenate([seeds, np.array([qcore.random_unitary(dm, rng) for _ in range(grid_points // 5)])])
    cand_vals = _disturbance(s, cands)
    best = min(best, float(cand_vals.min()))
    n_par = dm * dm

    def herm(x):
        h = np.zeros((dm, dm), dtype=complex)
        iu = np.triu_indices(dm, 1)
        h[np.diag_indices(dm)] = x[:dm]
        m = len(iu[0])
        h[iu] = x[dm:dm + m] + 1j * x[dm + m:]
        return h + np.triu(h, 1).conj().T

    for g in np.argsort(cand_vals)[:3]:
        u0 = cands[g]
        f = lambda x, u0=u0: float(_disturbance(s, (u0 @ qcore.exp_hermitian(herm(x), -1.0))[None])[0])
        best = min(best, polish(f, np.zeros(n_par), 0.05))
    return best
