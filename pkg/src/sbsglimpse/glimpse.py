"""Locating glimpses of objectivity in time, and the multi-environment no-go.

``scan_glimpses`` evaluates the orthogonality residual on a uniform grid,
polishes every promising local minimum with a golden-section search and
keeps only refined instants that pass every certificate (grouping, MUB,
negativity, two-sided discord residual, distance to the SBS form).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qcore
from .analysis import (
    Branch,
    BranchDecomposition,
    GlimpseReport,
    NotSeparableError,
    branch_decomposition,
    check_separability,
    detect_sbs,
    discord_residual,
    negativity,
    product_decomposition,
    sbs_distance,
)
from .evolution import joint_state_factorized
from .model import DephasingModel, EnvironmentSpec, ScanSettings, require_valid

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2


class WrongShapeError(ValueError):
    """The model has the wrong number of environments for the requested operation."""


class TrivialModelError(ValueError):
    pass


@dataclass(frozen=True)
class Certificates:
    """Thresholds a refined candidate must meet to count as a glimpse."""

    negativity: float = 1e-10
    discord: float = 1e-6
    sbs_distance: float = 1e-8


@dataclass
class ScanRow:
    t: float
    orth_residual: float
    sep_deviation: float
    negativity: float
    discord_env: float
    sbs_distance: float
    is_glimpse: bool
    min_overlap: float = math.nan


@dataclass
class ScanResult:
    grid: list[ScanRow]
    glimpses: list[tuple[float, GlimpseReport]]
    settings: ScanSettings
    refined: list[float] = field(default_factory=list)

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.glimpses]

    @property
    def min_residual(self) -> float:
        vals = [r.orth_residual for r in self.grid if not math.isnan(r.orth_residual)]
        return min(vals, default=math.nan)

    @property
    def min_overlap(self) -> float:
        """Smallest branch-pair overlap seen on the grid: a lower bound on how close any two branches got to orthogonal."""
        vals = [r.min_overlap for r in self.grid if not math.isnan(r.min_overlap)]
        return min(vals, default=math.nan)


def _single_env(model: DephasingModel) -> None:
    if model.n_env != 1:
        raise WrongShapeError(f"operation needs exactly one environment, model has {model.n_env}")


def orth_residual(model: DephasingModel, t: float, tol_orth: float = 1e-8, tol_sep: float = 1e-10) -> float:
    """Worst distance of a branch overlap from {0, 1}; zero exactly at glimpse candidates.

    Instants where all branches fall into one group (e.g. t = 0) report 1.0.
    Raises :class:`NotSeparableError` when the state is entangled at ``t``.
    """
    _single_env(model)
    dec = branch_decomposition(model, t, tol_sep)
    return detect_sbs(dec, tol_orth).residuals["orthogonality"]


def certify(model: DephasingModel, t: float, tol_orth: float = 1e-8, tol_sep: float = 1e-10,
            thresholds: Certificates = Certificates(), exhaustive: bool = False) -> GlimpseReport:
    """Glimpse report at ``t`` with every residual filled in; ``is_glimpse`` is the conjunction of all checks.

    The discord searches are skipped (left NaN) once a cheaper check has
    vetoed the instant, unless ``exhaustive`` is set.
    """
    sep = check_separability(model, t, tol_sep)
    if not sep.holds:
        raise NotSeparableError(f"entangled at t={t}")
    state = joint_state_factorized(model, t)
    rep = detect_sbs(branch_decomposition(model, t, tol_sep, state=state, separability=sep), tol_orth)
    res = rep.residuals
    res["sep"] = sep.deviation
    res["negativity"] = negativity(state, [0])
    res["sbs_trace_distance"] = sbs_distance(state, rep)
    ok = (rep.is_glimpse and rep.mub_ok
          and res["negativity"] <= thresholds.negativity
          and res["sbs_trace_distance"] <= thresholds.sbs_distance)
    res["discord_env"] = res["discord_system"] = math.nan
    if ok or exhaustive:
        res["discord_env"] = discord_residual(state, "environment")
        ok = ok and res["discord_env"] <= thresholds.discord
    if ok or exhaustive:
        res["discord_system"] = discord_residual(state, "system")
        ok = ok and res["discord_system"] <= thresholds.discord
    rep.is_glimpse = bool(ok)
    return rep


def _row(model: DephasingModel, t: float, s: ScanSettings, thresholds: Certificates) -> ScanRow:
    sep = check_separability(model, t, s.tol_sep)
    state = joint_state_factorized(model, t)
    neg = negativity(state, [0])
    if not sep.holds:
        return ScanRow(t, math.nan, sep.deviation, neg, math.nan, math.nan, False)
    rep = detect_sbs(branch_decomposition(model, t, s.tol_sep, state=state, separability=sep), s.tol_orth)
    d_env = discord_residual(state, "environment")
    dist = sbs_distance(state, rep)
    glimpse = (rep.is_glimpse and rep.mub_ok and neg <= thresholds.negativity
               and d_env <= thresholds.discord and dist <= thresholds.sbs_distance
               and discord_residual(state, "system") <= thresholds.discord)
    return ScanRow(t, rep.residuals["orthogonality"], sep.deviation, neg, d_env, dist, bool(glimpse),
                   rep.residuals["min_overlap"])


def golden_section(f: Callable[[float], float], a: float, b: float, iters: int) -> tuple[float, float]:
    """Shrink [a, b] around a minimum of ``f``; return the best point evaluated and its value."""
    best = min(((a, f(a)), (b, f(b))), key=lambda p: p[1])
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < best[1]:
            best = (c, fc)
        if fd < best[1]:
            best = (d, fd)
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    for p in ((c, fc), (d, fd)):
        if p[1] < best[1]:
            best = p
    return best


def lipschitz_bound(model: DephasingModel) -> float:
    """Upper bound on |d/dt| of any branch overlap, from the coupling norms."""
    total = 0.0
    for env in model.environments:
        norms = [float(np.linalg.norm(v, 2)) for v in env.couplings]
        total += max(2 * (norms[0] + n) for n in norms)
    return total


def scan_glimpses(model: DephasingModel, settings: ScanSettings | None = None,
                  thresholds: Certificates = Certificates()) -> ScanResult:
    _single_env(model)
    require_valid(model)
    s = settings or model.scan or ScanSettings()
    grid = np.linspace(0.0, s.t_max, s.grid_points)
    rows = [_row(model, float(t), s, thresholds) for t in grid]
    result = ScanResult(rows, [], s)
    if s.grid_points < 2:
        return result

    dt = float(grid[1] - grid[0])
    threshold = 10 * s.tol_orth + lipschitz_bound(model) * dt
    r = np.array([row.orth_residual for row in rows])

    def resid(t: float) -> float:
        try:
            return orth_residual(model, t, s.tol_orth, s.tol_sep)
        except NotSeparableError:
            return math.inf

    candidates = [row.t for row in rows if row.is_glimpse]
    for j in range(len(grid)):
        if not np.isfinite(r[j]) or r[j] > threshold:
            continue
        left = r[j - 1] if j > 0 else math.inf
        right = r[j + 1] if j + 1 < len(grid) else math.inf
        if r[j] <= np.nan_to_num(left, nan=math.inf) and r[j] <= np.nan_to_num(right, nan=math.inf):
            lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
            t_ref, _ = golden_section(resid, float(lo), float(hi), s.refine_iters)
            candidates.append(min(max(t_ref, 0.0), s.t_max))
    candidates.sort()
    result.refined = list(candidates)
    log.debug("%d refinement candidates", len(candidates))

    glimpses: list[tuple[float, GlimpseReport]] = []
    for t in candidates:
        if glimpses and t - glimpses[-1][0] < dt / 2:
            continue
        try:
            rep = certify(model, t, s.tol_orth, s.tol_sep, thresholds)
        except NotSeparableError:
            continue
        if rep.is_glimpse and rep.residuals["orthogonality"] <= s.tol_orth:
            glimpses.append((t, rep))
    result.glimpses = glimpses
    return result


def two_level_gap(model: DephasingModel, tol: float = 1e-9) -> float:
    """|v_0 - v_1| for an asymmetric single-environment model whose V^1 has two distinct eigenvalues."""
    _single_env(model)
    require_valid(model)
    if model.d_Q != 2:
        raise ValueError("the linear-phase formula is for a qubit central system")
    env = model.environments[0]
    if np.max(np.abs(env.couplings[0])) > tol:
        raise ValueError("analytic glimpse times need asymmetric coupling (V^0 = 0)")
    v1 = env.couplings[1]
    if np.max(np.abs(v1 @ env.rho0 - env.rho0 @ v1)) > 1e-9:
        raise NotSeparableError("V^1 does not commute with rho0: the evolution entangles")
    ev = np.linalg.eigvalsh(v1)
    distinct = [ev[0]]
    for x in ev[1:]:
        if x - distinct[-1] > tol:
            distinct.append(x)
    if len(distinct) == 1:
        raise TrivialModelError("trivial model: no dephasing (V^1 has a single eigenvalue)")
    if len(distinct) > 2:
        raise ValueError(f"V^1 has {len(distinct)} distinct eigenvalues; the formula needs exactly two")
    return float(distinct[1] - distinct[0])


def analytic_glimpse_times(model: DephasingModel, m_max: int) -> list[float]:
    """Glimpse instants (2m+1) pi / |v_0 - v_1|, m = 0..m_max, for linear phases."""
    gap = two_level_gap(model)
    return [(2 * m + 1) * math.pi / gap for m in range(m_max + 1)]


# --------------------------------------------------------------------------
# several environments


@dataclass
class MultiEnvReport:
    t: float
    observed: tuple[int, ...]
    system_ok: bool
    groups: list[tuple[int, ...]]
    group_probs: list[float]
    group_states: list[np.ndarray]
    conditionals: dict[int, list[np.ndarray]]
    deviations: dict[int, np.ndarray]
    full_sbs: bool
    diagnostics: list[str] = field(default_factory=list)

    @property
    def max_deviation(self) -> dict[int, float]:
        return {q: float(np.max(m, initial=0.0)) for q, m in self.deviations.items()}

    @property
    def verdict(self) -> str:
        return "FULL-SBS" if self.full_sbs else "NO-FULL-SBS"


def env_conditionals(decomp: BranchDecomposition, groups: Sequence[Sequence[int]], q: int) -> list[np.ndarray]:
    """Marginal state of environment ``q`` conditioned on each group of branches."""
    out = []
    for g in groups:
        pg = sum(decomp.branches[n].p for n in g)
        out.append(sum(decomp.branches[n].p / pg * qcore.projector(decomp.branches[n].env_states[q]) for n in g))
    return out


def multi_env_from_decomposition(decomp: BranchDecomposition, tol_orth: float = 1e-8,
                                 observed: Sequence[int] | None = None) -> MultiEnvReport:
    observed = tuple(range(len(decomp.envs))) if observed is None else tuple(observed)
    rep = detect_sbs(decomp, tol_orth)
    diags = []
    if not rep.is_glimpse:
        diags.append("system-side grouping fails: branch states do not form orthogonal groups "
                     f"(orthogonality residual {rep.residuals['orthogonality']:.3e}); conditionals use a forced grouping")
    conds, devs = {}, {}
    for q in observed:
        c = env_conditionals(decomp, rep.groups, q)
        m = np.zeros((len(c), len(c)))
        for g, h in itertools.combinations(range(len(c)), 2):
            m[g, h] = m[h, g] = abs(np.trace(c[g] @ c[h]))
        conds[q], devs[q] = c, m
        if rep.is_glimpse and np.max(m, initial=0.0) > tol_orth:
            diags.append(f"environment {q + 1}: conditional states overlap (max tr(rho_G rho_G') = {np.max(m):.3e})")
    full = rep.is_glimpse and all(np.max(m, initial=0.0) <= tol_orth for m in devs.values())
    return MultiEnvReport(decomp.t, observed, rep.is_glimpse, rep.groups, rep.group_probs, rep.group_states,
                          conds, devs, bool(full), diags)


def multi_env_check(model: DephasingModel, t: float, tol_orth: float = 1e-8, tol_sep: float = 1e-10,
                    observed: Sequence[int] | None = None) -> MultiEnvReport:
    """Per-environment orthogonality of group-conditional states at ``t``.

    Environments left out of ``observed`` are traced out; they still shape the
    branch phases.
    """
    require_valid(model)
    if model.n_env < 2:
        raise WrongShapeError("multi_env_check needs at least two environments")
    try:
        dec = product_decomposition(model, t, tol_sep)
    except NotSeparableError as exc:
        obs = tuple(range(model.n_env)) if observed is None else tuple(observed)
        return MultiEnvReport(t, obs, False, [], [], [], {}, {}, False, [f"not separable: {exc}"])
    return multi_env_from_decomposition(dec, tol_orth, observed)


def merged_terms(decomp: BranchDecomposition, groups: Sequence[Sequence[int]]):
    """Collapse branches sharing a group and a first-environment state.

    Returns ``(group, p, env1_state, rest)`` tuples, ``rest`` being the
    conditional state of the remaining environments.
    """
    terms = []
    for g_idx, g in enumerate(groups):
        by_first: dict[int, list[int]] = {}
        for n in g:
            by_first.setdefault(decomp.branches[n].index[0], []).append(n)
        for first, members in sorted(by_first.items()):
            p = sum(decomp.branches[n].p for n in members)
            rest = sum(decomp.branches[n].p / p * qcore.tensor(*(qcore.projector(v)
                                                                for v in decomp.branches[n].env_states[1:]))
                       for n in members)
            terms.append((g_idx, p, decomp.branches[members[0]].env_states[0], rest))
    return terms


def symmetric_demo_model(p1: float = 0.6, p2: float = 0.3) -> DephasingModel:
    """Two qubit environments whose branch phases at t = pi split by the first environment only.

    With V^1 = diag(0, 1) on environment 1 and diag(0, 2) on environment 2,
    the branches |00>, |01> carry phase 0 (mod 2 pi) and |10>, |11> carry pi.
    """
    z = np.zeros((2, 2))
    e1 = EnvironmentSpec.from_arrays([z, np.diag([0.0, 1.0])], np.diag([p1, 1 - p1]))
    e2 = EnvironmentSpec.from_arrays([z, np.diag([0.0, 2.0])], np.diag([p2, 1 - p2]))
    return DephasingModel.build([0.0, 0.0], [1 / math.sqrt(2)] * 2, [e1, e2])


def asymmetric_demo_decomposition(p1: float = 0.6, p2: float = 0.5) -> BranchDecomposition:
    """Branch allotment |00> -> |+>, {|01>, |10>, |11>} -> |->.

    Built directly from the allotment: with additive per-environment phases
    this allotment is not reachable by any pure-dephasing Hamiltonian (the
    phases of |01>, |10> and |11> cannot all differ by pi from |00>).
    """
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    minus = np.array([1, -1], dtype=complex) / math.sqrt(2)
    basis = np.eye(2, dtype=complex)
    pr = ([p1, 1 - p1], [p2, 1 - p2])
    branches = []
    for n1, n2 in itertools.product(range(2), range(2)):
        phase = 0.0 if (n1, n2) == (0, 0) else math.pi
        ph = np.array([[0.0, phase], [-phase, 0.0]])
        branches.append(Branch(pr[0][n1] * pr[1][n2], plus if phase == 0 else minus,
                               (basis[:, n1], basis[:, n2]), ph, (n1, n2)))
    return BranchDecomposition(tuple(branches), math.pi, 2, (2, 2), (0, 1))


def aligned_two_env_model(seed: int, max_dim: int = 3) -> tuple[DephasingModel, float]:
    """Random separable qubit + two-environment model and a time where the system side aligns.

    Couplings have integer spectra in a random common basis per environment,
    so at t = pi every branch phase is 0 or pi. Each environment is drawn so
    that both parities occur with positive weight (non-degenerate pattern).
    """
    rng = np.random.default_rng(seed)
    envs = []
    for _ in range(2):
        d = int(rng.integers(2, max_dim + 1))
        while True:
            v0 = rng.integers(-3, 4, d).astype(float)
            v1 = rng.integers(-3, 4, d).astype(float)
            parity = np.mod(v1 - v0, 2)
            if 0 < parity.sum() < d:
                break
        w = qcore.random_unitary(d, rng)
        p = rng.dirichlet(np.ones(d))
        mk = lambda x: 0.5 * ((w * x) @ w.conj().T + ((w * x) @ w.conj().T).conj().T)
        rho = (w * p) @ w.conj().T
        envs.append(EnvironmentSpec.from_arrays([mk(v0), mk(v1)], 0.5 * (rho + rho.conj().T)))
    phase = rng.uniform(0, 2 * math.pi)
    a = np.array([1.0, np.exp(1j * phase)]) / math.sqrt(2)
    return DephasingModel.build(rng.uniform(-1, 1, 2), a, envs), math.pi
