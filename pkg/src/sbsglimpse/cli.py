"""Command-line front end.

Exit codes: 0 success, 1 domain violation (invalid model), 2 I/O or parse
error, 3 wrong command for the model's shape.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, glimpse
from .evolution import joint_state_factorized, system_populations
from .model import DephasingModel, InvalidModelError, ModelFileError, ScanSettings, load_model, validate

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_SHAPE = 0, 1, 2, 3

SCAN_HEADER = ["t", "orth_residual", "sep_deviation", "negativity", "discord_env", "sbs_distance", "is_glimpse"]
GLIMPSE_HEADER = ["t_glimpse", "p_I", "p_II", "mub_ok", "sbs_distance"]


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    command: str
    model_path: Path | None = None
    out_dir: Path | None = None
    t: float | None = None
    tol_orth: float | None = None
    tol_sep: float | None = None
    seed: int = 0
    demo: str | None = None
    t_max: float | None = None
    grid_points: int | None = None


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _load(cfg: RunConfig) -> DephasingModel:
    if cfg.model_path is None:
        raise CliError("--model is required", EXIT_IO)
    try:
        return load_model(cfg.model_path)
    except ModelFileError as exc:
        raise CliError(str(exc), EXIT_IO) from None


def _require_valid(model: DephasingModel) -> None:
    problems = validate(model)
    if problems:
        raise CliError("invalid model:\n" + "\n".join(f"  - {p}" for p in problems), EXIT_DOMAIN)


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.out_dir or Path(".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_IO) from None
    return out


def _settings(cfg: RunConfig, model: DephasingModel) -> ScanSettings:
    s = model.scan or ScanSettings()
    overrides = {k: getattr(cfg, k) for k in ("t_max", "grid_points", "tol_orth", "tol_sep")
                 if getattr(cfg, k) is not None}
    try:
        return dataclasses.replace(s, **overrides)
    except ValueError as exc:
        raise CliError(f"bad scan settings: {exc}", EXIT_DOMAIN) from None


def cmd_validate(cfg: RunConfig) -> int:
    model = _load(cfg)
    problems = validate(model)
    if problems:
        print(f"{cfg.model_path}: {len(problems)} violation(s)")
        for p in problems:
            print(f"  - {p}")
        return EXIT_DOMAIN
    print(f"{cfg.model_path}: valid (d_Q = {model.d_Q}, environments = {model.env_dims})")
    return EXIT_OK


def cmd_evolve(cfg: RunConfig) -> int:
    model = _load(cfg)
    _require_valid(model)
    if cfg.t is None:
        raise CliError("evolve needs --t", EXIT_IO)
    tol_sep = cfg.tol_sep or 1e-10
    state = joint_state_factorized(model, cfg.t)
    sep = analysis.check_separability(model, cfg.t, tol_sep)
    print(f"t = {fmt(cfg.t)}")
    print("populations: " + " ".join(fmt(p) for p in system_populations(state)))
    print(f"separability: {sep.verdict} (deviation {sep.deviation:.3e})")
    print(f"negativity (system | environments): {analysis.negativity(state, [0]):.3e}")
    if sep.holds and model.n_env == 1:
        dec = analysis.branch_decomposition(model, cfg.t, tol_sep, state=state, separability=sep)
        print(f"{'n':>3} {'p_n':>12}  branch state")
        for n, b in enumerate(dec.branches):
            amps = " ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in b.psi)
            print(f"{n:>3} {b.p:>12.6g}  {amps}")
    if cfg.out_dir is not None:
        out = _out_dir(cfg)
        doc = {"t": cfg.t, "dims": list(state.dims),
               "sigma": np.stack([state.sigma.real, state.sigma.imag], axis=-1).tolist()}
        (out / "state.json").write_text(json.dumps(doc) + "\n")
    return EXIT_OK


def write_scan(out: Path, result: glimpse.ScanResult) -> None:
    with open(out / "scan.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_HEADER)
        for r in result.grid:
            w.writerow([fmt(r.t), fmt(r.orth_residual), fmt(r.sep_deviation), fmt(r.negativity),
                        fmt(r.discord_env), fmt(r.sbs_distance), fmt(r.is_glimpse)])
    with open(out / "glimpses.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GLIMPSE_HEADER)
        for t, rep in result.glimpses:
            probs = list(rep.group_probs) + [math.nan] * 2
            w.writerow([fmt(t), fmt(probs[0]), fmt(probs[1]), fmt(rep.mub_ok),
                        fmt(rep.residuals["sbs_trace_distance"])])


def cmd_scan(cfg: RunConfig) -> int:
    model = _load(cfg)
    _require_valid(model)
    if model.n_env != 1:
        raise CliError(f"scan needs a single-environment model (this one has {model.n_env}); use multienv",
                       EXIT_SHAPE)
    settings = _settings(cfg, model)
    out = _out_dir(cfg)
    result = glimpse.scan_glimpses(model, settings)
    write_scan(out, result)
    print(f"grid: {settings.grid_points} points on [0, {fmt(settings.t_max)}]")
    print(f"glimpses: {len(result.glimpses)}")
    if result.glimpses:
        print(f"{'t_glimpse':>22} {'t/pi':>12} {'p_I':>10} {'p_II':>10} {'mub':>5} {'sbs_dist':>10}")
        for t, rep in result.glimpses:
            print(f"{t:>22.15g} {t / math.pi:>12.8f} {rep.group_probs[0]:>10.6f} {rep.group_probs[1]:>10.6f} "
                  f"{'yes' if rep.mub_ok else 'no':>5} {rep.residuals['sbs_trace_distance']:>10.2e}")
    print(f"min orth residual on grid: {fmt(result.min_residual)}")
    print(f"min branch overlap on grid: {fmt(result.min_overlap)}")
    print(f"wrote {out / 'scan.csv'} and {out / 'glimpses.csv'}")
    return EXIT_OK


def _fmt_op(m: np.ndarray) -> str:
    m = np.where(np.abs(m) < 5e-13, 0, m)
    if np.allclose(m, np.diag(np.diag(m))):
        return "diag(" + ", ".join(f"{x.real:.6g}" for x in np.diag(m)) + ")"
    return np.array2string(m, precision=6, suppress_small=True).replace("\n", "")


def _print_multienv(rep: glimpse.MultiEnvReport) -> None:
    print(f"t = {fmt(rep.t)}; system-side grouping: {'ok' if rep.system_ok else 'FAILS'}")
    for g, (grp, p) in enumerate(zip(rep.groups, rep.group_probs)):
        psi = " ".join(f"{z.real:+.4f}{z.imag:+.4f}j" for z in rep.group_states[g])
        print(f"  group {g}: branches {list(grp)}  p = {p:.6g}  state = [{psi}]")
    print(f"{'env':>4} {'max tr(rho_G rho_Gp)':>22}  orthogonal")
    for q, dev in rep.max_deviation.items():
        print(f"{q + 1:>4} {dev:>22.6e}  {'yes' if dev <= 1e-8 else 'no'}")
        for g, c in enumerate(rep.conditionals[q]):
            print(f"       rho_{g}^{q + 1} = {_fmt_op(c)}")
    for d in rep.diagnostics:
        print(f"  note: {d}")
    print(f"verdict: {rep.verdict}")


def _write_multienv(out: Path, rep: glimpse.MultiEnvReport) -> None:
    with open(out / "multienv.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["env", "group_a", "group_b", "overlap"])
        for q, m in rep.deviations.items():
            for a in range(m.shape[0]):
                for b in range(a + 1, m.shape[0]):
                    w.writerow([q + 1, a, b, fmt(m[a, b])])


def cmd_multienv(cfg: RunConfig) -> int:
    tol_orth = cfg.tol_orth or 1e-8
    if cfg.demo == "asymmetric":
        dec = glimpse.asymmetric_demo_decomposition()
        rep = glimpse.multi_env_from_decomposition(dec, tol_orth)
        print("asymmetric allotment |00> -> |+>, {|01>, |10>, |11>} -> |->")
        labels = {0: "+", 1: "-"}
        for g, p, e1, rest in glimpse.merged_terms(dec, rep.groups):
            print(f"  {p:.6g} |{labels[g]}><{labels[g]}| (x) {_fmt_op(np.outer(e1, e1.conj()))} (x) {_fmt_op(rest)}")
    elif cfg.demo in ("symmetric", "random"):
        if cfg.demo == "symmetric":
            model, t = glimpse.symmetric_demo_model(), math.pi
            print("symmetric allotment {|00>, |01>} -> |+>, {|10>, |11>} -> |->")
        else:
            model, t = glimpse.aligned_two_env_model(cfg.seed)
            print(f"random separable two-environment model (seed {cfg.seed}), dims {model.env_dims}")
        rep = glimpse.multi_env_check(model, t, tol_orth, cfg.tol_sep or 1e-10)
    elif cfg.demo is not None:
        raise CliError(f"unknown demo {cfg.demo!r}", EXIT_IO)
    else:
        model = _load(cfg)
        _require_valid(model)
        if model.n_env < 2:
            raise CliError("multienv needs at least two environments; use scan", EXIT_SHAPE)
        if cfg.t is None:
            raise CliError("multienv with --model needs --t", EXIT_IO)
        rep = glimpse.multi_env_check(model, cfg.t, tol_orth, cfg.tol_sep or 1e-10)
    _print_multienv(rep)
    if cfg.out_dir is not None:
        _write_multienv(_out_dir(cfg), rep)
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "evolve": cmd_evolve, "scan": cmd_scan, "multienv": cmd_multienv}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", type=Path, help="model file (JSON)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--t", type=float, help="evaluation time")
    common.add_argument("--tol-orth", type=float, help="overlap tolerance for grouping branch states")
    common.add_argument("--tol-sep", type=float, help="separability deviation threshold")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--demo", choices=["symmetric", "asymmetric", "random"])
    common.add_argument("--t-max", type=float, help="scan window end (overrides the model file)")
    common.add_argument("--grid-points", type=int, help="scan grid size (overrides the model file)")

    p = argparse.ArgumentParser(prog="sbsglimpse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a model file")
    sub.add_parser("evolve", parents=[common], help="joint state and branch table at --t")
    sub.add_parser("scan", parents=[common], help="locate glimpses of objectivity in time")
    sub.add_parser("multienv", parents=[common], help="per-environment orthogonality for N >= 2")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(command=args.command, model_path=args.model, out_dir=args.out, t=args.t,
                    tol_orth=args.tol_orth, tol_sep=args.tol_sep, seed=args.seed, demo=args.demo,
                    t_max=args.t_max, grid_points=args.grid_points)
    try:
        return COMMANDS[cfg.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InvalidModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except glimpse.WrongShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE


if __name__ == "__main__":
    sys.exit(main())
