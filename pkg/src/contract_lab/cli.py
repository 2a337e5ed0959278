"""Command line for experiment runs, scaling fits, invariant suites and spherical codes.

Exit status is 0 only when every enabled assertion passes, 1 when an
assertion fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .adversaries import adversary_code, default_delta, make_environment
from .checks import SUITES, run_suites
from .codes import SphericalCode, generate_circle, generate_greedy, validate
from .config import RunConfig, default_out_dir
from .errors import ConfigError, ConsistencyViolation, ContractLabError, TargetUnreached
from .game import Setting
from .harness import emit_csv, emit_scaling, emit_svg, run, scaling_experiment
from .learners import make_learner

log = logging.getLogger("contract_lab")

DOMINANCE_TOL = 1e-6


def build(cfg: RunConfig, T: Optional[int] = None, seed: Optional[int] = None):
    """Fresh ``(environment, learner)`` for a config; ``T`` and ``seed`` override the config's."""
    T = cfg.T if T is None else T
    seed = cfg.seed if seed is None else seed
    name = cfg.environment.name
    code, delta = None, cfg.env_delta
    if name.startswith("adv"):
        delta = delta if delta is not None else default_delta(name, cfg.d, T)
        if name != "adv1":
            if cfg.environment.code:
                code = SphericalCode.from_json(Path(cfg.environment.code).read_text())
            else:
                code = adversary_code(name, cfg.d, T, delta, cfg.K, size=cfg.environment.code_size,
                                      seed=cfg.environment.seed, max_trials=cfg.environment.code_trials)
    env = make_environment(name, d=cfg.d, T=T, delta=delta, K=cfg.K, code=code,
                           seed=cfg.environment.seed + seed, setting=cfg.setting, c_low=cfg.c_low)
    learner = make_learner(cfg.learner.name, d=cfg.d, T=T, setting=cfg.setting, delta=cfg.delta,
                           c_low=cfg.c_low, x0=cfg.learner.x0, seed=cfg.learner.seed + seed)
    return env, learner


def _factory(cfg_json: str, T: int, seed: int):
    return build(RunConfig.from_json(cfg_json), T, seed)


def trajectory_assertions(traj) -> list[tuple[str, bool, str]]:
    hind = traj.column("bench_hindsight")
    opt = traj.column("bench_optimistic")
    gap = float(np.max(hind - opt)) if len(traj) else 0.0
    s = traj.summary
    sums = abs(s["stackelberg_regret"] - float(traj.column("regret").sum())) <= DOMINANCE_TOL
    sums &= abs(s["pessimistic_regret"] - float(traj.column("regret_pess").sum())) <= DOMINANCE_TOL
    return [
        ("benchmark dominance", gap <= DOMINANCE_TOL, f"max hindsight excess {gap:.2e}"),
        ("pessimistic >= classic", s["pessimistic_regret"] >= s["stackelberg_regret"] - DOMINANCE_TOL, ""),
        ("cumulative sums", bool(sums), ""),
    ]


def _report(checks) -> bool:
    ok = True
    for name, passed, detail in checks:
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'} {name}" + (f" ({detail})" if detail else ""))
    return ok


# ----------------------------------------------------------------------
# subcommands


def _config_from_args(args) -> RunConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    data.setdefault("learner", {})
    data.setdefault("environment", {})
    if args.learner:
        data["learner"]["name"] = args.learner
    if args.env:
        data["environment"]["name"] = args.env
    for key in ("setting", "T", "d", "delta", "env_delta", "K", "c_low", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    if getattr(args, "theta_grid", None) is not None:
        data.setdefault("oracle", {})["theta_grid"] = args.theta_grid
    if getattr(args, "code", None):
        data["environment"]["code"] = args.code
    if args.out:
        data.setdefault("output", {})["dir"] = args.out
    return RunConfig.from_dict(data)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    env, learner = build(cfg)
    traj = run(env, learner, cfg.T, grid=cfg.oracle.theta_grid, config=cfg.echo())
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or f"{cfg.learner.name}_{cfg.environment.name}_T{cfg.T}_s{cfg.seed}"
    if cfg.output.csv:
        emit_csv(traj, out / f"{stem}.csv")
    if cfg.output.svg:
        t = traj.column("t")
        emit_svg({"stackelberg": (t, np.cumsum(traj.column("regret"))),
                  "pessimistic": (t, np.cumsum(traj.column("regret_pess")))},
                 out / f"{stem}.svg", title=stem, xlabel="t", ylabel="cumulative regret")
    checks = trajectory_assertions(traj)
    if cfg.output.json_summary:
        snap = {
            "config": cfg.echo(),
            "environment": env.config(),
            "learner": learner.snapshot(),
            "learner_body": learner.body.to_dict() if learner.body is not None else None,
            "theta_hat": traj.theta_hat.tolist(),
            "summary": traj.summary,
            "assertions": {n: bool(p) for n, p, _ in checks},
        }
        (out / f"{stem}.json").write_text(json.dumps(snap, indent=2, default=float))
    print(json.dumps(traj.summary, default=float))
    return 0 if _report(checks) else 1


def cmd_scale(args) -> int:
    Ts = [int(t) for t in args.T_list.split(",")]
    if args.T is None:
        args.T = max(Ts)
    cfg = _config_from_args(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    factory = partial(_factory, cfg.to_json())
    res = scaling_experiment(factory, Ts, seeds, metric=args.metric, workers=args.workers)
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or f"scale_{cfg.learner.name}_{cfg.environment.name}"
    emit_scaling(res, out / f"{stem}.csv", out / f"{stem}.svg")
    print(json.dumps(res))
    checks = []
    if args.expect_slope is not None:
        ok = abs(res["slope"] - args.expect_slope) <= args.slope_tol
        checks.append(("fitted slope", ok, f"{res['slope']:.4f} vs {args.expect_slope} +- {args.slope_tol}"))
    if args.min_regret is not None:
        low = min(r["mean"] for r in res["table"])
        checks.append(("regret floor", low >= args.min_regret, f"min mean {low:.4g}"))
    return 0 if _report(checks) else 1


def cmd_verify(args) -> int:
    names = args.suite or list(SUITES)
    results = run_suites(names)
    return 0 if _report([(f"{s}: {n}", p, d) for s, (n, p, d) in results]) else 1


def cmd_codes(args) -> int:
    if args.action == "validate":
        code = SphericalCode.from_json(Path(args.file).read_text())
        ok = validate(code)
        print(f"{'PASS' if ok else 'FAIL'} {len(code)} words, dim {code.dim}, angle {code.min_angle}")
        return 0 if ok else 1
    rc = 0
    try:
        if args.dim == 2:
            code = generate_circle(args.angle)
        else:
            code = generate_greedy(args.dim, args.angle, args.size, args.trials, args.seed)
    except TargetUnreached as e:
        code, rc = e.code, 1
        print(f"FAIL {e}")
    out = Path(args.out) if args.out else default_out_dir() / f"code_d{args.dim}_n{len(code)}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(code.to_json())
    print(f"wrote {len(code)} words to {out}")
    return rc


# ----------------------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--learner", choices=["alg1", "alg2", "fixed", "random", "greedy", "pricing"])
    p.add_argument("--env", choices=["adv1", "adv2", "adv3", "adv4", "adv5", "random", "two_action"])
    p.add_argument("--setting", choices=[s.value for s in Setting])
    p.add_argument("--T", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--delta", type=float, help="learner padding")
    p.add_argument("--env-delta", dest="env_delta", type=float, help="adversary parameter")
    p.add_argument("--K", type=int)
    p.add_argument("--c-low", dest="c_low", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--code", help="JSON spherical code for the adversary")
    p.add_argument("--out", help="output directory (default: $CONTRACT_LAB_OUT)")
    p.add_argument("--name", help="file stem for outputs")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contract-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="play one learner against one environment")
    _add_run_flags(p)
    p.add_argument("--theta-grid", dest="theta_grid", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("scale", help="regret against horizon with a log-log slope fit")
    _add_run_flags(p)
    p.add_argument("--T-list", dest="T_list", required=True, help="comma separated horizons")
    p.add_argument("--seeds", default="0")
    p.add_argument("--metric", default="pessimistic_regret", choices=["pessimistic_regret", "stackelberg_regret"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--expect-slope", dest="expect_slope", type=float)
    p.add_argument("--slope-tol", dest="slope_tol", type=float, default=0.05)
    p.add_argument("--min-regret", dest="min_regret", type=float)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("--suite", action="append", choices=list(SUITES))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("codes", help="generate or validate spherical codes")
    p.add_argument("action", choices=["generate", "validate"])
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--angle", type=float, default=0.1)
    p.add_argument("--size", type=int, default=10)
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_codes)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ConsistencyViolation as e:
        print(f"FAIL consistency: {e}", file=sys.stderr)
        return 1
    except ContractLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
