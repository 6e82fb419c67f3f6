"""Command-line entry point: simulate | rates | conditions | verify |
calibrate, with strict configs, deterministic artifacts, and run manifests."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import (
    CALIBRATE_KEYS,
    CONDITIONS_KEYS,
    DEFAULT_BUDGET,
    VERIFY_KEYS,
    ConfigError,
    _check_keys,
    build_plan,
    build_process,
    load_config,
    simulate_params,
)
from .dependence import (
    check_covariance_inequality,
    coboundary,
    envelope_contraction_check,
    an_bn,
    series_C1_C2,
    series_condalpha1,
    series_condphi,
    series_projective,
)
from .experiments import calibration_floor, run_experiment, theoretical_exponent
from .io import (
    RunManifest,
    config_digest,
    read_manifest,
    save_batch,
    svg_rate_plot,
    write_csv,
    write_json,
    write_manifest,
)
from .metrics import GridFunction, smoothing_lemma_check
from .processes import (
    DavydovChain,
    FiniteKernel,
    InnovationLaw,
    LinearProcess,
    ExpandingMap,
    ProcessError,
    partial_sums_batch,
    transfer_duality_residual,
    _davydov_cache,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


class BudgetError(RuntimeError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _pool_map(fn, items, threads: int):
    """Map preserving input order; results are reduced identically for any
    thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _prepare_out(args, cfg: dict) -> tuple:
    out_dir = args.out or cfg.get("out") or "cltlab-out"
    os.makedirs(out_dir, exist_ok=True)
    digest = config_digest(cfg)
    manifest_path = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest_path):
        old = read_manifest(out_dir)
        if old.config_digest != digest:
            raise ConfigError(
                f"output directory {out_dir!r} holds a run with config digest "
                f"{old.config_digest[:12]}..., which does not match this config "
                f"({digest[:12]}...); choose a fresh --out or restore the config"
            )
    return out_dir, digest


def _finish(out_dir: str, cfg: dict, digest: str, started: str, outputs: list) -> None:
    manifest = RunManifest(
        config_digest=digest,
        config=cfg,
        version=__version__,
        seed=cfg["seed"],
        started=started,
        finished=_now(),
        tolerances=cfg["tolerances"],
        outputs=tuple(outputs),
    )
    write_manifest(out_dir, manifest)


def _load(args) -> dict:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dict(cfg)
        cfg["seed"] = args.seed
    return cfg


def _formats(args) -> set:
    return {"csv", "json", "svg"} if args.format == "all" else {args.format}


def _check_budget(cfg: dict, m: int, n_max: int) -> None:
    budget = cfg.get("budget", DEFAULT_BUDGET)
    if m * n_max > budget:
        raise BudgetError(
            f"requested {m} replicates x n = {n_max} exceeds the budget of "
            f"{budget} replicate-steps; raise 'budget' or shrink the plan"
        )


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = _load(args)
    spec = build_process(cfg)
    n_grid, m = simulate_params(cfg)
    _check_budget(cfg, m, max(n_grid))
    out_dir, digest = _prepare_out(args, cfg)
    started = _now()
    batch = partial_sums_batch(spec, n_grid, m, seed=cfg["seed"])
    outputs = ["trajectories.cltr"]
    save_batch(os.path.join(out_dir, "trajectories.cltr"), batch)
    if "csv" in _formats(args):
        rows = [(n, rep, float(batch.values(n)[rep])) for n in n_grid for rep in range(m)]
        write_csv(os.path.join(out_dir, "trajectories.csv"), ("n", "replicate", "value"), rows)
        outputs.append("trajectories.csv")
    _finish(out_dir, cfg, digest, started, outputs)
    print(f"wrote {len(outputs)} file(s) to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# rates


def cmd_rates(args) -> int:
    cfg = _load(args)
    plan = build_plan(cfg)
    _check_budget(cfg, plan.m, max(plan.n_grid))
    out_dir, digest = _prepare_out(args, cfg)
    started = _now()
    if plan.calibration:  # warm the floor cache in parallel; values are cached by key
        _pool_map(lambda r: calibration_floor(plan.m, r), list(plan.r_list), args.threads)
    result = run_experiment(plan)
    outputs = []
    fmts = _formats(args)
    if "csv" in fmts:
        rows = [
            (pt["n"], pt["r"], pt["value"], pt["mc_stderr"], pt["floor"], pt["kolmogorov"], pt["sigma"])
            for pt in result.points
        ]
        write_csv(
            os.path.join(out_dir, "rates.csv"),
            ("n", "r", "value", "mc_stderr", "floor", "kolmogorov", "sigma"),
            rows,
        )
        outputs.append("rates.csv")
    if "json" in fmts:
        write_json(
            os.path.join(out_dir, "rates.json"),
            {"sigma2": result.sigma2, "points": list(result.points),
             "fits": {str(r): f for r, f in result.fits.items()}},
        )
        outputs.append("rates.json")
    if "svg" in fmts:
        curves, guides = {}, {}
        ns = np.array(plan.n_grid, dtype=float)
        for r in plan.r_list:
            vals = np.array([pt["value"] for pt in result.points if pt["r"] == r])
            curves[f"W_{r:g}"] = (ns, vals)
            theo = theoretical_exponent(r, plan.p)
            guide = vals[0] * (ns / ns[0]) ** theo["w_exp"]
            if theo["log_factor"]:
                guide = guide * np.log(ns) / np.log(ns[0])
            guides[f"n^{theo['w_exp']:g}"] = (ns, guide)
        svg_rate_plot(os.path.join(out_dir, "rates.svg"), curves, guides,
                      f"distance decay, p = {plan.p:g}")
        outputs.append("rates.svg")
    _finish(out_dir, cfg, digest, started, outputs)
    for r, fit in sorted(result.fits.items()):
        print(f"r = {r:g}: slope = {fit['slope']}, verdict = {fit['verdict']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# conditions


VALID_CONDITIONS = ("C1", "C2", "Cond1cob", "Cond2cob", "Condcobp3adap",
                    "Cond2cobp3", "condalpha1", "condphi")


def _run_condition(cid: str, cfg: dict, section: dict):
    p = float(section.get("p", 2.5))
    n_terms = int(section.get("n_terms", 64))
    if cid in ("C1", "C2"):
        spec = build_process(cfg)
        rep = series_C1_C2(spec, p, n_terms, outer=int(section.get("outer", 1000)),
                           seed=cfg["seed"])[cid]
        return [(cid, "", rep)]
    if cid in ("Cond1cob", "Cond2cob", "Condcobp3adap", "Cond2cobp3"):
        spec = build_process(cfg)
        rep = series_projective(spec, cid, p, n_terms, mc=int(section.get("mc", 10**5)),
                                seed=cfg["seed"])
        return [(cid, "", rep)]
    if cid == "condalpha1":
        a = float(section.get("alpha_decay", 2.0))
        b = float(section.get("q_moment", 4.0))
        if a <= 0 or b <= 2:
            raise ConfigError("'conditions.alpha_decay' must be positive and "
                              "'conditions.q_moment' above 2")
        alpha = [0.25 * k**-a for k in range(1, n_terms + 1)]
        reps = series_condalpha1(lambda u: u ** (-1.0 / b), alpha, p)
        return [(cid, name, reps[name]) for name in ("log_weighted", "p_norm")]
    # condphi
    c = float(section.get("phi_decay", 2.0))
    s = float(section.get("s", max(p, 2.5)))
    phi2 = [min(1.0, k**-c) for k in range(1, n_terms + 1)]
    return [(cid, "", series_condphi(phi2, p, s))]


def cmd_conditions(args) -> int:
    cfg = _load(args)
    if "conditions" not in cfg:
        raise ConfigError("missing required key 'config.conditions'")
    section = cfg["conditions"]
    _check_keys(section, CONDITIONS_KEYS, "conditions")
    ids = section.get("ids")
    if not ids:
        raise ConfigError(
            f"'conditions.ids' must be a nonempty list; valid ids: {list(VALID_CONDITIONS)}"
        )
    for cid in ids:
        if cid not in VALID_CONDITIONS:
            raise ConfigError(
                f"unknown condition id {cid!r} in 'conditions.ids'; valid ids: "
                f"{list(VALID_CONDITIONS)}"
            )
    out_dir, digest = _prepare_out(args, cfg)
    started = _now()
    groups = _pool_map(lambda cid: _run_condition(cid, cfg, section), list(ids), args.threads)
    rows = []
    for group in groups:
        for cid, component, rep in group:
            rows.append((cid, component, rep.verdict, len(rep.terms),
                         float(rep.terms[-1]), float(rep.partial_sums[-1])))
    outputs = []
    fmts = _formats(args)
    header = ("id", "component", "verdict", "n_terms", "last_term", "partial_sum")
    if "csv" in fmts:
        write_csv(os.path.join(out_dir, "conditions.csv"), header, rows)
        outputs.append("conditions.csv")
    if "json" in fmts:
        write_json(os.path.join(out_dir, "conditions.json"),
                   {"table": [dict(zip(header, row)) for row in rows]})
        outputs.append("conditions.json")
    _finish(out_dir, cfg, digest, started, outputs)
    width = max(len(r[0]) + len(r[1]) for r in rows) + 1
    for row in rows:
        label = f"{row[0]}{'.' + row[1] if row[1] else ''}"
        print(f"{label:<{width}} {row[2]:<14} partial_sum = {row[5]:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _verify_chain(perturb: float):
    kernel, f = _davydov_cache(DavydovChain(2.5, 0.1, "f1", 24))
    if perturb:
        bad = kernel.matrix.copy()
        bad[0, 0] += perturb
        kernel = FiniteKernel(kernel.states, bad, kernel.stationary)
    return kernel, f


def _check_covariance(cfg: dict, section: dict) -> dict:
    cases = int(section.get("cases", 25))
    perturb = float(section.get("perturb_kernel", 0.0))
    try:
        kernel, _ = _verify_chain(perturb)
    except ProcessError as exc:
        return {"passed": False, "detail": f"kernel invariant violated: {exc}"}
    gen = np.random.default_rng(cfg["seed"])
    worst = 0.0
    for _ in range(cases):
        k = int(gen.integers(2, 4))
        f_list = [gen.normal(size=kernel.size) for _ in range(k)]
        t_list = np.sort(gen.choice(np.arange(1, 13), size=k, replace=False))
        res = check_covariance_inequality(kernel, f_list, list(t_list))
        if not res["ok"]:
            return {"passed": False,
                    "detail": f"covariance bound violated: lhs {res['lhs']:.6g} exceeds "
                              f"min bound {min(res['rhs_forms'].values()):.6g}"}
        worst = max(worst, res["lhs"] / max(min(res["rhs_forms"].values()), 1e-300))
    return {"passed": True, "detail": f"{cases} cases, worst lhs/bound ratio {worst:.3g}"}


def _check_envelope(cfg: dict, section: dict) -> dict:
    cases = int(section.get("cases", 25))
    slack = cfg["tolerances"]["envelope_slack"]
    kernel, _ = _verify_chain(0.0)
    gen = np.random.default_rng(cfg["seed"] + 1)
    for i in range(cases):
        g = gen.normal(size=(kernel.size, kernel.size))
        p = float(gen.uniform(1.0, 3.0))
        res = envelope_contraction_check(kernel, g, p)
        if res["lhs"] > res["rhs"] * (1.0 + slack) + slack:
            return {"passed": False,
                    "detail": f"conditional expectation expanded the envelope norm: "
                              f"{res['lhs']:.6g} > {res['rhs']:.6g}"}
    return {"passed": True, "detail": f"{cases} cases contracted"}


def _check_smoothing(cfg: dict, section: dict) -> dict:
    cases = [(r, p, t) for r in (0.5, 1.0, 1.5, 2.0) for p in (2.0, 2.5, 3.0)
             for t in (0.25, 1.0) if p >= r]
    f = GridFunction.from_callable(lambda x: np.abs(x), lo=-12.0, hi=12.0, n=2**14 + 1)
    for r, p, t in cases:
        res = smoothing_lemma_check(f, r, p, t)
        if not res["ok"]:
            return {"passed": False,
                    "detail": f"smoothing bound violated at r={r}, p={p}, t={t}: "
                              f"{res['lhs']:.6g} > {res['rhs']:.6g}"}
    return {"passed": True, "detail": f"{len(cases)} (r, p, t) cases bounded"}


def _check_window(cfg: dict, section: dict) -> dict:
    rules = {"geometric": lambda j: 0.6**j if j >= 0 else 0.0,
             "power": lambda j: float(j) ** -2.0 if j >= 1 else (1.0 if j == 0 else 0.0)}
    for name, rule in rules.items():
        for n in (16, 256, 1024):
            res = an_bn(rule, n)
            if res["A_n"] > 4.0 * res["B_n"] * (1.0 + 1e-12):
                return {"passed": False,
                        "detail": f"window bound violated for {name} rule at n={n}: "
                                  f"A_n {res['A_n']:.6g} > 4 B_n {4 * res['B_n']:.6g}"}
    return {"passed": True, "detail": "A_n <= 4 B_n for all rules and n"}


def _check_coboundary(cfg: dict, section: dict) -> dict:
    tol = cfg["tolerances"]["coboundary"]
    rule = lambda j: 0.5**j if j >= 0 else 0.0
    rule.config = {"rule": "geometric", "ratio": 0.5, "scale": 1.0}
    dec = coboundary(LinearProcess(rule, InnovationLaw("gaussian"), truncation=64))
    res = dec.identity_check(256, cfg["seed"])
    if res["max_residual"] > tol:
        return {"passed": False,
                "detail": f"partial-sum split residual {res['max_residual']:.3g} above {tol:g}"}
    return {"passed": True, "detail": f"max residual {res['max_residual']:.3g}"}


def _check_duality(cfg: dict, section: dict) -> dict:
    tol = cfg["tolerances"]["duality"]
    spec = ExpandingMap("beta", beta=2.0)
    worst = 0.0
    for dh in range(4):
        for df in range(4):
            worst = max(worst, transfer_duality_residual(
                spec, lambda x, d=dh: x**d, lambda x, d=df: x**d))
    if worst > tol:
        return {"passed": False, "detail": f"duality residual {worst:.3g} above {tol:g}"}
    return {"passed": True, "detail": f"max residual over polynomial pairs {worst:.3g}"}


VERIFY_CHECKS = {
    "covariance-inequality": _check_covariance,
    "envelope-contraction": _check_envelope,
    "smoothing-lemma": _check_smoothing,
    "partial-sum-window": _check_window,
    "coboundary-residual": _check_coboundary,
    "kernel-duality": _check_duality,
}


def cmd_verify(args) -> int:
    if args.list:
        for name in VERIFY_CHECKS:
            print(name)
        return EXIT_OK
    cfg = _load(args)
    section = cfg.get("verify", {})
    _check_keys(section, VERIFY_KEYS, "verify")
    names = section.get("checks", list(VERIFY_CHECKS))
    for name in names:
        if name not in VERIFY_CHECKS:
            raise ConfigError(
                f"unknown check {name!r} in 'verify.checks'; valid: {list(VERIFY_CHECKS)}"
            )
    out_dir, digest = _prepare_out(args, cfg)
    started = _now()
    results = _pool_map(lambda n: (n, VERIFY_CHECKS[n](cfg, section)), list(names), args.threads)
    rows = [(name, "pass" if res["passed"] else "fail", res["detail"]) for name, res in results]
    outputs = []
    fmts = _formats(args)
    if "csv" in fmts:
        write_csv(os.path.join(out_dir, "verify.csv"), ("check", "status", "detail"), rows)
        outputs.append("verify.csv")
    if "json" in fmts:
        write_json(os.path.join(out_dir, "verify.json"),
                   {"table": [dict(zip(("check", "status", "detail"), row)) for row in rows]})
        outputs.append("verify.json")
    _finish(out_dir, cfg, digest, started, outputs)
    failed = [row for row in rows if row[1] == "fail"]
    for row in rows:
        print(f"{row[0]:<24} {row[1]:<5} {row[2]}")
    print(f"{len(rows) - len(failed)} passed, {len(failed)} failed")
    return EXIT_INTERNAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    if "calibrate" not in cfg:
        raise ConfigError("missing required key 'config.calibrate'")
    section = cfg["calibrate"]
    _check_keys(section, CALIBRATE_KEYS, "calibrate")
    ms = [int(m) for m in section.get("replicates", (10**3, 10**4))]
    rs = [float(r) for r in section.get("r_list", (1.0, 2.0))]
    reps = int(section.get("reps", 100))
    out_dir, digest = _prepare_out(args, cfg)
    started = _now()
    cells = [(m, r) for m in ms for r in rs]
    floors = _pool_map(lambda cell: calibration_floor(cell[0], cell[1], reps=reps), cells,
                       args.threads)
    rows = [(m, r, fl["mean"], fl["stderr"]) for (m, r), fl in zip(cells, floors)]
    outputs = []
    fmts = _formats(args)
    if "csv" in fmts:
        write_csv(os.path.join(out_dir, "calibration.csv"),
                  ("replicates", "r", "floor_mean", "floor_stderr"), rows)
        outputs.append("calibration.csv")
    if "json" in fmts:
        write_json(os.path.join(out_dir, "calibration.json"),
                   {"table": [dict(zip(("replicates", "r", "floor_mean", "floor_stderr"), row))
                              for row in rows]})
        outputs.append("calibration.json")
    _finish(out_dir, cfg, digest, started, outputs)
    for row in rows:
        print(f"m = {row[0]:<8} r = {row[1]:<4g} floor = {row[2]:.6g} +/- {row[3]:.2g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cltlab",
                                     description="distance-decay laboratory for normalized "
                                                 "partial sums of dependent sequences")
    parser.add_argument("--version", action="version", version=f"cltlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "simulate": (cmd_simulate, "sample normalized partial sums and cache them"),
        "rates": (cmd_rates, "measure distance curves and fit decay exponents"),
        "conditions": (cmd_conditions, "evaluate convergence-condition series"),
        "verify": (cmd_verify, "run the built-in inequality suites"),
        "calibrate": (cmd_calibrate, "tabulate the finite-sample distance floor"),
    }
    for name, (fn, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the JSON run configuration")
        p.add_argument("--out", help="output directory (default from config or ./cltlab-out)")
        p.add_argument("--threads", type=int, default=1, help="worker pool size")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--format", choices=("csv", "json", "svg", "all"), default="all")
        if name == "verify":
            p.add_argument("--list", action="store_true", help="enumerate checks and exit")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ProcessError as exc:
        if "budget" in str(exc):
            print(f"budget error: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps to exit 1
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
