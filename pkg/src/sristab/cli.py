"""Command-line front end.

Subcommands: ``run`` (experiment grid from a JSON config), ``reproduce``
(the two baked-in reference experiments with their acceptance bands),
``certify`` (assumption battery for a configured problem), ``bias-sweep``
(oracle bias/variance measurement over the lambda grid), and ``apt``
(trace-vs-flow deviation trend).

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 acceptance
band failure under ``reproduce``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .certify import (check_iss_dissipation, check_pl, check_quadratic_growth,
                      check_quadratic_sandwich, estimate_lipschitz,
                      fit_pl_constant, fit_quadratic_growth, LyapunovSpec)
from .core import RandomSource, DomainError
from .dynamics import InclusionSpec, apt_deviation
from .geometry import ConvexSet
from .harness import (ConfigError, ExperimentConfig, acceptance_checks,
                      fig1_config, fig2_config, run_experiment, run_zo_sgd)
from .oracles import (BiasModel, NoiseSpec, ZoEstimatorConfig, fit_bias_model,
                      measure_bias, measure_second_moment)
from .problems import get_problem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_ACCEPTANCE = 4


def _feasible_from_dict(d: dict) -> ConvexSet:
    variant = d.get("variant")
    if variant == "box":
        return ConvexSet.box(d["lo"], d["hi"])
    if variant == "ball":
        return ConvexSet.ball(d["center"], d["radius"])
    if variant == "simplex":
        return ConvexSet.simplex(int(d["dim"]), float(d.get("scale", 1.0)))
    raise ConfigError(f"unknown feasible-set variant {variant!r}")


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from the documented JSON schema."""
    try:
        sched = d.get("schedule", {})
        noise = d.get("noise", {})
        cfg = ExperimentConfig(
            problem=d.get("problem", "f1"),
            algorithm=d.get("algorithm", "zo_sgd"),
            schedule_c=float(sched.get("c", 0.01)),
            schedule_p=float(sched.get("p", 0.6)),
            lambdas=tuple(float(v) for v in d.get("lambdas", [0.1])),
            iterations=int(d.get("iterations", 10_000)),
            x0=tuple(float(v) for v in d.get("x0", (1.0, 1.0))),
            noise=NoiseSpec(
                mean_plus=float(noise.get("mean_plus", 0.0)),
                mean_minus=float(noise.get("mean_minus", 0.0)),
                sigma=float(noise.get("sigma", 0.0)),
                model=noise.get("model", "per_side")),
            direction_law=d.get("direction_law", "gaussian_isotropic"),
            seeds=tuple(int(s) for s in d.get("seeds", [0])),
            feasible=_feasible_from_dict(d["feasible"]) if "feasible" in d else None,
            bias_model=BiasModel(**d["bias_model"]) if "bias_model" in d else None,
            bias_direction=d.get("bias_direction", "fixed"),
            radii=tuple(float(r) for r in d.get("radii", [1.0])),
            deltas=tuple(float(v) for v in d.get("deltas", [0.05])),
            out_dir=d.get("out_dir"),
        )
        return cfg.validate()
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad configuration: {e}") from e


def load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    from dataclasses import replace

    changes = {}
    if args.seeds is not None:
        changes["seeds"] = _parse_seeds(args.seeds)
    if args.iterations is not None:
        changes["iterations"] = args.iterations
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    return replace(cfg, **changes).validate() if changes else cfg


def _parse_seeds(text: str) -> tuple:
    if "," in text:
        return tuple(int(t) for t in text.split(",") if t)
    return tuple(range(int(text)))


def _print_lambda_table(result) -> None:
    for lam in result.config.lambdas:
        q25, q75 = result.quantiles(lam)
        print(f"lambda={lam:<8g} median_gap={result.median_gap(lam):.6g} "
              f"q25={q25:.4g} q75={q75:.4g}")
    for w in result.reference_warnings:
        print(f"warning: {w}")
    if result.io_error:
        print(f"output error: {result.io_error}", file=sys.stderr)


def cmd_run(args) -> int:
    cfg = _apply_overrides(config_from_dict(load_config(args.config)), args)
    result = run_experiment(cfg, jobs=args.jobs)
    _print_lambda_table(result)
    if result.any_diverged():
        bad = [(c.lam, c.seed, c.last_index) for c in result.cells if c.diverged]
        print(f"divergence in {len(bad)} cell(s): {bad}")
        return EXIT_DIVERGENCE
    return EXIT_OK if result.io_error is None else 1


def cmd_reproduce(args) -> int:
    preset = fig1_config if args.name == "fig1" else fig2_config
    cfg = preset()
    cfg = _apply_overrides(cfg, args)
    result = run_experiment(cfg, jobs=args.jobs)
    _print_lambda_table(result)
    checks = acceptance_checks(args.name, result)
    ok = True
    for name, (passed, detail) in checks.items():
        print(f"[{'PASS' if passed else 'FAIL'}] {name} ({detail})")
        ok &= passed
    if result.any_diverged():
        return EXIT_DIVERGENCE
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def cmd_certify(args) -> int:
    raw = load_config(args.config)
    problem = get_problem(raw.get("problem", "f1"))
    radius = float(raw.get("radius", 5.0))
    rng = RandomSource(int(raw.get("seed", 0))).split(1).generator()

    grad = problem.require_grad()
    xstar = problem.xstar

    def shifted_grad(y):
        return grad(y + xstar)

    lyap = LyapunovSpec(
        V=lambda y: 0.5 * np.sum(y * y, axis=1),
        gradV=lambda y: y,
        a_fn=lambda r: 0.5 * r * r,
        b_fn=lambda e: 0.5 * e * e,
        a_low=0.4, a_high=0.6)

    reports = []
    lip = estimate_lipschitz(grad, problem.dim, radius, rng)
    mu = fit_pl_constant(problem, radius, rng)
    reports.append(check_pl(problem, mu, radius, rng))
    r1, r2 = fit_quadratic_growth(problem, radius, rng)
    reports.append(check_quadratic_growth(problem, r1, r2, radius, rng))
    reports.append(check_quadratic_sandwich(lyap, problem.dim, radius, rng))
    eps = float(raw.get("epsilon", 0.1))
    reports.append(check_iss_dissipation(
        lyap, lambda y: -shifted_grad(y), eps, problem.dim, radius, rng))

    print(f"problem={problem.name} lipschitz_lower_estimate={lip:.4g} "
          f"fitted mu={mu:.4g} r1={r1:.4g} r2={r2:.4g}")
    payload = {"problem": problem.name, "lipschitz_estimate": lip,
               "mu": mu, "r1": r1, "r2": r2,
               "reports": [r.to_dict() for r in reports]}
    for r in reports:
        print(f"[{r.verdict.upper():4}] {r.assumption_id} "
              f"worst_margin={r.worst_margin:.3e} samples={r.samples_checked}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certify.json").write_text(json.dumps(payload, indent=2))
        print(f"wrote {out / 'certify.json'}")
    return EXIT_OK


def cmd_bias_sweep(args) -> int:
    raw = load_config(args.config)
    cfg = config_from_dict(raw)
    problem = get_problem(cfg.problem)
    x = np.asarray(raw.get("measure_x", cfg.x0), dtype=float)
    samples = int(raw.get("samples", 200_000))
    rows = []
    for i, lam in enumerate(cfg.lambdas):
        rng = RandomSource(cfg.seeds[0]).split(float(lam), 101).generator()
        zo = ZoEstimatorConfig(lam=lam, direction_law=cfg.direction_law,
                               noise=cfg.noise)
        bias, se = measure_bias(problem, zo, x, samples, rng)
        sm = measure_second_moment(problem, zo, x, samples, rng)
        rows.append((lam, float(np.linalg.norm(bias)), se, sm))
        print(f"lambda={lam:<8g} bias_norm={rows[-1][1]:.5g} se={se:.3g} "
              f"second_moment={sm:.5g}")
    model = fit_bias_model([r[0] for r in rows], [r[1] for r in rows],
                           [r[3] for r in rows])
    print(f"fitted b1={model.b1:.5g} b2={model.b2:.5g} b3={model.b3:.5g} "
          f"lambda*={model.lambda_star:.5g} epsilon(lambda*)={model.epsilon_min:.5g}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["lambda,bias_norm,standard_error,second_moment"]
        lines += [",".join(repr(float(v)) for v in row) for row in rows]
        (out / "bias_sweep.csv").write_text("\n".join(lines) + "\n")
        (out / "bias_model.json").write_text(json.dumps(
            {"b1": model.b1, "b2": model.b2, "b3": model.b3,
             "lambda_star": model.lambda_star,
             "epsilon_min": model.epsilon_min}, indent=2))
        _bias_figure(rows, model, out / "bias_sweep.svg")
        print(f"wrote {out / 'bias_sweep.csv'}")
    return EXIT_OK


def _bias_figure(rows, model, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lams = np.array([r[0] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(lams, [r[1] for r in rows], "o-", label="measured bias norm")
    grid = np.geomspace(lams.min(), lams.max(), 100)
    ax.loglog(grid, model.epsilon(grid), "--",
              label="fitted b1/lam + b2 lam")
    ax.axvline(model.lambda_star, color="gray", lw=0.8)
    ax.set_xlabel("smoothing parameter")
    ax.set_ylabel("bias norm")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_apt(args) -> int:
    raw = load_config(args.config)
    cfg = config_from_dict(raw)
    problem = get_problem(cfg.problem)
    apt_cfg = raw.get("apt", {})
    horizon = float(apt_cfg.get("horizon", 1.0))
    starts = [int(n) for n in apt_cfg.get("start_indices", (100, 1000, 10000))]
    grad = problem.require_grad()
    spec = InclusionSpec(drift=lambda y: -grad(y), epsilon=0.0,
                         lipschitz=problem.constants.get("L"))
    sched = cfg.schedule()
    lines = ["lambda,seed,n,t_start,deviation"]
    for lam in cfg.lambdas:
        zo = ZoEstimatorConfig(lam=lam, direction_law=cfg.direction_law,
                               noise=cfg.noise)
        for seed in cfg.seeds:
            trace, _ = run_zo_sgd(problem, sched, zo, cfg.x0, cfg.iterations,
                                  seed)
            grid = trace.times()
            for n in starts:
                if n >= trace.n_steps:
                    continue
                t0 = grid[n]
                if t0 + horizon > grid[-1]:
                    print(f"lambda={lam:g} seed={seed} n={n}: horizon exceeds "
                          f"trace clock; skipped")
                    continue
                dev = apt_deviation(trace, spec, t0, horizon)
                print(f"lambda={lam:g} seed={seed} n={n} t_start={t0:.4f} "
                      f"deviation={dev:.6g}")
                lines.append(f"{lam!r},{seed},{n},{t0!r},{dev!r}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "apt.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote {out / 'apt.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sristab",
        description="Simulate, certify, and stress-test stochastic recursions "
                    "with persistent bias.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seeds", help="seed count or comma-separated list")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--iterations", type=int)

    p_run = sub.add_parser("run", help="run an experiment grid from a config")
    p_run.add_argument("config")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_rep = sub.add_parser("reproduce", help="reference experiments with bands")
    p_rep.add_argument("name", choices=("fig1", "fig2"))
    common(p_rep)
    p_rep.set_defaults(fn=cmd_reproduce)

    p_cert = sub.add_parser("certify", help="assumption battery for a problem")
    p_cert.add_argument("config")
    common(p_cert)
    p_cert.set_defaults(fn=cmd_certify)

    p_bias = sub.add_parser("bias-sweep", help="oracle bias/variance sweep")
    p_bias.add_argument("config")
    common(p_bias)
    p_bias.set_defaults(fn=cmd_bias_sweep)

    p_apt = sub.add_parser("apt", help="trace-vs-flow deviation trend")
    p_apt.add_argument("config")
    common(p_apt)
    p_apt.set_defaults(fn=cmd_apt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DomainError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
