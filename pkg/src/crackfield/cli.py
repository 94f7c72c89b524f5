"""Command-line experiment runner.

    crackfield <command> --config cfg.json [--out DIR] [--seed S] [--replicas R]

Artifacts are staged in a hidden directory and moved into place only when the
command succeeds, followed by ``manifest.json``.  Exit codes: 0 success,
1 model error, 2 config or usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import platform
import shutil
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, Stationary, config_hash, load_config
from .errors import ConfigError, CrackfieldError, ModelError
from .io import sha256_file, write_csv, write_json

COMMANDS = (
    "simulate-ode", "simulate-gillespie", "stationary", "phase-diagram", "critical-point",
    "maxwell", "emission-dist", "zhurkov", "validate",
)


def worker_count() -> int:
    """CPU count, capped by CRACKFIELD_THREADS when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get("CRACKFIELD_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"CRACKFIELD_THREADS must be an integer, got {cap!r}") from None
    return n


class Run:
    """Staging area for one command's artifacts."""

    def __init__(self, out: Path, command: str):
        self.out = out
        self.stage = out / f".staging-{command}-{os.getpid()}"
        self.names: list[str] = []
        if self.stage.exists():
            shutil.rmtree(self.stage)
        self.stage.mkdir(parents=True)

    def path(self, name: str) -> Path:
        if name in self.names:
            raise RuntimeError(f"artifact {name} written twice")
        self.names.append(name)
        return self.stage / name

    def csv(self, name, columns, rows):
        write_csv(self.path(name), columns, rows)

    def json(self, name, obj):
        write_json(self.path(name), obj)

    def commit(self) -> list[dict]:
        arts = []
        for name in self.names:
            src = self.stage / name
            arts.append({"path": name, "sha256": sha256_file(src), "bytes": src.stat().st_size})
            os.replace(src, self.out / name)
        shutil.rmtree(self.stage, ignore_errors=True)
        return arts

    def abort(self):
        shutil.rmtree(self.stage, ignore_errors=True)


# ---------------------------------------------------------------- commands


def cmd_simulate_ode(cfg: Config, run: Run, args) -> None:
    from .kinetics import MaterialState, energy_budget, integrate

    cfg.require("material", "load", "solver")
    params = cfg.model_params()
    program = cfg.load_program()
    s = cfg.solver
    init = cfg.initial
    t0 = float(program.times[0])
    state = MaterialState.initial(params, sigma=np.array(init.sigma) * _mandel_scale(), p=init.p, T=init.T, t=t0)
    t_eval = np.linspace(t0, s.t_end, s.n_output)
    traj = integrate(state, program, params, s.t_end, t_eval=t_eval, rtol=s.rtol, atol=s.atol)
    traj.to_csv(run.path("trajectory.csv"))
    budget = energy_budget(traj, params)
    run.json("ode_summary.json", {
        "n_points": len(traj), "switches": [[t, k] for t, k in traj.events],
        "first_law_relative_residual": budget.relative, "final_p": traj.p[-1], "final_T": traj.T[-1],
        "max_invariant_gap": float(np.abs(traj.u - traj.eps - traj.r).max()),
    })


def _mandel_scale():
    from .tensor import SQRT2

    return np.array([1, 1, 1, SQRT2, SQRT2, SQRT2])


def _rates_for(cfg: Config, kind: str, K: int, birth=None, heal=None):
    from .stochastic import ConstantRates, ShearRates

    if kind == "constant":
        return ConstantRates(tuple(np.atleast_1d(birth)), tuple(np.atleast_1d(heal)))
    cfg.require("shear")
    return ShearRates(cfg.shear_params(), cfg.shear.sigma, K)


def cmd_simulate_gillespie(cfg: Config, run: Run, args) -> None:
    from .stochastic import _replica_task, gillespie_run, mean_field_ode

    cfg.require("stochastic")
    st = cfg.stochastic
    seed = st.seed if args.seed is None else args.seed
    replicas = st.replicas if args.replicas is None else args.replicas
    model = _rates_for(cfg, st.rates, st.K, st.birth, st.heal)
    times = np.linspace(0.0, st.t_end, st.n_samples)
    K = model.K
    samples = []
    if st.export_events:
        for r in range(replicas):
            path = gillespie_run(st.N, model, st.t_end, seed=seed, replica=r)
            path.to_csv(run.path(f"replica_{r:03d}.csv"))
            samples.append(path.sample(times) / st.N)
    else:
        tasks = [(st.N, model, st.t_end, seed, r, times, None) for r in range(replicas)]
        workers = min(worker_count(), replicas)
        if workers > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                samples = list(pool.map(_replica_task, tasks))
        else:
            samples = [_replica_task(a) for a in tasks]
        for r, smp in enumerate(samples):
            cols = ["t"] + [f"x_{k + 1}" for k in range(K)]
            run.csv(f"replica_{r:03d}.csv", cols, np.column_stack([times, smp]))
    stack = np.stack(samples)
    mean, std = stack.mean(axis=0), stack.std(axis=0)
    ode = mean_field_ode(model, times)
    cols = (["t"] + [f"mean_{k + 1}" for k in range(K)] + [f"std_{k + 1}" for k in range(K)]
            + [f"ode_{k + 1}" for k in range(K)])
    run.csv("ensemble_mean.csv", cols, np.column_stack([times, mean, std, ode]))
    gap = float(np.abs(mean - ode).max())
    run.json("gillespie_summary.json", {
        "N": st.N, "K": K, "replicas": replicas, "seed": seed, "sup_gap": gap,
        "bound_5_over_sqrtN": 5 / math.sqrt(st.N), "within_bound": gap <= 5 / math.sqrt(st.N),
    })
    args.seed, args.replicas = seed, replicas


def cmd_stationary(cfg: Config, run: Run, args) -> None:
    from . import stochastic as S

    st = cfg.stationary or Stationary()
    model = _rates_for(cfg, st.rates, 1, st.birth, st.heal)
    summary = {"N": {}, "argmax_F": None, "self_consistent_p": None}
    for N in st.N:
        exact = S.exact_stationary(N, model)
        prod = S.product_form_stationary(N, model, shifted=True)
        unshifted = S.product_form_stationary(N, model, shifted=False)
        asym = S.asymptotic_pmf(N, model)
        run.csv(f"stationary_N{N}.csv", ["n", "exact", "product_form", "asymptotic"],
                np.column_stack([exact.n, exact.pi, prod.pi, asym]))
        summary["N"][str(N)] = {
            "mean": exact.mean(), "variance": exact.variance(),
            "tv_asymptotic": S.total_variation(exact.pi, asym),
            "tv_unshifted_product": S.total_variation(exact.pi, unshifted.pi),
            "max_rel_product_form": float(np.max(np.abs(prod.pi - exact.pi) / np.maximum(exact.pi, 1e-300))),
            "generator_residual": S.generator_residual(exact, model),
            "pair_covariance": S.pair_covariance(exact),
        }
    roots = S.stationary_points(model)
    summary["stationary_points"] = roots
    try:
        summary["argmax_F"] = S.argmax_free_energy(model)
        summary["self_consistent_p"] = S.self_consistent_density(model)
    except ValueError as exc:
        summary["single_peak_note"] = str(exc)
    run.json("stationary_summary.json", summary)


def _betas(block, cfg: Config):
    from .phase import critical_point

    betas = np.asarray(block.betas, dtype=float)
    if block.relative:
        betas = betas * critical_point(cfg.shear_params()).beta_c
    return betas


def cmd_phase_diagram(cfg: Config, run: Run, args) -> None:
    from .phase import critical_point, dsigma_dp, spinodal_scan

    cfg.require("shear", "phase")
    params = cfg.shear_params()
    rows = spinodal_scan(_betas(cfg.phase, cfg), params, n=cfg.phase.n_points)
    table = []
    for row in rows:
        d = dsigma_dp(row.p, params.with_beta(row.beta))
        table += [[row.beta, p, s, ds] for p, s, ds in zip(row.p, row.sigma, d)]
    run.csv("s_curves.csv", ["beta", "p", "sigma", "dsigma_dp"], table)
    summary = {"rows": [{"beta": r.beta, "min_dsigma_dp": r.min_slope, "p_at_min": r.p_at_min, "phase": r.phase}
                        for r in rows]}
    if params.H != params.U:
        try:
            cp = critical_point(params)
            summary["critical_point"] = {"p_c": cp.p_c, "beta_c": cp.beta_c, "sigma_c": cp.sigma_c}
        except ModelError as exc:
            summary["critical_point"] = {"error": str(exc)}
    run.json("phase_summary.json", summary)


def cmd_critical_point(cfg: Config, run: Run, args) -> None:
    from .phase import critical_line, critical_point, free_energy_derivative, printed_critical_point

    cfg.require("shear")
    params = cfg.shear_params()
    if params.H == params.U:
        line = critical_line(params)
        run.json("critical_line.json", {
            "p_c": line.p_c, "beta_sigma2": line.beta_sigma2,
            "beta_sigma2_from_curvature": line.beta_sigma2_curvature,
            "compatible_log_c1_over_c0": line.compatible_log_ratio,
            "curvature_residual": line.curvature_residual, "consistent": line.consistent,
        })
        return
    cp = critical_point(params)
    pr = printed_critical_point(params)
    f4 = free_energy_derivative(cp.p_c, cp.sigma_c, params.with_beta(cp.beta_c), 4)
    run.json("critical_point.json", {
        "p_c": cp.p_c, "beta_c": cp.beta_c, "sigma_c": cp.sigma_c,
        "residuals": dict(zip(("dF", "d2F", "d3F"), cp.residuals(params))), "d4F": f4,
        "printed_variant": {"beta_c": pr.beta_c, "sigma_c": pr.sigma_c,
                            "residuals": dict(zip(("dF", "d2F", "d3F"), pr.residuals(params)))},
    })


def cmd_maxwell(cfg: Config, run: Run, args) -> None:
    from .phase import maxwell_sigma

    cfg.require("shear", "maxwell")
    params = cfg.shear_params()
    rows = []
    for beta in _betas(cfg.maxwell, cfg):
        m = maxwell_sigma(beta, params)
        rows.append([m.beta, m.sigma, m.x1, m.x2, m.gap(params), m.equal_area(params)])
    run.csv("maxwell.csv", ["beta", "sigma_star", "x1", "x2", "F_gap", "equal_area"], rows)


def cmd_emission_dist(cfg: Config, run: Run, args) -> None:
    from .phase import emission_distribution

    cfg.require("shear", "emission")
    em = cfg.emission
    thetas = em.thetas or [cfg.shear.theta]
    fits = []
    for i, th in enumerate(thetas):
        fit = emission_distribution(em.N, cfg.shear_params(theta=th), mass=em.mass)
        fit.to_csv(run.path(f"emission_{i:02d}.csv"))
        fits.append({"theta": th, **fit.summary()})
    run.json("emission_fit.json", {"N": em.N, "mass": em.mass, "fits": fits})


def cmd_zhurkov(cfg: Config, run: Run, args) -> None:
    from .zhurkov import compute_grid, write_grid_csv, zhurkov_fit

    cfg.require("shear", "zhurkov")
    z = cfg.zhurkov
    grid = compute_grid(z.sigma_values(), z.T, cfg.shear_params(), z.p0, cfg.k_B, workers=worker_count())
    fit = zhurkov_fit(grid, z.threshold)
    write_grid_csv(run.path("lifetime_grid.csv"), grid, fit)
    run.json("zhurkov_fit.json", fit.summary())


def cmd_validate(cfg: Config, args) -> dict:
    report = {"valid": True, "blocks": [n for n in type(cfg).model_fields if getattr(cfg, n) is not None]}
    checks = {}
    if cfg.material is not None:
        mp = cfg.model_params()
        checks["material"] = {"families": mp.K, "theta": mp.geometry.theta}
    if cfg.load is not None:
        prog = cfg.load_program()
        checks["load"] = {"mode": prog.mode, "points": len(prog.times)}
    if cfg.shear is not None:
        sp = cfg.shear_params()
        checks["shear"] = {"beta": sp.beta, "theta": sp.theta}
    report["checks"] = checks
    needs = {
        "simulate-ode": ("material", "load", "solver"), "simulate-gillespie": ("stochastic",),
        "stationary": ("shear",), "phase-diagram": ("shear", "phase"), "critical-point": ("shear",),
        "maxwell": ("shear", "maxwell"), "emission-dist": ("shear", "emission"), "zhurkov": ("shear", "zhurkov"),
    }
    report["runnable"] = [c for c, req in needs.items() if all(getattr(cfg, r) is not None for r in req)]
    return report


HANDLERS = {
    "simulate-ode": cmd_simulate_ode, "simulate-gillespie": cmd_simulate_gillespie, "stationary": cmd_stationary,
    "phase-diagram": cmd_phase_diagram, "critical-point": cmd_critical_point, "maxwell": cmd_maxwell,
    "emission-dist": cmd_emission_dist, "zhurkov": cmd_zhurkov,
}


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crackfield", description="Microcrack kinetics experiments")
    parser.add_argument("--version", action="version", version=f"crackfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True, help="JSON config file")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replicas", type=int, default=None)
    return parser


def _versions() -> dict:
    import pydantic
    import scipy

    return {"crackfield": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pydantic": pydantic.VERSION}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.replicas is not None and args.replicas < 1:
            raise ConfigError("--replicas must be at least 1")
        if args.command == "validate":
            from .io import json_text

            sys.stdout.write(json_text(cmd_validate(cfg, args)))
            return 0
        out = Path(args.out) if args.out is not None else Path(cfg.output_dir)
        start = time.perf_counter()
        run = Run(out, args.command)
        try:
            HANDLERS[args.command](cfg, run, args)
            artifacts = run.commit()
        except BaseException:
            run.abort()
            raise
        write_json(out / "manifest.json", {
            "command": args.command, "config": str(args.config), "config_sha256": config_hash(args.config),
            "seed": args.seed if args.seed is not None else (cfg.stochastic.seed if cfg.stochastic else None),
            "replicas": args.replicas, "versions": _versions(),
            "wall_time_s": time.perf_counter() - start,
            "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "artifacts": artifacts,
        })
        print(f"{args.command}: wrote {len(artifacts)} artifact(s) to {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CrackfieldError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"model error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
