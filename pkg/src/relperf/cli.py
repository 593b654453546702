"""Command-line interface: config ingestion, orchestration, CSV/JSON output.

Subcommands: equilibrium, mfg, best-response, simulate, spike-test, figures,
verify.  Exit codes: 0 success, 1 validation error, 2 numerical failure
(non-convergence or non-finite results, with a diagnostic JSON when an
output path is available).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import best_response as br
from . import diagnostics, mfg, nagent, simulate
from .core import AgentType, TimeGrid, TypeDistribution, ValidationError
from .discount import DiscountFunction, HyperbolicDiscount, discount_from_dict
from .nagent import NAgentEquilibrium, Population

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class NumericalFailure(RuntimeError):
    """Raised when a run produces NaNs or fails to converge."""

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.detail = detail or {}


@dataclass
class RunConfig:
    """Parsed configuration shared by the subcommands."""

    population: Population | None
    distribution: TypeDistribution | None
    discount: DiscountFunction
    grid: TimeGrid
    sim: simulate.SimConfig
    x0: float | list[float]

    def need_population(self) -> Population:
        if self.population is None:
            raise ValidationError("this command requires 'population' in the config")
        return self.population

    def need_distribution(self) -> TypeDistribution:
        if self.distribution is None:
            raise ValidationError(
                "this command requires 'type_distribution' in the config")
        return self.distribution


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None

    population = Population.from_dict(raw["population"]) if "population" in raw else None
    distribution = (TypeDistribution.from_dict(raw["type_distribution"])
                    if "type_distribution" in raw else None)
    if "discount" not in raw:
        raise ValidationError("config is missing 'discount'")
    discount = discount_from_dict(raw["discount"])
    grid = TimeGrid.from_dict(raw.get("grid", {"t0": 0.0, "T": 2.0, "n_points": 200}))
    sim_raw = raw.get("sim", {})
    sim = simulate.SimConfig(
        n_paths=int(sim_raw.get("n_paths", 100_000)),
        dt=float(sim_raw.get("dt", 1e-3)),
        seed=int(sim_raw.get("seed", 42)),
        antithetic=bool(sim_raw.get("antithetic", False)),
    )
    x0 = raw.get("x0", 10.0)
    return RunConfig(population, distribution, discount, grid, sim, x0)


def _stamp(deterministic: bool) -> str | None:
    if deterministic:
        return None
    return datetime.now(timezone.utc).isoformat()


def _write_csv(path: str, header: list[str], rows, deterministic: bool):
    with open(path, "w", newline="") as fh:
        stamp = _stamp(deterministic)
        if stamp:
            fh.write(f"# generated-at: {stamp}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: str, payload: dict, deterministic: bool):
    stamp = _stamp(deterministic)
    if stamp:
        payload = {"generated_at": stamp, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _check_finite(name: str, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalFailure(f"{name} produced non-finite values")


def cmd_equilibrium(args) -> int:
    cfg = load_config(args.config)
    pop = cfg.need_population()
    eq = NAgentEquilibrium(pop, cfg.discount, cfg.grid.T)
    times = cfg.grid.times
    strat = eq.sample(cfg.grid)
    _check_finite("equilibrium", strat.intercepts, strat.pi_coeff)
    rows = []
    for i in range(pop.n):
        pis = strat.pi_values(i)
        for j, t in enumerate(times):
            rows.append([i, f"{t:.10g}", f"{pis[j]:.12g}",
                         f"{strat.c_slope[j]:.12g}", f"{strat.intercepts[i, j]:.12g}"])
    _write_csv(args.out, ["agent_id", "t", "pi", "c_slope", "c_intercept"], rows,
               args.deterministic)
    return EXIT_OK


def cmd_mfg(args) -> int:
    cfg = load_config(args.config)
    dist = cfg.need_distribution()
    eq = mfg.MeanFieldEquilibrium(dist, cfg.discount, cfg.grid.T)
    times = cfg.grid.times
    icpts = np.asarray(eq.atom_intercepts(times))
    _check_finite("mfg equilibrium", icpts, eq.atom_coefficients)
    rem = cfg.grid.T + 1.0 - times
    rows = []
    for k, atom in enumerate(dist.types):
        pis = eq.atom_coefficients[k] * rem
        for j, t in enumerate(times):
            rows.append([k, f"{t:.10g}", f"{pis[j]:.12g}",
                         f"{1.0 / rem[j]:.12g}", f"{icpts[k, j]:.12g}"])
    _write_csv(args.out_csv, ["atom_id", "t", "pi", "c_slope", "c_intercept"], rows,
               args.deterministic)
    agg = eq.aggregates
    payload = {
        "aggregates": {"phi": agg.phi, "psi": agg.psi,
                       "e_delta": agg.e_delta, "e_theta": agg.e_theta},
        "atoms": [
            {"atom_id": k, "weight": w, "delta_hat": eq.effective_delta(a),
             "pi_coefficient": float(eq.atom_coefficients[k])}
            for k, (a, w) in enumerate(dist.atoms)
        ],
    }
    _write_json(args.out_json, payload, args.deterministic)
    return EXIT_OK


def cmd_best_response(args) -> int:
    cfg = load_config(args.config)
    pop = cfg.need_population()
    init = br.GridStrategyN.zeros(cfg.grid, pop.n)
    final, report = br.fixed_point_nagent(pop, cfg.discount, init,
                                          tol=args.tol, max_iter=args.max_iter)
    payload = report.to_dict()
    payload["max_cross_coefficient"] = final.max_cross_coefficient()
    closed = br.GridStrategyN.from_equilibrium(
        NAgentEquilibrium(pop, cfg.discount, cfg.grid.T), cfg.grid)
    payload["gap_to_closed_form"] = final.sup_distance(closed)
    _write_json(args.out_json, payload, args.deterministic)
    rows = []
    for i in range(pop.n):
        for j, t in enumerate(cfg.grid.times):
            rows.append([i, f"{t:.10g}", f"{final.pi[i, j]:.12g}",
                         f"{final.p[i, i, j]:.12g}", f"{final.q[i, j]:.12g}"])
    _write_csv(args.out_csv, ["agent_id", "t", "pi", "c_slope", "c_intercept"],
               rows, args.deterministic)
    if not report.converged:
        raise NumericalFailure("fixed-point iteration did not converge",
                               detail=payload)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    pop = cfg.need_population()
    eq = NAgentEquilibrium(pop, cfg.discount, cfg.grid.T)
    checkpoints = np.linspace(cfg.grid.t0, cfg.grid.T, args.checkpoints)
    bundle = simulate.simulate_paths(pop, eq, cfg.grid.t0, cfg.x0, cfg.grid.T,
                                     cfg.sim, record_times=checkpoints)
    _check_finite("simulation", bundle.wealth, bundle.consumption)
    means, covs = simulate.gaussian_moments(pop, eq, cfg.grid.t0, cfg.x0,
                                            bundle.times, cfg.grid.T)
    n_se = np.sqrt(np.maximum(np.diagonal(covs, axis1=1, axis2=2), 0.0)
                   / cfg.sim.n_paths)
    sample_mean = bundle.wealth.mean(axis=0)
    summary = {
        "n_paths": cfg.sim.n_paths,
        "checkpoints": [
            {
                "t": float(t),
                "sample_mean": sample_mean[j].tolist(),
                "exact_mean": means[j].tolist(),
                "mean_se": n_se[j].tolist(),
                "max_mean_gap_over_se": float(
                    np.max(np.abs(sample_mean[j] - means[j])
                           / np.maximum(n_se[j], 1e-300))
                ) if cfg.sim.n_paths > 1 else 0.0,
            }
            for j, t in enumerate(bundle.times)
        ],
    }
    _write_json(args.out_summary, summary, args.deterministic)
    keep = min(args.export_paths, bundle.n_paths)
    trimmed = simulate.PathBundle(bundle.times, bundle.wealth[:keep],
                                  bundle.consumption[:keep], bundle.seed)
    simulate.export_paths_csv(trimmed, args.out_paths,
                              header_comment=None if args.deterministic
                              else f"generated-at: {_stamp(False)}")
    return EXIT_OK


def _parse_pairs(raw: list[str]) -> list[tuple[float, float]]:
    out = []
    for item in raw:
        parts = item.split(",")
        if len(parts) != 2:
            raise ValidationError(f"--v expects 'v1,v2' pairs, got {item!r}")
        out.append((float(parts[0]), float(parts[1])))
    return out


def cmd_spike_test(args) -> int:
    cfg = load_config(args.config)
    pop = cfg.need_population()
    eq = NAgentEquilibrium(pop, cfg.discount, cfg.grid.T)
    times = [float(s) for s in args.times.split(",")]
    eps_list = [float(s) for s in args.eps.split(",")]
    vs = _parse_pairs(args.v)
    agents = None if args.agent is None else [args.agent]
    report = simulate.spike_grid(pop, cfg.discount, eq, times, vs, eps_list,
                                 cfg.sim, cfg.x0, cfg.grid.T, agents=agents)
    _write_json(args.out, report.to_dict(), args.deterministic)
    return EXIT_OK


def _figures_distribution(delta_hat: float) -> TypeDistribution:
    # Single type with delta = 1; theta chosen so delta/(1-theta) = delta_hat.
    theta = 1.0 - 1.0 / delta_hat
    if not 0.0 <= theta < 1.0:
        raise ValidationError("delta-hat values must be >= 1 for the default family")
    return TypeDistribution([(AgentType(delta=1.0, theta=theta, mu=1.0, nu=0.0,
                                        sigma=1.0), 1.0)])


def cmd_figures(args) -> int:
    grid = TimeGrid(0.0, args.T, args.n_points)
    betas = [float(s) for s in args.betas.split(",")]
    delta_hats = [float(s) for s in args.delta_hats.split(",")]
    base_dist = _figures_distribution(1.0)

    rows1 = []
    for beta in betas:
        d = HyperbolicDiscount(rho=args.rho, beta=beta)
        eq = mfg.MeanFieldEquilibrium(base_dist, d, grid.T)
        avg = eq.average_consumption(grid, args.x0)
        _check_finite("figure curve", avg)
        for t, c in zip(grid.times, avg):
            rows1.append([f"{t:.10g}", f"{beta:g}", f"{c:.12g}"])
    _write_csv(Path(args.out_dir) / "fig1.csv", ["t", "beta", "avg_consumption"],
               rows1, args.deterministic)

    d2 = HyperbolicDiscount(rho=args.rho, beta=args.beta_fig2)
    rows2 = []
    for dh in delta_hats:
        eq = mfg.MeanFieldEquilibrium(_figures_distribution(dh), d2, grid.T)
        avg = eq.average_consumption(grid, args.x0)
        _check_finite("figure curve", avg)
        for t, c in zip(grid.times, avg):
            rows2.append([f"{t:.10g}", f"{dh:g}", f"{c:.12g}"])
    _write_csv(Path(args.out_dir) / "fig2.csv",
               ["t", "e_delta_hat", "avg_consumption"], rows2, args.deterministic)
    return EXIT_OK


def _verify_checks(cfg: RunConfig):
    """Yield (name, passed, detail) triples for the verify subcommand."""
    d = cfg.discount
    grid = cfg.grid
    times = grid.times
    yield ("discount lam(0)=1", abs(float(d.value(0.0)) - 1.0) < 1e-12,
           f"lam(0)={float(d.value(0.0)):.17g}")
    mid = 0.5 * (grid.t0 + grid.T)
    split = abs(float(d.log_integral(grid.t0, grid.T))
                - float(d.log_integral(grid.t0, grid.T)
                        - d.log_integral(mid, grid.T))
                - float(d.log_integral(mid, grid.T)))
    yield ("discount log-integral additivity", split < 1e-10, f"split gap={split:.3g}")

    if cfg.population is not None:
        pop = cfg.population
        eq = NAgentEquilibrium(pop, d, grid.T)
        rem = grid.T + 1.0 - times
        ratios = eq.pi_at(times) / rem[:, None]
        lin = float(np.abs(ratios - ratios[0]).max())
        yield ("investment linear in T+1-t", lin < 1e-12, f"max dev={lin:.3g}")
        x = np.linspace(-3.0, 12.0, pop.n)
        term = max(abs(float(eq.consumption(i, grid.T, x[i])) - x[i])
                   for i in range(pop.n))
        yield ("terminal consumption equals wealth", term < 1e-10,
               f"max dev={term:.3g}")
        closed = br.GridStrategyN.from_equilibrium(eq, grid)
        reply = br.best_response_profile(pop, d, closed)
        gap = reply.sup_distance(closed)
        yield ("closed form is a best-response fixed point", gap < 1e-8,
               f"sup gap={gap:.3g}")
        fg = max(diagnostics.check_fg(a, pop.n, grid).max() for a in pop.agents)
        yield ("value-function coefficient ODEs", fg < 1e-12, f"max residual={fg:.3g}")
        rng = np.random.default_rng(7)
        worst = 0.0
        for t in np.linspace(grid.t0, grid.T, 7):
            xs = rng.normal(5.0, 3.0, size=(40, pop.n))
            ri, rc = diagnostics.foc_residuals(eq, 0, float(t), xs)
            worst = max(worst, float(np.max(ri)), float(np.max(rc)))
        yield ("first-order conditions along the equilibrium", worst < 1e-9,
               f"max relative residual={worst:.3g}")

    if cfg.distribution is not None:
        dist = cfg.distribution
        eq = mfg.MeanFieldEquilibrium(dist, d, grid.T)
        agg = eq.aggregates
        e_sig = float(dist.weights @ (dist.field("sigma") * eq.atom_coefficients))
        resid = abs(e_sig * (1.0 - agg.psi) - agg.phi)
        yield ("mean-field investment fixed-point identity", resid < 1e-12,
               f"residual={resid:.3g}")
        e_q = dist.weights @ np.asarray(eq.atom_intercepts(times))
        target = -(np.array([eq.e_delta_hhat(t) for t in times])
                   + agg.e_delta * d.log_value(grid.T - times)) / (1.0 - agg.e_theta)
        gap = float(np.abs(e_q - target).max())
        yield ("mean-field consumption fixed-point identity", gap < 1e-10,
               f"max residual={gap:.3g}")


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    failures = 0
    for name, ok, detail in _verify_checks(cfg):
        print(f"{'PASS' if ok else 'FAIL'}  {name} ({detail})")
        failures += 0 if ok else 1
    print(f"verify: {'PASS' if failures == 0 else f'FAIL ({failures} checks)'}")
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relperf",
        description="Equilibrium strategies of competitive CARA "
                    "investment-consumption games under general discounting.",
    )
    parser.add_argument("--deterministic", action="store_true",
                        help="suppress timestamps so outputs are byte-stable")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="closed-form n-agent equilibrium as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="equilibrium.csv")
    p.set_defaults(fn=cmd_equilibrium)

    p = sub.add_parser("mfg", help="mean-field equilibrium per atom (CSV + JSON)")
    p.add_argument("--config", required=True)
    p.add_argument("--out-csv", default="mfg.csv")
    p.add_argument("--out-json", default="mfg.json")
    p.set_defaults(fn=cmd_mfg)

    p = sub.add_parser("best-response", help="Picard fixed-point iteration")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--out-json", default="iteration.json")
    p.add_argument("--out-csv", default="strategy.csv")
    p.set_defaults(fn=cmd_best_response)

    p = sub.add_parser("simulate", help="Monte Carlo paths + moment checks")
    p.add_argument("--config", required=True)
    p.add_argument("--out-paths", default="paths.csv")
    p.add_argument("--out-summary", default="summary.json")
    p.add_argument("--export-paths", type=int, default=50,
                   help="number of paths written to the CSV")
    p.add_argument("--checkpoints", type=int, default=11)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("spike-test", help="spike-variation optimality check")
    p.add_argument("--config", required=True)
    p.add_argument("--agent", type=int, default=None,
                   help="restrict to one agent (default: all)")
    p.add_argument("--times", default="0,0.5,1,1.5")
    p.add_argument("--v", action="append", default=None,
                   help="perturbation 'v1,v2'; repeatable")
    p.add_argument("--eps", default="0.1,0.05,0.025")
    p.add_argument("--out", default="spike.json")
    p.set_defaults(fn=cmd_spike_test)

    p = sub.add_parser("figures", help="average-consumption curves (fig1/fig2 CSV)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--betas", default="0.5,1,2")
    p.add_argument("--delta-hats", default="1,1.5,2")
    p.add_argument("--beta-fig2", type=float, default=1.0)
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--x0", type=float, default=10.0)
    p.add_argument("--n-points", type=int, default=200)
    p.set_defaults(fn=cmd_figures)

    p = sub.add_parser("verify", help="run analytic identity checks")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "v", None) is None and args.command == "spike-test":
        args.v = ["1,0", "-1,0", "0,1", "0,-1", "1,1", "-1,-1"]
    try:
        return args.fn(args)
    except (ValidationError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        out = getattr(args, "out_json", None) or getattr(args, "out", None)
        if out:
            try:
                _write_json(out, {"error": str(exc), **exc.detail},
                            getattr(args, "deterministic", True))
            except OSError:
                pass
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
