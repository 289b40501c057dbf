"""Command line interface.

Subcommands: simulate (draw a dataset from a builtin model), estimate
(run one estimator on a CSV dataset), reproduce (run a named experiment
recipe).  Exit codes: 0 success, 2 bad input, 3 estimation degeneracy.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import pandas as pd

from . import effects, fit, graph, harness, montecarlo, scm

EXIT_INPUT = 2
EXIT_DEGENERATE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trapdoor")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a dataset from a builtin model")
    p_sim.add_argument("--scm", required=True, help=f"one of {sorted(scm.BUILTIN_SCMS)}")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=1)
    p_sim.add_argument("--out", required=True, help="output CSV path")

    p_est = sub.add_parser("estimate", help="estimate an interventional mean from a CSV")
    p_est.add_argument("--data", required=True, help="input CSV path")
    p_est.add_argument("--graph", default="fig2c", help=f"one of {sorted(graph.BUILTIN_GRAPHS)}")
    p_est.add_argument("--x", type=float, required=True)
    p_est.add_argument("--strategy", required=True,
                       help="fixed:<v> | marg-mean | cond-mean:X | marg-draw | cond-draw:... | constraint")
    p_est.add_argument("--method", required=True,
                       choices=("nonparametric", "gaussian-analytic", "monte-carlo", "bayes"))
    p_est.add_argument("--N", type=int, default=250)
    p_est.add_argument("--M", type=int, default=250)
    p_est.add_argument("--draws", type=int, default=1000)
    p_est.add_argument("--burn-in", type=int, default=1000)
    p_est.add_argument("--seed", type=int, default=1)
    p_est.add_argument("--format", choices=("csv", "json"), default="json")

    p_rep = sub.add_parser("reproduce", help="run a named experiment recipe")
    p_rep.add_argument("recipe", help="repro:fig-bernoulli | repro:fig-gaussian | repro:sec4.3 | repro:table1")
    p_rep.add_argument("--reps", type=int, default=None)
    p_rep.add_argument("--seed", type=int, default=1)
    p_rep.add_argument("--out-dir", default=None)
    p_rep.add_argument("--workers", type=int, default=1)
    p_rep.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _cmd_simulate(args) -> int:
    spec = scm.get_scm(args.scm)
    data = scm.simulate(spec, args.n, args.seed)
    data.to_csv(args.out)
    print(f"wrote {args.n} rows to {args.out}")
    return 0


def _estimate_once(args) -> dict:
    data = scm.Dataset.from_csv(args.data)
    graph.get_graph(args.graph)  # validates the key
    strat = effects.TrapdoorStrategy.parse(args.strategy)
    out = {"x": args.x, "strategy": strat.spec_string(), "method": args.method}

    if args.method == "nonparametric":
        tables = harness._binary_tables(data)
        out["estimate"] = harness._estimate_binary(tables, args.x, strat)
        return out

    if args.method == "gaussian-analytic":
        out["estimate"] = harness._estimate_gaussian_analytic(
            data, args.x, strat, args.draws, args.seed
        )
        if args.draws > 0:
            samples = harness.gaussian_bayes_estimate(data, strat, args.x, args.draws, args.seed)
            out["posterior_sd"] = float(np.std(samples, ddof=1))
        return out

    if args.method == "monte-carlo":
        if {"S", "G"} <= set(data.df.columns):
            z_given = [] if strat.kind in ("fixed", "constraint") else [tuple(strat.given)]
            model = fit.fit_glm(data, z_given=z_given)
            sample = montecarlo.algorithm1(model, args.x, strat, args.N, args.M, args.seed)
        else:
            model = fit.fit_gaussian(data)
            aux = None
            if strat.kind not in ("fixed", "constraint"):
                aux = fit.fit_linear_z(data, strat.given)
            sample = montecarlo.algorithm1(model, args.x, strat, args.N, args.M, args.seed, z_aux=aux)
        out["estimate"] = montecarlo.weighted_mean(sample)
        out["mcse"] = montecarlo.mcse(sample)
        out["ess"] = sample.ess
        return out

    res = montecarlo.bayes_effect(
        data, strat, args.x, N=args.N, M=args.M,
        draws=args.draws, seed=args.seed, burn_in=args.burn_in,
    )
    out["estimate"] = res.posterior_mean
    out["posterior_sd"] = res.posterior_sd
    out["avg_mcse"] = res.avg_mcse
    q = res.quantiles((0.025, 0.975))
    out["ci_lower"], out["ci_upper"] = float(q[0]), float(q[1])
    return out


def _cmd_estimate(args) -> int:
    result = _estimate_once(args)
    if args.format == "json":
        print(json.dumps(result, indent=2))
    else:
        print(pd.DataFrame([result]).to_csv(index=False), end="")
    return 0


def _cmd_reproduce(args) -> int:
    result = harness.run_recipe(
        args.recipe, reps=args.reps, seed=args.seed,
        out_dir=args.out_dir, workers=args.workers,
    )
    if isinstance(result, dict):
        print(json.dumps(result, indent=2))
        return 0
    summary, _ = result
    if args.format == "json":
        print(summary.to_json(orient="records", indent=2))
    else:
        print(summary.to_csv(index=False), end="")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code not in (0, None) else 0
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        return _cmd_reproduce(args)
    except (montecarlo.WeightDegeneracyError, fit.FitError, fit.UndefinedCellError) as e:
        print(f"estimation failed: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (graph.GraphInputError, scm.GenerationError, effects.StrategyError,
            harness.ConfigError, FileNotFoundError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
