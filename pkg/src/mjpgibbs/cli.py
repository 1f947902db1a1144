"""Command line interface: ``mjpgibbs mjp|ctbn|oracle|experiments``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io
from .core import ObservationSet, UniformizationPolicy, sufficient_stats
from .ctbn import ctbn_gibbs_sweep, ctbn_stats, sample_ctbn_prior
from .diagnostics import summarize
from .errors import BudgetExceededError, ConfigError, DomainError, InconsistentEvidenceError
from .mjp import MjpProblem, iter_chain

EXIT_OK, EXIT_CONFIG, EXIT_EVIDENCE, EXIT_BUDGET = 0, 2, 3, 4


def _dump(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _sampler_flags(p):
    p.add_argument("--interval", nargs=2, type=float, metavar=("T_START", "T_END"), required=True)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--omega-multiplier", type=float, default=2.0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--truth", help="SufficientStats JSON; enables diagnostics.json")


def _write_outputs(out, samples, labels, sizes, evidences, seconds):
    io.write_rows(out / "samples.csv", ["sample"] + labels,
                  [[i] + list(v) for i, v in enumerate(samples)])
    io.write_rows(out / "trace.csv", ["iteration", "grid_size", "log_evidence", "seconds"],
                  [[i, s, e, t] for i, (s, e, t) in enumerate(zip(sizes, evidences, seconds))])


def cmd_mjp(args) -> int:
    A, pi, lik = io.load_mjp_model(args.model)
    obs = (io.load_mjp_observations(args.observations, lik, A.n) if args.observations
           else ObservationSet.empty(A.n))
    t0, t1 = args.interval
    problem = MjpProblem(A, pi, t0, t1, obs, UniformizationPolicy(args.omega_multiplier))
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats, sizes, evs, secs = [], [], [], []
    for step in iter_chain(problem, args.iterations, args.burn_in, rng):
        sizes.append(step.grid_size)
        evs.append(step.log_evidence)
        secs.append(step.seconds)
        if step.retained:
            stats.append(sufficient_stats(step.path, A.n))
    labels = stats[0].labels()
    _write_outputs(out, [s.to_vector() for s in stats], labels, sizes, evs, secs)
    truth = io.load_stats(args.truth) if args.truth else None
    summary = summarize(stats, truth)
    _dump(out / "summary.json", {
        "iterations": args.iterations, "burn_in": args.burn_in, "seed": args.seed,
        "omega": problem.omega, "mean_grid_size": float(np.mean(sizes)),
        "seconds": float(np.sum(secs)),
        "mean": {k: v["mean"] for k, v in summary["statistics"].items()},
        "version": __version__,
    })
    if truth is not None:
        _dump(out / "diagnostics.json", summary)
    return EXIT_OK


def cmd_ctbn(args) -> int:
    model, liks = io.load_ctbn_model(args.model)
    obs = io.load_ctbn_observations(args.observations, model, liks) if args.observations else {}
    t0, t1 = args.interval
    for o in obs.values():
        o.check_interval(t0, t1)
    policy = UniformizationPolicy(args.omega_multiplier)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.sweeps > args.burn_in >= 0:
        raise DomainError("need sweeps > burn-in >= 0")
    path = sample_ctbn_prior(model, (t0, t1), rng, initial_states=_initial_states(model, obs, t0, rng))
    stats, sizes, evs, secs = [], [], [], []
    for it in range(args.sweeps):
        info = []
        tic = time.perf_counter()
        path = ctbn_gibbs_sweep(model, path, obs, policy=policy, rng=rng, info=info)
        secs.append(time.perf_counter() - tic)
        sizes.append(sum(i.grid_size for i in info))
        evs.append(info[-1].log_evidence)
        if it >= args.burn_in:
            stats.append(ctbn_stats(model, path))
    labels = []
    for k, s in enumerate(stats[0]):
        labels += s.labels(prefix=f"{model.names[k]}.")
    _write_outputs(out, [np.concatenate([s.to_vector() for s in st]) for st in stats], labels,
                   sizes, evs, secs)
    truth = io.load_stats(args.truth) if args.truth else None
    summary = summarize(stats, truth)
    _dump(out / "summary.json", {
        "sweeps": args.sweeps, "burn_in": args.burn_in, "seed": args.seed,
        "mean_grid_size": float(np.mean(sizes)), "seconds": float(np.sum(secs)),
        "mean": {k: v["mean"] for k, v in summary["statistics"].items()},
        "nodes": list(model.names), "version": __version__,
    })
    if truth is not None:
        _dump(out / "diagnostics.json", summary)
    return EXIT_OK


def _initial_states(model, obs, t0, rng):
    # start from states consistent with any observation at t_start
    states = model.sample_initial(rng)
    for k, o in obs.items():
        if len(o) and o.times[0] == t0:
            w = o.likelihoods[0]
            if model.initial_marginals is not None:
                w = w * model.initial_marginals[k].weights
            if w.sum() > 0:
                states[k] = int(rng.choice(w.size, p=w / w.sum()))
    return states


def cmd_oracle(args) -> int:
    from . import oracles

    A, pi, lik = io.load_mjp_model(args.model)
    out = {}
    if args.op == "expm":
        out["matrix"] = oracles.transition_matrix(A, args.time).tolist()
    elif args.op in ("marginals", "stats", "evidence"):
        obs = (io.load_mjp_observations(args.observations, lik, A.n) if args.observations
               else ObservationSet.empty(A.n))
        t0, t1 = args.interval
        problem = MjpProblem(A, pi, t0, t1, obs)
        if args.op == "marginals":
            query = np.array(args.query if args.query else np.linspace(t0, t1, 11))
            post = oracles.exact_posterior_marginals(problem, query)
            out["times"] = post.times.tolist()
            out["marginals"] = post.probs.tolist()
        elif args.op == "stats":
            out = io.stats_to_json(oracles.exact_sufficient_stats(problem, args.step))
        else:
            out["log_evidence"] = oracles.log_evidence(problem)
    else:
        rng = np.random.default_rng(args.seed)
        t0, t1 = args.interval
        paths, rejected = [], 0
        for _ in range(args.samples):
            p, r = oracles.rejection_sample_endpoint(A, args.start, args.end, (t0, t1), rng)
            rejected += r
            paths.append(p)
        out["samples"] = args.samples
        out["acceptance_rate"] = args.samples / (args.samples + rejected)
        mid = 0.5 * (t0 + t1)
        out["midpoint_marginal"] = (np.bincount([p.state_at(mid) for p in paths],
                                                minlength=A.n) / args.samples).tolist()
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_experiments(args) -> int:
    from .experiments import load_config, run_experiment

    config = load_config(args.config)
    if config["experiment"] != args.kind:
        raise ConfigError(f"config describes experiment {config['experiment']!r}, "
                          f"not {args.kind!r}")
    run_experiment(config, args.out, seed=args.seed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mjpgibbs", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mjp", help="posterior sampling for a single MJP")
    p.add_argument("--model", required=True, help="MJP model JSON")
    p.add_argument("--observations", help="CSV with header time,payload")
    p.add_argument("--iterations", type=int, default=1000)
    _sampler_flags(p)
    p.set_defaults(func=cmd_mjp)

    p = sub.add_parser("ctbn", help="posterior sampling for a CTBN")
    p.add_argument("--model", required=True, help="CTBN model JSON")
    p.add_argument("--observations", help="CSV with header node,time,payload")
    p.add_argument("--sweeps", type=int, default=1000)
    _sampler_flags(p)
    p.set_defaults(func=cmd_ctbn)

    p = sub.add_parser("oracle", help="exact reference computations")
    p.add_argument("op", choices=["expm", "marginals", "stats", "evidence", "rejection"])
    p.add_argument("--model", required=True)
    p.add_argument("--observations")
    p.add_argument("--interval", nargs=2, type=float, default=(0.0, 1.0))
    p.add_argument("--time", type=float, default=1.0, help="expm time")
    p.add_argument("--query", type=float, nargs="*", help="marginal query times")
    p.add_argument("--step", type=float, default=1e-3, help="stats grid step")
    p.add_argument("--start", type=int, default=0, help="rejection start state")
    p.add_argument("--end", type=int, default=0, help="rejection end state")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiments", help="run an experiment from a JSON config")
    p.add_argument("kind", choices=["lv", "chain", "scaling"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_experiments)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InconsistentEvidenceError as err:
        print(f"inconsistent evidence: {err}", file=sys.stderr)
        return EXIT_EVIDENCE
    except BudgetExceededError as err:
        print(f"budget exceeded: {err}", file=sys.stderr)
        return EXIT_BUDGET
    except (DomainError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
