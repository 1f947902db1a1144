"""Experiment harness: Lotka-Volterra CTBN, chain CTBNs and scaling studies.

Every experiment is driven by a JSON config validated against
:data:`CONFIG_SCHEMA` before any computation and writes its outputs to a
directory.  Outputs depend only on the config and the seed; each chain or
study level draws from its own stream seeded by ``(seed, level, chain)``.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core import (
    Generator,
    InitialDistribution,
    ObservationSet,
    PointMassLikelihood,
    TableLikelihood,
    UniformizationPolicy,
    sufficient_stats,
)
from .ctbn import (
    CtbnModel,
    amalgamate_stats,
    ctbn_gibbs_sweep,
    ctbn_stats,
    flatten_ctbn,
    flatten_observations,
    sample_ctbn_prior,
)
from .diagnostics import ConstantTraceWarning, average_relative_error, effective_sample_size
from .errors import BudgetExceededError, ConfigError
from .io import save_ctbn_model, stats_to_json, write_rows
from .mjp import MjpProblem, iter_chain, sample_prior_path
from .oracles import exact_sufficient_stats

# -- Lotka-Volterra -------------------------------------------------------------------


@dataclass(frozen=True)
class LotkaVolterraSpec:
    """Truncated predator-prey CTBN with noisy population counts.

    Node 0 is the prey, node 1 the predator.  ``initial`` is the true state at
    ``t_start``, observed without noise; ``obs_times`` are the noisy
    observation times of both populations.
    """

    cap: int = 30
    alpha: float = 5e-4
    beta: float = 1e-4
    gamma: float = 5e-4
    delta: float = 1e-4
    t_start: float = 0.0
    t_end: float = 600.0
    obs_times: tuple = (40.0, 80.0, 120.0, 160.0, 200.0, 240.0, 280.0)
    initial: tuple = (10, 10)

    def __post_init__(self):
        if int(self.cap) < 1:
            raise ConfigError("cap must be >= 1")
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            raise ConfigError("rates must be non-negative")
        if not self.t_start < self.t_end:
            raise ConfigError("need t_start < t_end")
        if any(not self.t_start <= t <= self.t_end for t in self.obs_times):
            raise ConfigError("observation times must lie in the interval")
        if len(self.initial) != 2 or any(not 0 <= s <= self.cap for s in self.initial):
            raise ConfigError("initial must hold two populations in [0, cap]")
        object.__setattr__(self, "obs_times", tuple(float(t) for t in self.obs_times))
        object.__setattr__(self, "initial", tuple(int(s) for s in self.initial))

    @classmethod
    def desk(cls, **overrides) -> "LotkaVolterraSpec":
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "LotkaVolterraSpec":
        # observations every 100 time units up to t=1500, none afterwards
        kw = dict(cap=200, t_end=3000.0, obs_times=tuple(100.0 * i for i in range(1, 16)),
                  initial=(50, 50))
        kw.update(overrides)
        return cls(**kw)


def build_lotka_volterra(spec: LotkaVolterraSpec, *, sparse: bool = True) -> CtbnModel:
    """Two-node cyclic CTBN; every conditional generator is tridiagonal.

    Prey births ``alpha*x``, deaths ``beta*x*y``; predator births
    ``delta*x*y``, deaths ``gamma*y``.  Moves leaving ``{0..cap}`` get rate 0.
    """
    n = spec.cap + 1
    pop = np.arange(n, dtype=float)
    prey, pred = [], []
    for other in range(n):
        up = spec.alpha * pop
        down = spec.beta * pop * other
        up[-1] = 0.0
        prey.append(Generator.tridiagonal(up, down, sparse=sparse))
        up = spec.delta * other * pop
        down = spec.gamma * pop
        up[-1] = 0.0
        pred.append(Generator.tridiagonal(up, down, sparse=sparse))
    uniform = InitialDistribution.uniform(n)
    return CtbnModel([n, n], [[1], [0]], [prey, pred], [uniform, uniform],
                     names=["prey", "predator"])


def lv_noise_likelihood(x_obs, s, cap: int | None = None) -> float:
    """``p(x_obs | s)`` proportional to ``1 / (2**|x_obs - s| + 1e-6)``.

    With ``cap`` given the value is normalized over ``x_obs in {0..cap}`` so
    every true state yields a proper distribution of observed counts.
    """
    raw = 1.0 / (2.0 ** abs(int(x_obs) - int(s)) + 1e-6)
    if cap is None:
        return raw
    return raw / float(lv_noise_table(cap)[1][int(s)])


def lv_noise_table(cap: int):
    """``(table, norm)``: ``table[x_obs, s]`` normalized over ``x_obs``; ``norm[s]`` the constants."""
    x = np.arange(cap + 1)
    raw = 1.0 / (2.0 ** np.abs(x[:, None] - x[None, :]) + 1e-6)
    norm = raw.sum(axis=0)
    return raw / norm, norm


def simulate_lv_data(spec: LotkaVolterraSpec, model: CtbnModel, rng):
    """Ground-truth path and per-node observations (noiseless at t_start, noisy after)."""
    truth = sample_ctbn_prior(model, (spec.t_start, spec.t_end), rng, initial_states=spec.initial)
    table, _ = lv_noise_table(spec.cap)
    noisy = TableLikelihood(table)
    obs = {}
    for k in range(2):
        times = [spec.t_start] + list(spec.obs_times)
        states = truth[k].states_at(np.array(spec.obs_times))
        payloads = [int(rng.choice(spec.cap + 1, p=table[:, s])) for s in states]
        lik = _MixedLikelihood(noisy)
        obs[k] = ObservationSet(times, [(0, spec.initial[k])] + [(1, x) for x in payloads],
                                lik, spec.cap + 1)
    return truth, obs


class _MixedLikelihood:
    # payload (0, x): exact count; (1, x): noisy count
    def __init__(self, noisy):
        self.exact = PointMassLikelihood()
        self.noisy = noisy

    def __call__(self, state, payload):
        return float(self.vector(payload, state + 1)[state])

    def vector(self, payload, n):
        kind, x = payload
        return (self.noisy if kind else self.exact).vector(x, n)


def run_lv_experiment(spec: LotkaVolterraSpec, settings: dict, out_dir=None) -> dict:
    """Posterior mean and 5%/95% bands of both populations on a time grid.

    Returns a dict with the band table, the truth on the grid, coverage of
    the truth by the band in the observed region, and timing.
    """
    seed = int(settings.get("seed", 0))
    sweeps = int(settings.get("iterations", 2000))
    burn_in = int(settings.get("burn_in", 200))
    points = int(settings.get("grid_points", 201))
    budget = settings.get("budget_seconds")
    policy = UniformizationPolicy(float(settings.get("omega_multiplier", 2.0)))
    if not sweeps > burn_in >= 0:
        raise ConfigError("need iterations > burn_in >= 0")
    model = build_lotka_volterra(spec, sparse=settings.get("sparse", True))
    data_rng = np.random.default_rng([seed, 0, 0])
    if settings.get("observations", True):
        truth, obs = simulate_lv_data(spec, model, data_rng)
    else:
        truth = sample_ctbn_prior(model, (spec.t_start, spec.t_end), data_rng,
                                  initial_states=spec.initial)
        point = PointMassLikelihood()
        obs = {k: ObservationSet([spec.t_start], [spec.initial[k]], point, spec.cap + 1)
               for k in range(2)}
    grid = np.linspace(spec.t_start, spec.t_end, points)
    rng = np.random.default_rng([seed, 0, 1])
    path = sample_ctbn_prior(model, (spec.t_start, spec.t_end), rng, initial_states=spec.initial)
    draws = np.empty((sweeps - burn_in, 2, points), dtype=np.int64)
    info = []
    tic = time.perf_counter()
    for it in range(sweeps):
        path = ctbn_gibbs_sweep(model, path, obs, policy=policy, rng=rng, info=info)
        if it >= burn_in:
            draws[it - burn_in, 0] = path[0].states_at(grid)
            draws[it - burn_in, 1] = path[1].states_at(grid)
        if budget is not None and time.perf_counter() - tic > float(budget):
            raise BudgetExceededError(f"Lotka-Volterra run exceeded {budget} s after {it + 1} sweeps")
    elapsed = time.perf_counter() - tic
    mean = draws.mean(axis=0)
    lo = np.quantile(draws, 0.05, axis=0)
    hi = np.quantile(draws, 0.95, axis=0)
    true_grid = np.array([truth[0].states_at(grid), truth[1].states_at(grid)])
    last_obs = max(spec.obs_times) if spec.obs_times else spec.t_start
    region = grid <= last_obs
    inside = (true_grid >= lo) & (true_grid <= hi)
    coverage = float(inside[:, region].mean())
    band = []
    for j, t in enumerate(grid):
        band.append([float(t), mean[0, j], lo[0, j], hi[0, j], int(true_grid[0, j]),
                     mean[1, j], lo[1, j], hi[1, j], int(true_grid[1, j])])
    result = {
        "grid": grid, "mean": mean, "lower": lo, "upper": hi, "truth": true_grid,
        "coverage": coverage, "seconds": elapsed, "sweeps": sweeps,
        "mean_grid_size": float(np.mean([i.grid_size for i in info])),
        "band_rows": band, "observations": obs,
    }
    if out_dir is not None:
        out = Path(out_dir)
        write_rows(out / "posterior_band.csv",
                   ["time", "prey_mean", "prey_q05", "prey_q95", "prey_true",
                    "predator_mean", "predator_q05", "predator_q95", "predator_true"], band)
        write_rows(out / "results.csv", ["metric", "value"],
                   [["coverage_observed_region", coverage], ["sweeps", sweeps],
                    ["burn_in", burn_in], ["seconds", elapsed],
                    ["mean_grid_size", result["mean_grid_size"]]])
        _write_json(out / "diagnostics.json", {
            "coverage_observed_region": coverage,
            "observed_region_end": last_obs,
            "band_level": 0.9,
        })
    return result


# -- chain CTBNs ------------------------------------------------------------------------


def build_chain_ctbn(m: int, n: int, seed: int = 0, *, low: float = 0.5,
                     high: float = 2.0) -> CtbnModel:
    """Chain ``X0 -> X1 -> ... -> X{m-1}`` with ``n`` states per node.

    Rates are drawn from ``numpy.random.default_rng(seed)``, node by node,
    configuration by configuration, each off-diagonal entry in row-major
    order, uniformly on ``[low, high]``.  Initial marginals are uniform.
    """
    if m < 1 or n < 2:
        raise ConfigError("need m >= 1 and n >= 2")
    rng = np.random.default_rng(seed)
    mask = ~np.eye(n, dtype=bool)
    gens = []
    for k in range(m):
        cfgs = 1 if k == 0 else n
        node = []
        for _ in range(cfgs):
            off = np.zeros((n, n))
            off[mask] = rng.uniform(low, high, size=n * (n - 1))
            node.append(Generator(off))
        gens.append(node)
    parents = [[]] + [[k - 1] for k in range(1, m)]
    return CtbnModel([n] * m, parents, gens, [InitialDistribution.uniform(n)] * m,
                     names=[f"X{k}" for k in range(m)])


def chain_endpoint_observations(model: CtbnModel, t_end: float, rng, t_start: float = 0.0):
    """Noiseless observations of every node at both endpoints of a prior draw."""
    truth = sample_ctbn_prior(model, (t_start, t_end), rng)
    point = PointMassLikelihood()
    return {k: ObservationSet([t_start, t_end], [p.initial_state, p.final_state], point,
                              model.n_states[k])
            for k, p in enumerate(truth)}


def exact_ctbn_stats(model: CtbnModel, observations, t_start, t_end, h=1e-3):
    """Posterior expected statistics per node through the flattened joint MJP."""
    G, pi = flatten_ctbn(model)
    problem = MjpProblem(G, pi, t_start, t_end, flatten_observations(model, observations))
    return amalgamate_stats(model, exact_sufficient_stats(problem, h))


def _chain_worker(args):
    model, obs, t_start, t_end, burn_in, total, seed, chain, multiplier = args
    rng = np.random.default_rng([seed, 0, chain])
    policy = UniformizationPolicy(multiplier)
    path = sample_ctbn_prior(model, (t_start, t_end), rng,
                             initial_states=[o.payloads[0] for o in
                                             (obs[k] for k in range(model.m))])
    vecs = np.empty((total, sum(n + n * (n - 1) for n in model.n_states)))
    for it in range(burn_in + total):
        path = ctbn_gibbs_sweep(model, path, obs, policy=policy, rng=rng)
        if it >= burn_in:
            vecs[it - burn_in] = np.concatenate([s.to_vector() for s in ctbn_stats(model, path)])
    return chain, vecs


def run_chain_experiment(settings: dict, out_dir=None) -> dict:
    """Median ARE over independent chains at increasing sample counts.

    Each chain's first ``c`` retained samples give its estimate at count
    ``c``; the truth comes from the flattened joint MJP.
    """
    m = int(settings.get("nodes", 3))
    n = int(settings.get("states", 3))
    seed = int(settings.get("seed", 0))
    t_end = float(settings.get("t_end", 20.0))
    counts = sorted(int(c) for c in settings.get("sample_counts", [100, 300, 1000, 3000]))
    chains = int(settings.get("chains", 50))
    burn_in = int(settings.get("burn_in", 200))
    multiplier = float(settings.get("omega_multiplier", 2.0))
    workers = int(settings.get("workers", 1))
    model = build_chain_ctbn(m, n, int(settings.get("model_seed", seed)))
    obs = chain_endpoint_observations(model, t_end, np.random.default_rng([seed, 0, 0]))
    truth = exact_ctbn_stats(model, obs, 0.0, t_end, float(settings.get("oracle_step", 1e-3)))
    truth_vec = np.concatenate([s.to_vector() for s in truth])
    jobs = [(model, obs, 0.0, t_end, burn_in, counts[-1], seed, c + 1, multiplier)
            for c in range(chains)]
    tic = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = dict(pool.map(_chain_worker, jobs))
    else:
        done = dict(map(_chain_worker, jobs))
    elapsed = time.perf_counter() - tic
    are = np.empty((chains, len(counts)))
    for c in range(chains):
        vecs = done[c + 1]
        for j, cnt in enumerate(counts):
            are[c, j] = average_relative_error(vecs[:cnt].mean(axis=0), truth_vec).value
    med = np.median(are, axis=0)
    rows = [[cnt, float(med[j]), float(np.quantile(are[:, j], 0.25)),
             float(np.quantile(are[:, j], 0.75))] for j, cnt in enumerate(counts)]
    result = {"counts": counts, "are": are, "median": med, "truth": truth,
              "seconds": elapsed, "model": model, "observations": obs}
    if out_dir is not None:
        out = Path(out_dir)
        write_rows(out / "results.csv", ["samples", "median_are", "are_q25", "are_q75"], rows)
        write_rows(out / "posterior_band.csv", ["samples", "are_q05", "median_are", "are_q95"],
                   [[cnt, float(np.quantile(are[:, j], 0.05)), float(med[j]),
                     float(np.quantile(are[:, j], 0.95))] for j, cnt in enumerate(counts)])
        write_rows(out / "per_chain_are.csv", ["chain"] + [f"n{c}" for c in counts],
                   [[c] + list(map(float, are[c])) for c in range(chains)])
        first = done[1]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantTraceWarning)
            ess = [effective_sample_size(first[:, j]) for j in range(first.shape[1])]
        _write_json(out / "diagnostics.json", {
            "truth": stats_to_json(truth),
            "chain0_ess": ess,
            "median_are": dict(zip(map(str, counts), map(float, med))),
            "monotone_decrease": bool(np.all(np.diff(med) < 0)),
        })
        save_ctbn_model(out / "model.json", model)
    return result


# -- scaling studies ----------------------------------------------------------------------

SCALING_AXES = ("states", "states-sparse", "chain-length", "interval")


def _scaled_dense(n, rng):
    # off-diagonal rates U[0.5, 2] / (n - 1): leave rates stay O(1) as n grows
    off = rng.uniform(0.5, 2.0, size=(n, n)) / (n - 1)
    np.fill_diagonal(off, 0.0)
    return Generator(off)


def _scaled_tridiagonal(n, rng):
    up = rng.uniform(0.5, 2.0, size=n)
    down = rng.uniform(0.5, 2.0, size=n)
    up[-1] = 0.0
    down[0] = 0.0
    return Generator.tridiagonal(up, down, sparse=True)


def _noisy_mjp_problem(A, t_end, n_obs, rng, policy):
    pi = InitialDistribution.uniform(A.n)
    truth = sample_prior_path(A, pi, (0.0, t_end), rng)
    n = A.n
    # observed state is correct with probability 1/2, otherwise uniform
    table = np.full((n, n), 0.5 / max(n - 1, 1))
    np.fill_diagonal(table, 0.5)
    times = np.linspace(0.0, t_end, n_obs + 2)[1:-1]
    payloads = []
    for s in truth.states_at(times):
        payloads.append(int(rng.choice(n, p=table[:, s])))
    obs = ObservationSet(times, payloads, TableLikelihood(table), n)
    return MjpProblem(A, pi, 0.0, t_end, obs, policy), truth


@dataclass
class ScalingRow:
    level: float
    iterations: int
    seconds: float
    seconds_per_iteration: float
    median_iteration_seconds: float
    mean_grid_size: float
    ess: float
    quantiles: tuple = field(default=(0.0, 0.0), repr=False)


class _LevelRun:
    """One study level: a sampler ``step`` returning the grid size and a scalar ``stat``."""

    def __init__(self, level, step, stat):
        self.level = float(level)
        self.step = step
        self.stat = stat
        self.trace, self.secs, self.sizes = [], [], []

    def advance(self, count):
        for _ in range(count):
            tic = time.perf_counter()
            size = self.step()
            self.secs.append(time.perf_counter() - tic)
            self.sizes.append(size)
            self.trace.append(self.stat())

    def ess(self) -> float:
        if len(self.trace) < 10:
            return float("nan")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantTraceWarning)
            return effective_sample_size(self.trace)

    def row(self) -> "ScalingRow":
        secs = np.array(self.secs)
        row = ScalingRow(self.level, len(self.trace), float(secs.sum()), float(secs.mean()),
                         float(np.median(secs)), float(np.mean(self.sizes)), self.ess())
        row.quantiles = (float(np.quantile(secs, 0.05)), float(np.quantile(secs, 0.95)))
        return row


def _level_run(axis, level, li, settings) -> _LevelRun:
    seed = int(settings.get("seed", 0))
    rng = np.random.default_rng([seed, li, 0])
    policy = UniformizationPolicy(float(settings.get("omega_multiplier", 2.0)))
    if axis == "chain-length":
        n = int(settings.get("states", 3))
        t_end = float(settings.get("t_end", 20.0))
        model = build_chain_ctbn(int(level), n, seed)
        obs = chain_endpoint_observations(model, t_end, rng)
        state = {"path": sample_ctbn_prior(model, (0.0, t_end), rng)}
        node = int(level) // 2

        def step():
            info = []
            state["path"] = ctbn_gibbs_sweep(model, state["path"], obs, policy=policy,
                                             rng=rng, info=info)
            return sum(i.grid_size for i in info)

        def stat():
            return sufficient_stats(state["path"][node], n).dwell[0]
        return _LevelRun(level, step, stat)

    if axis == "states":
        A = _scaled_dense(int(level), rng)
        t_end = float(settings.get("t_end", 250.0))
    elif axis == "states-sparse":
        A = _scaled_tridiagonal(int(level), rng)
        t_end = float(settings.get("t_end", 250.0))
    else:
        A = _scaled_dense(int(settings.get("states", 128)), rng)
        t_end = float(level)
    problem, _ = _noisy_mjp_problem(A, t_end, int(settings.get("observations", 10)), rng, policy)
    chain = iter_chain(problem, 1 << 62, 0, rng)
    state = {}

    def step():
        s = next(chain)
        state["path"] = s.path
        return s.grid_size

    def stat():
        return sufficient_stats(state["path"], problem.n).dwell[0]
    return _LevelRun(level, step, stat)


def fit_loglog_slope(x, y) -> float:
    if np.unique(np.asarray(x, float)).size < 2:
        return float("nan")
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def run_scaling_study(axis: str, levels, settings: dict, out_dir=None) -> dict:
    """Per-level wall-clock, iterations, mean grid size and ESS, plus the log-log slope.

    Axes: ``states`` (single dense MJP, rates scaled so leave rates stay
    bounded), ``states-sparse`` (tridiagonal birth-death MJP), ``chain-length``
    (chain CTBN, per sweep) and ``interval`` (dense MJP, interval length).
    The slope is fitted to the median per-iteration time.  With
    ``settings["iterations"]`` set, every level runs that many iterations,
    interleaved across levels in ``rounds`` chunks; otherwise each level runs
    in batches until the ESS of its designated dwell statistic reaches
    ``target_ess``.
    """
    if axis not in SCALING_AXES:
        raise ConfigError(f"unknown scaling axis {axis!r}")
    levels = list(levels)
    if not levels:
        raise ConfigError("levels must be nonempty")
    runs = [_level_run(axis, lv, i, settings) for i, lv in enumerate(levels)]
    burn_in = int(settings.get("burn_in", 0))
    budget = settings.get("budget_seconds")
    start = time.perf_counter()

    def check_budget():
        if budget is not None and time.perf_counter() - start > float(budget):
            raise BudgetExceededError(f"scaling study exceeded {budget} s")

    for r in runs:
        for _ in range(burn_in):
            r.step()
    fixed = settings.get("iterations")
    if fixed is not None:
        # round-robin over levels so background load is shared evenly
        rounds = int(settings.get("rounds", 5))
        total = int(fixed)
        for j in range(rounds):
            chunk = total * (j + 1) // rounds - total * j // rounds
            for r in runs:
                r.advance(chunk)
                check_budget()
    else:
        target = float(settings.get("target_ess", 100))
        batch = int(settings.get("batch", 100))
        max_it = int(settings.get("max_iterations", 20000))
        for r in runs:
            while True:
                r.advance(batch)
                check_budget()
                if r.ess() >= target or len(r.trace) >= max_it:
                    break
    rows = [r.row() for r in runs]
    slope = fit_loglog_slope([r.level for r in rows], [r.median_iteration_seconds for r in rows])
    if out_dir is not None:
        out = Path(out_dir)
        header = [k for k in asdict(rows[0]) if k != "quantiles"]
        write_rows(out / "results.csv", ["axis"] + header,
                   [[axis] + [getattr(r, k) for k in header] for r in rows])
        write_rows(out / "posterior_band.csv",
                   ["level", "iteration_seconds_q05", "median_iteration_seconds",
                    "iteration_seconds_q95"],
                   [[r.level, r.quantiles[0], r.median_iteration_seconds, r.quantiles[1]]
                    for r in rows])
        _write_json(out / "diagnostics.json", {"axis": axis, "loglog_slope": slope,
                                               "ess": [r.ess for r in rows]})
    return {"axis": axis, "rows": rows, "slope": slope}


# -- configs and entry point ---------------------------------------------------------------

_SAMPLER = {
    "type": "object",
    "properties": {
        "iterations": {"type": "integer", "minimum": 1},
        "burn_in": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "omega_multiplier": {"type": "number", "exclusiveMinimum": 1},
        "budget_seconds": {"type": "number", "exclusiveMinimum": 0},
        "target_ess": {"type": "number", "exclusiveMinimum": 0},
        "max_iterations": {"type": "integer", "minimum": 1},
        "batch": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "grid_points": {"type": "integer", "minimum": 2},
        "rounds": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": ["lv", "chain", "scaling"]},
        "model": {"type": "object"},
        "sampler": _SAMPLER,
    },
    "allOf": [
        {"if": {"properties": {"experiment": {"const": "lv"}}},
         "then": {"properties": {"model": {
             "type": "object",
             "properties": {
                 "preset": {"enum": ["desk", "full"]},
                 "cap": {"type": "integer", "minimum": 1},
                 "alpha": {"type": "number", "minimum": 0},
                 "beta": {"type": "number", "minimum": 0},
                 "gamma": {"type": "number", "minimum": 0},
                 "delta": {"type": "number", "minimum": 0},
                 "t_start": {"type": "number"},
                 "t_end": {"type": "number"},
                 "obs_times": {"type": "array", "items": {"type": "number"}},
                 "initial": {"type": "array", "items": {"type": "integer", "minimum": 0},
                             "minItems": 2, "maxItems": 2},
                 "observations": {"type": "boolean"},
                 "sparse": {"type": "boolean"},
             },
             "additionalProperties": False}}}},
        {"if": {"properties": {"experiment": {"const": "chain"}}},
         "then": {"properties": {"model": {
             "type": "object",
             "properties": {
                 "nodes": {"type": "integer", "minimum": 1},
                 "states": {"type": "integer", "minimum": 2},
                 "model_seed": {"type": "integer", "minimum": 0},
                 "t_end": {"type": "number", "exclusiveMinimum": 0},
                 "chains": {"type": "integer", "minimum": 1},
                 "sample_counts": {"type": "array", "minItems": 1,
                                   "items": {"type": "integer", "minimum": 1}},
                 "oracle_step": {"type": "number", "exclusiveMinimum": 0},
             },
             "additionalProperties": False}}}},
        {"if": {"properties": {"experiment": {"const": "scaling"}}},
         "then": {"properties": {"model": {
             "type": "object",
             "required": ["axis", "levels"],
             "properties": {
                 "axis": {"enum": list(SCALING_AXES)},
                 "levels": {"type": "array", "minItems": 1,
                            "items": {"type": "number", "exclusiveMinimum": 0}},
                 "states": {"type": "integer", "minimum": 2},
                 "t_end": {"type": "number", "exclusiveMinimum": 0},
                 "observations": {"type": "integer", "minimum": 0},
             },
             "additionalProperties": False}},
             "required": ["model"]}},
    ],
    "additionalProperties": False,
}


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"invalid experiment config: {err.message}") from err
    return config


def load_config(path) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"{path}: {err}") from err
    return validate_config(config)


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def lv_spec_from_config(model: dict) -> LotkaVolterraSpec:
    kw = {k: v for k, v in model.items() if k not in ("preset", "observations", "sparse")}
    if "obs_times" in kw:
        kw["obs_times"] = tuple(kw["obs_times"])
    if "initial" in kw:
        kw["initial"] = tuple(kw["initial"])
    if model.get("preset") == "full":
        return LotkaVolterraSpec.full_scale(**kw)
    return LotkaVolterraSpec.desk(**kw)


def run_experiment(config: dict, out_dir, seed: int | None = None) -> dict:
    """Validate ``config``, run the experiment and write all outputs to ``out_dir``."""
    config = validate_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sampler = dict(config.get("sampler", {}))
    if seed is not None:
        sampler["seed"] = int(seed)
    sampler.setdefault("seed", 0)
    model = dict(config.get("model", {}))
    kind = config["experiment"]
    tic = time.perf_counter()
    if kind == "lv":
        spec = lv_spec_from_config(model)
        settings = dict(sampler, observations=model.get("observations", True),
                        sparse=model.get("sparse", True))
        res = run_lv_experiment(spec, settings, out)
        summary = {"coverage_observed_region": res["coverage"]}
    elif kind == "chain":
        res = run_chain_experiment({**model, **sampler}, out)
        summary = {"median_are": list(map(float, res["median"]))}
    else:
        axis = model["axis"]
        settings = {**{k: v for k, v in model.items() if k not in ("axis", "levels")}, **sampler}
        res = run_scaling_study(axis, model["levels"], settings, out)
        summary = {"loglog_slope": res["slope"]}
    _write_json(out / "manifest.json", {
        "config": config,
        "seed": sampler["seed"],
        "code_version": __version__,
        "seconds": time.perf_counter() - tic,
        "summary": summary,
        "outputs": sorted(p.name for p in out.iterdir()),
    })
    return res
