"""Prior simulation and the uniformization Gibbs sampler for a single MJP."""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numba
import numpy as np

from . import ffbs
from .core import (
    LOG_ZERO,
    Generator,
    InitialDistribution,
    MjpPath,
    ObservationSet,
    UniformizationPolicy,
    UniformizedPath,
    build_kernel,
    sufficient_stats,
)
from .errors import DomainError, GridCollisionError, InconsistentEvidenceError, InvalidPolicyError


def _interval(interval):
    t0, t1 = (float(x) for x in interval)
    if not t0 <= t1:
        raise DomainError(f"bad interval [{t0}, {t1}]")
    return t0, t1


def _draw_cdf(cdf, u):
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, cdf.size - 1)


def sample_prior_path(A: Generator, pi: InitialDistribution, interval, rng) -> MjpPath:
    """Simulate a path by exponential holding times and embedded jumps."""
    t0, t1 = _interval(interval)
    leave = A.leave_rates.tolist()
    cdf = A.jump_cdf
    s = _draw_cdf(pi.cdf, rng.random())
    times, states = [], [s]
    t = t0
    while leave[s] > 0.0:
        t += rng.exponential(1.0 / leave[s])
        if t >= t1:
            break
        row = cdf[s]
        s = int(np.searchsorted(row, rng.random() * row[-1], side="right"))
        times.append(t)
        states.append(s)
    return MjpPath(t0, t1, np.array(times), np.array(states))


@numba.njit(cache=True)
def _chain_dense(B, s0, u):
    n = B.shape[0]
    out = np.empty(u.shape[0] + 1, dtype=np.int64)
    out[0] = s0
    s = s0
    for i in range(u.shape[0]):
        cum = 0.0
        nxt = s
        for j in range(n):
            cum += B[s, j]
            if cum > u[i]:
                nxt = j
                break
        s = nxt
        out[i + 1] = s
    return out


@numba.njit(cache=True)
def _chain_sparse(cols, vals, s0, u):
    width = cols.shape[1]
    out = np.empty(u.shape[0] + 1, dtype=np.int64)
    out[0] = s0
    s = s0
    for i in range(u.shape[0]):
        cum = 0.0
        nxt = s
        for e in range(width):
            cum += vals[s, e]
            if cum > u[i]:
                nxt = cols[s, e]
                break
        s = nxt
        out[i + 1] = s
    return out


def _check_omega(A: Generator, omega: float):
    if omega < A.max_leave_rate:
        raise InvalidPolicyError(f"omega={omega} below max leave rate {A.max_leave_rate}")


def sample_uniformized_prior(A: Generator, pi: InitialDistribution, interval, omega: float,
                             rng) -> UniformizedPath:
    """Poisson(omega) grid with states from the subordinated chain ``I + A/omega``."""
    t0, t1 = _interval(interval)
    _check_omega(A, omega)
    B = build_kernel(A, omega)
    count = rng.poisson(omega * (t1 - t0))
    W = np.sort(t0 + rng.random(count) * (t1 - t0))
    s0 = _draw_cdf(pi.cdf, rng.random())
    u = rng.random(count)
    if B.is_sparse:
        V = _chain_sparse(B.cols, B.vals, s0, u)
    else:
        V = _chain_dense(B.matrix, s0, u)
    return UniformizedPath(t0, t1, W, V, omega=float(omega))


def _drop(t0, t1, W, V) -> MjpPath:
    moved = V[1:] != V[:-1]
    return MjpPath._trusted(t0, t1, W[moved], np.concatenate((V[:1], V[1:][moved])))


def drop_virtual(u: UniformizedPath) -> MjpPath:
    """Discard grid times at which the state repeats."""
    return _drop(u.t_start, u.t_end, u.times, u.states)


def sample_virtual_jumps(A: Generator, path: MjpPath, omega: float, rng) -> np.ndarray:
    """Ordered virtual jump times given the current path.

    On each constant piece the times follow a Poisson process of rate
    ``omega - leave_rate(state)``: a Poisson count, then sorted uniforms.
    """
    _check_omega(A, omega)
    starts, ends, states = path.segments()
    dur = ends - starts
    rates = np.maximum(omega - A.leave_rates[states], 0.0)
    counts = rng.poisson(rates * dur)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    U = np.repeat(starts, counts) + rng.random(total) * np.repeat(dur, counts)
    U.sort()
    return U


def merge_times(T, U) -> np.ndarray:
    """Sorted union of two time sets; exact coincidences are rejected."""
    W = np.concatenate((T, U))
    W.sort()
    if W.size > 1 and np.any(W[1:] == W[:-1]):
        raise GridCollisionError("auxiliary grid contains duplicate times")
    return W


def virtual_jump_log_density(A: Generator, path: MjpPath, U, omega: float) -> float:
    """Log density of an ordered virtual-jump set given the path."""
    starts, ends, states = path.segments()
    rates = omega - A.leave_rates[states]
    idx = np.searchsorted(path.times, np.asarray(U), side="right")
    counts = np.bincount(idx, minlength=states.size)
    total = 0.0
    for r, c in zip(rates, counts):
        if c:
            if r <= 0:
                return LOG_ZERO
            total += c * math.log(r)
    return total - float(np.dot(rates, ends - starts))


def uniformized_log_density(A: Generator, pi: InitialDistribution, u: UniformizedPath) -> float:
    """Log density of ``(V, W)``: Poisson(omega) ordered grid times subordinated chain."""
    omega = u.omega
    p0 = pi.weights[u.states[0]]
    if p0 <= 0:
        return LOG_ZERO
    length = u.t_end - u.t_start
    out = u.times.size * math.log(omega) - omega * length + math.log(p0)
    B = build_kernel(A, omega).to_dense()
    b = B[u.states[:-1], u.states[1:]]
    if np.any(b <= 0):
        return LOG_ZERO
    return out + float(np.log(b).sum())


def slot_likelihoods(observations: ObservationSet, grid, n: int) -> np.ndarray:
    """Product of observation likelihoods falling in each slot ``[w_i, w_{i+1})``.

    ``grid`` excludes ``t_start``; slot 0 starts at ``t_start`` and the last
    slot is closed at ``t_end``.
    """
    lik = np.ones((grid.size + 1, n))
    if observations is not None and len(observations):
        slot = np.searchsorted(grid, observations.times, side="right")
        np.multiply.at(lik, slot, observations.likelihoods)
    return lik


@dataclass(frozen=True)
class MjpProblem:
    generator: Generator
    initial: InitialDistribution
    t_start: float
    t_end: float
    observations: ObservationSet | None = None
    policy: UniformizationPolicy = field(default_factory=UniformizationPolicy)

    def __post_init__(self):
        if not float(self.t_start) < float(self.t_end):
            raise DomainError("t_start must be < t_end")
        n = self.generator.n
        if self.initial.n != n:
            raise DomainError("initial distribution dimension differs from the generator")
        obs = self.observations
        if obs is None:
            obs = ObservationSet.empty(n)
            object.__setattr__(self, "observations", obs)
        if obs.n_states != n:
            raise DomainError("observation likelihoods have the wrong state count")
        obs.check_interval(self.t_start, self.t_end)

    @property
    def interval(self):
        return (self.t_start, self.t_end)

    @property
    def n(self) -> int:
        return self.generator.n

    @cached_property
    def omega(self) -> float:
        return self.policy.omega(self.generator)

    @cached_property
    def kernel(self):
        return build_kernel(self.generator, self.omega)

    @cached_property
    def kernel_stack(self):
        return ffbs.stack_kernels((self.kernel,), self.n)


def _gibbs_step(problem: MjpProblem, current: MjpPath, rng):
    A = problem.generator
    U = sample_virtual_jumps(A, current, problem.omega, rng)
    W = merge_times(current.times, U)
    lik = slot_likelihoods(problem.observations, W, A.n)
    V, log_ev = ffbs.sample_stacked(problem.initial.weights, problem.kernel_stack,
                                    np.zeros(W.size, dtype=np.int64), lik, rng)
    return _drop(problem.t_start, problem.t_end, W, V), W.size, log_ev


def gibbs_step(problem: MjpProblem, current: MjpPath, rng) -> MjpPath:
    """One auxiliary-variable Gibbs update of the whole path.

    Virtual jumps are added to the current path, the states on the merged
    grid are redrawn by FFBS under ``I + A/omega`` with the observation
    likelihoods of each grid interval, and the self-transitions are dropped.
    The old states only matter through the grid.
    """
    return _gibbs_step(problem, current, rng)[0]


# -- initialization -------------------------------------------------------------


def _shortest_route(A: Generator, a: int, b: int):
    if a == b:
        return [a]
    adj = A.off_diagonal > 0
    prev = {a: None}
    queue = deque([a])
    while queue:
        s = queue.popleft()
        for j in np.flatnonzero(adj[s]):
            j = int(j)
            if j not in prev:
                prev[j] = s
                if j == b:
                    route = [b]
                    while prev[route[-1]] is not None:
                        route.append(prev[route[-1]])
                    return route[::-1]
                queue.append(j)
    return None


def forced_initial_path(problem: MjpProblem, rng) -> MjpPath | None:
    """A path passing through observation-consistent states at the observation times.

    States at observation times are drawn proportionally to the combined
    likelihood; consecutive anchors are joined by a shortest route in the
    rate graph with evenly spaced jumps.  Returns None when no route exists.
    """
    obs = problem.observations
    t0, t1 = problem.interval
    anchors_t, anchors_l = [], []
    for t, row in zip(obs.times, obs.likelihoods):
        if anchors_t and anchors_t[-1] == t:
            anchors_l[-1] = anchors_l[-1] * row
        else:
            anchors_t.append(float(t))
            anchors_l.append(row.copy())
    w0 = problem.initial.weights.copy()
    if anchors_t and anchors_t[0] == t0:
        w0 = w0 * anchors_l.pop(0)
        anchors_t.pop(0)
    if not w0.sum() > 0:
        return None
    s = int(rng.choice(problem.n, p=w0 / w0.sum()))
    times, states = [], [s]
    prev_t = t0
    for t, lik in zip(anchors_t, anchors_l):
        if not lik.sum() > 0:
            return None
        target = int(rng.choice(problem.n, p=lik / lik.sum()))
        route = _shortest_route(problem.generator, s, target)
        if route is None:
            return None
        hops = len(route) - 1
        for h in range(1, hops + 1):
            times.append(prev_t + (t - prev_t) * h / (hops + 1))
            states.append(route[h])
        s = target
        prev_t = t
    return MjpPath(t0, t1, np.array(times), np.array(states))


# -- chains -----------------------------------------------------------------------


@dataclass
class ChainStep:
    index: int
    path: MjpPath
    grid_size: int
    log_evidence: float
    seconds: float
    retained: bool


def iter_chain(problem: MjpProblem, iterations: int, burn_in: int, rng,
               init_attempts: int = 10, initial_path: MjpPath | None = None
               ) -> Iterator[ChainStep]:
    """Yield every Gibbs iteration, flagging those past the burn-in.

    The chain starts from a prior draw that ignores the observations.  If the
    first update finds the evidence inconsistent with that start, up to
    ``init_attempts`` observation-forced starts are tried before giving up.
    """
    if not iterations > burn_in >= 0:
        raise DomainError("need iterations > burn_in >= 0")
    current = initial_path
    if current is None:
        current = sample_prior_path(problem.generator, problem.initial, problem.interval, rng)
    for attempt in range(init_attempts + 1):
        tic = time.perf_counter()
        try:
            current, size, log_ev = _gibbs_step(problem, current, rng)
            break
        except InconsistentEvidenceError:
            if attempt == init_attempts:
                raise
            forced = forced_initial_path(problem, rng)
            if forced is not None:
                current = forced
    yield ChainStep(0, current, size, log_ev, time.perf_counter() - tic, burn_in == 0)
    for it in range(1, iterations):
        tic = time.perf_counter()
        current, size, log_ev = _gibbs_step(problem, current, rng)
        yield ChainStep(it, current, size, log_ev, time.perf_counter() - tic, it >= burn_in)


@dataclass
class ChainResult:
    samples: list
    grid_sizes: np.ndarray
    log_evidence: np.ndarray
    wall_times: np.ndarray

    def stats(self, n: int):
        return [s if not isinstance(s, MjpPath) else sufficient_stats(s, n) for s in self.samples]


def run_chain(problem: MjpProblem, iterations: int, burn_in: int, rng,
              keep_paths: bool = True, **kwargs) -> ChainResult:
    """Run ``iterations`` Gibbs steps and keep the ones after ``burn_in``.

    With ``keep_paths=False`` only the sufficient statistics of retained
    samples are stored.
    """
    samples, sizes, evs, secs = [], [], [], []
    for step in iter_chain(problem, iterations, burn_in, rng, **kwargs):
        sizes.append(step.grid_size)
        evs.append(step.log_evidence)
        secs.append(step.seconds)
        if step.retained:
            samples.append(step.path if keep_paths else sufficient_stats(step.path, problem.n))
    return ChainResult(samples, np.array(sizes), np.array(evs), np.array(secs))
