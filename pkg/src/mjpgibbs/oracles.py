"""Exact and brute-force references used to validate the samplers.

Nothing here touches the uniformization machinery: transition
probabilities come from an in-house matrix exponential, posteriors from
forward-backward over observation times.  These routines aim at validation
accuracy, not speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Generator, InitialDistribution, SufficientStats
from .errors import DomainError, InconsistentEvidenceError, RejectionBudgetError
from .mjp import MjpProblem, sample_prior_path


def transition_matrix(A: Generator, t: float) -> np.ndarray:
    """``exp(A t)`` by scaling and squaring of a truncated Taylor series.

    Rows index the source state, so row ``i`` is the distribution at time
    ``t`` given state ``i`` at time 0.
    """
    if t < 0:
        raise DomainError(f"negative duration {t}")
    M = A.matrix * float(t)
    n = M.shape[0]
    norm = np.abs(M).sum(axis=1).max()
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    M = M / (2.0 ** squarings)
    out = np.eye(n)
    term = np.eye(n)
    for k in range(1, 40):
        term = term @ M / k
        out = out + term
        if np.abs(term).max() < 1e-18:
            break
    for _ in range(squarings):
        out = out @ out
    # roundoff can leave tiny negative entries
    np.maximum(out, 0.0, out=out)
    return out


class _Propagator:
    """Caches ``exp(A d)`` per distinct duration ``d``."""

    def __init__(self, A):
        self.A = A
        self.cache = {}

    def __call__(self, d):
        P = self.cache.get(d)
        if P is None:
            P = self.cache[d] = transition_matrix(self.A, d)
        return P


@dataclass(frozen=True)
class GridPosterior:
    times: np.ndarray
    probs: np.ndarray

    def at(self, t) -> np.ndarray:
        i = int(np.flatnonzero(self.times == t)[0])
        return self.probs[i]


def _observation_table(problem: MjpProblem, times):
    """Likelihood product per time of ``times`` (ones where nothing is observed)."""
    lik = np.ones((times.size, problem.n))
    obs = problem.observations
    if len(obs):
        idx = np.searchsorted(times, obs.times)
        np.multiply.at(lik, idx, obs.likelihoods)
    return lik


def _forward_backward(problem: MjpProblem, times, prop, dts=None):
    """Messages at ``times`` (sorted, starting at t_start).

    ``fwd[i]`` includes the observations at ``times[i]``; ``bwd[i]`` only
    those strictly later.  Both are normalized; the log evidence is returned.
    """
    if dts is None:
        dts = np.diff(times)
    lik = _observation_table(problem, times)
    K = times.size
    fwd = np.empty((K, problem.n))
    bwd = np.empty((K, problem.n))
    log_ev = 0.0
    f = problem.initial.weights * lik[0]
    for i in range(K):
        if i:
            f = (fwd[i - 1] @ prop(dts[i - 1])) * lik[i]
        z = f.sum()
        if not z > 0:
            raise InconsistentEvidenceError(i)
        log_ev += math.log(z)
        fwd[i] = f / z
    b = np.ones(problem.n)
    bwd[K - 1] = b
    for i in range(K - 2, -1, -1):
        b = prop(dts[i]) @ (lik[i + 1] * bwd[i + 1])
        bwd[i] = b / b.sum()
    return fwd, bwd, lik, log_ev


def exact_posterior_marginals(problem: MjpProblem, query) -> GridPosterior:
    """Smoothed state marginals at the query times via matrix exponentials."""
    query = np.asarray(query, dtype=float)
    if np.any(query < problem.t_start) or np.any(query > problem.t_end):
        raise DomainError("query time outside the interval")
    times = np.unique(np.concatenate(([problem.t_start], problem.observations.times, query)))
    fwd, bwd, _, _ = _forward_backward(problem, times, _Propagator(problem.generator))
    post = fwd * bwd
    post /= post.sum(axis=1, keepdims=True)
    idx = np.searchsorted(times, query)
    return GridPosterior(query, post[idx])


def log_evidence(problem: MjpProblem) -> float:
    times = np.unique(np.concatenate(([problem.t_start], problem.observations.times)))
    return _forward_backward(problem, times, _Propagator(problem.generator))[3]


def rejection_sample_endpoint(A: Generator, s_start: int, s_end: int, interval, rng,
                              max_attempts: int = 1_000_000):
    """Prior paths from ``s_start`` until one ends in ``s_end``.

    Returns ``(path, rejections)``.
    """
    pi = InitialDistribution.point_mass(A.n, s_start)
    for attempt in range(max_attempts):
        path = sample_prior_path(A, pi, interval, rng)
        if path.final_state == s_end:
            return path, attempt
    raise RejectionBudgetError(
        f"no path from {s_start} ended in {s_end} within {max_attempts} attempts")


def _block_grid(problem: MjpProblem, h: float):
    # equal steps between consecutive breakpoints (start, observations, end)
    knots = np.unique(np.concatenate(([problem.t_start], problem.observations.times,
                                      [problem.t_end])))
    pieces, steps = [knots[:1]], []
    for a, b in zip(knots[:-1], knots[1:]):
        m = max(1, int(math.ceil((b - a) / h - 1e-9)))
        pieces.append(np.linspace(a, b, m + 1)[1:])
        steps.append(np.full(m, (b - a) / m))
    return np.concatenate(pieces), np.concatenate(steps)


def exact_sufficient_stats(problem: MjpProblem, h: float = 1e-3) -> SufficientStats:
    """Posterior expected dwell times and transition counts on a grid of step <= h.

    Dwell times integrate the smoothed marginals with the trapezoid rule
    (error O(h^2)).  Transition counts integrate
    ``fwd_i(t) q(i->j) bwd_j(t)`` with the midpoint rule on every grid cell,
    the messages at the midpoint being propagated exactly; the error is
    O(h^2) for smooth integrands and at worst O(h).
    """
    if not h > 0:
        raise DomainError("grid resolution must be positive")
    A = problem.generator
    prop = _Propagator(A)
    times, dt = _block_grid(problem, h)
    fwd, bwd, lik, _ = _forward_backward(problem, times, prop, dt)
    post = fwd * bwd
    post /= post.sum(axis=1, keepdims=True)
    dwell = (0.5 * (post[:-1] + post[1:]) * dt[:, None]).sum(axis=0)

    Q = A.off_diagonal
    counts = np.zeros((A.n, A.n))
    for i, d in enumerate(dt):
        half = prop(d / 2)
        f = fwd[i] @ half
        b = half @ (lik[i + 1] * bwd[i + 1])
        z = f @ b
        counts += d * (f[:, None] * Q * b[None, :]) / z
    return SufficientStats(dwell, counts)


def prior_path_marginals(A: Generator, pi, query) -> np.ndarray:
    """``pi exp(A t)`` for each query time measured from 0."""
    return np.array([pi.weights @ transition_matrix(A, t) for t in query])
