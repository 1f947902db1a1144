"""Forward filtering / backward sampling for finite-horizon discrete HMMs.

A problem has ``L`` slots.  Step ``i`` (``0 <= i < L-1``) moves the chain
from slot ``i`` to slot ``i+1`` with kernel ``kernels[steps[i]]``; a step
index of ``-1`` means the identity kernel.  Forward messages are normalized
at every slot and the log normalizers are accumulated separately, so long
horizons do not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numba
import numpy as np

from .core import TransitionKernel
from .errors import DomainError, InconsistentEvidenceError

IDENTITY = -1


@dataclass(frozen=True)
class HmmProblem:
    initial: np.ndarray
    kernels: tuple
    steps: np.ndarray
    likelihoods: np.ndarray

    def __post_init__(self):
        init = np.ascontiguousarray(self.initial, dtype=float)
        lik = np.ascontiguousarray(self.likelihoods, dtype=float)
        steps = np.ascontiguousarray(self.steps, dtype=np.int64).reshape(-1)
        kernels = tuple(self.kernels)
        if lik.ndim != 2 or lik.shape[0] < 1:
            raise DomainError("likelihoods must be an (L, n) array with L >= 1")
        L, n = lik.shape
        if init.shape != (n,):
            raise DomainError("initial distribution and likelihoods disagree on n")
        if steps.size != L - 1:
            raise DomainError(f"need {L - 1} step indices, got {steps.size}")
        if steps.size and (steps.min() < IDENTITY or steps.max() >= len(kernels)):
            raise DomainError("step index refers to a missing kernel")
        for k in kernels:
            if not isinstance(k, TransitionKernel) or k.n != n:
                raise DomainError("every kernel must be an n x n TransitionKernel")
        if np.any(lik < 0):
            raise DomainError("likelihoods must be non-negative")
        dead = np.flatnonzero(lik.max(axis=1) <= 0)
        if dead.size:
            raise InconsistentEvidenceError(int(dead[0]))
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "likelihoods", lik)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "kernels", kernels)

    @classmethod
    def from_kernels(cls, initial, kernels: Sequence[TransitionKernel], likelihoods):
        """One kernel per step, in order."""
        return cls(initial, tuple(kernels), np.arange(len(kernels)), likelihoods)

    @property
    def horizon(self) -> int:
        return self.likelihoods.shape[0]

    @property
    def n(self) -> int:
        return self.likelihoods.shape[1]

    @cached_property
    def _stack(self):
        n = self.n
        ks = self.kernels
        if ks and all(k.is_sparse for k in ks):
            width = max(k.cols.shape[1] for k in ks)
            cols = np.zeros((len(ks), n, width), dtype=np.int64)
            vals = np.zeros((len(ks), n, width))
            for r, k in enumerate(ks):
                w = k.cols.shape[1]
                cols[r, :, :w] = k.cols
                vals[r, :, :w] = k.vals
            return True, cols, vals
        dense = np.zeros((max(len(ks), 1), n, n))
        for r, k in enumerate(ks):
            dense[r] = k.to_dense()
        return False, dense, None


@numba.njit(cache=True)
def _normalize_row(msgs, i):
    n = msgs.shape[1]
    tot = 0.0
    for s in range(n):
        tot += msgs[i, s]
    if not tot > 0.0:
        return 0.0
    inv = 1.0 / tot
    for s in range(n):
        msgs[i, s] *= inv
    return tot


@numba.njit(cache=True)
def _forward_dense(initial, kernels, steps, lik):
    L, n = lik.shape
    msgs = np.empty((L, n))
    lognorm = np.zeros(L)
    acc = np.empty(n)
    for s in range(n):
        msgs[0, s] = initial[s] * lik[0, s]
    tot = _normalize_row(msgs, 0)
    if tot == 0.0:
        return msgs, lognorm, 0
    lognorm[0] = np.log(tot)
    for i in range(1, L):
        k = steps[i - 1]
        if k < 0:
            for s in range(n):
                msgs[i, s] = msgs[i - 1, s] * lik[i, s]
        else:
            B = kernels[k]
            for j in range(n):
                acc[j] = 0.0
            for s in range(n):
                a = msgs[i - 1, s]
                if a != 0.0:
                    for j in range(n):
                        acc[j] += a * B[s, j]
            for j in range(n):
                msgs[i, j] = acc[j] * lik[i, j]
        tot = _normalize_row(msgs, i)
        if tot == 0.0:
            return msgs, lognorm, i
        lognorm[i] = np.log(tot)
    return msgs, lognorm, -1


@numba.njit(cache=True)
def _forward_sparse(initial, cols, vals, steps, lik):
    L, n = lik.shape
    width = cols.shape[2]
    msgs = np.empty((L, n))
    lognorm = np.zeros(L)
    acc = np.empty(n)
    for s in range(n):
        msgs[0, s] = initial[s] * lik[0, s]
    tot = _normalize_row(msgs, 0)
    if tot == 0.0:
        return msgs, lognorm, 0
    lognorm[0] = np.log(tot)
    for i in range(1, L):
        k = steps[i - 1]
        if k < 0:
            for s in range(n):
                msgs[i, s] = msgs[i - 1, s] * lik[i, s]
        else:
            for j in range(n):
                acc[j] = 0.0
            for s in range(n):
                a = msgs[i - 1, s]
                if a != 0.0:
                    for e in range(width):
                        acc[cols[k, s, e]] += a * vals[k, s, e]
            for j in range(n):
                msgs[i, j] = acc[j] * lik[i, j]
        tot = _normalize_row(msgs, i)
        if tot == 0.0:
            return msgs, lognorm, i
        lognorm[i] = np.log(tot)
    return msgs, lognorm, -1


@numba.njit(cache=True)
def _draw(w, u):
    # inverse-CDF draw from unnormalized masses; -1 if all masses vanish
    n = w.shape[0]
    tot = 0.0
    for s in range(n):
        if w[s] < 0.0:
            w[s] = 0.0
        tot += w[s]
    if not tot > 0.0:
        return -1
    target = u * tot
    cum = 0.0
    last = -1
    for s in range(n):
        if w[s] > 0.0:
            last = s
            cum += w[s]
            if cum > target:
                return s
    return last


@numba.njit(cache=True)
def _backward_dense(msgs, kernels, steps, u):
    L, n = msgs.shape
    states = np.empty(L, dtype=np.int64)
    w = np.empty(n)
    for s in range(n):
        w[s] = msgs[L - 1, s]
    states[L - 1] = _draw(w, u[L - 1])
    if states[L - 1] < 0:
        return states, L - 1
    for i in range(L - 2, -1, -1):
        v = states[i + 1]
        k = steps[i]
        if k < 0:
            if not msgs[i, v] > 0.0:
                return states, i
            states[i] = v
            continue
        B = kernels[k]
        for s in range(n):
            w[s] = msgs[i, s] * B[s, v]
        states[i] = _draw(w, u[i])
        if states[i] < 0:
            return states, i
    return states, -1


@numba.njit(cache=True)
def _backward_sparse(msgs, cols, vals, steps, u):
    L, n = msgs.shape
    width = cols.shape[2]
    states = np.empty(L, dtype=np.int64)
    w = np.empty(n)
    for s in range(n):
        w[s] = msgs[L - 1, s]
    states[L - 1] = _draw(w, u[L - 1])
    if states[L - 1] < 0:
        return states, L - 1
    for i in range(L - 2, -1, -1):
        v = states[i + 1]
        k = steps[i]
        if k < 0:
            if not msgs[i, v] > 0.0:
                return states, i
            states[i] = v
            continue
        for s in range(n):
            b = 0.0
            for e in range(width):
                if cols[k, s, e] == v:
                    b += vals[k, s, e]
            w[s] = msgs[i, s] * b
        states[i] = _draw(w, u[i])
        if states[i] < 0:
            return states, i
    return states, -1


def forward_filter(p: HmmProblem):
    """Normalized forward messages and the log evidence.

    ``messages[i]`` is the filtered distribution of slot ``i`` given the
    likelihood terms of slots ``0..i``.  Raises
    :class:`InconsistentEvidenceError` naming the first slot at which the
    unnormalized message is identically zero.
    """
    sparse, a, b = p._stack
    if sparse:
        msgs, lognorm, fail = _forward_sparse(p.initial, a, b, p.steps, p.likelihoods)
    else:
        msgs, lognorm, fail = _forward_dense(p.initial, a, p.steps, p.likelihoods)
    if fail >= 0:
        raise InconsistentEvidenceError(int(fail))
    return msgs, float(lognorm.sum())


def backward_sample(p: HmmProblem, messages, rng: np.random.Generator) -> np.ndarray:
    """Draw a state sequence from the posterior, one uniform per slot."""
    u = rng.random(p.horizon)
    sparse, a, b = p._stack
    if sparse:
        states, fail = _backward_sparse(messages, a, b, p.steps, u)
    else:
        states, fail = _backward_dense(messages, a, p.steps, u)
    if fail >= 0:
        raise AssertionError(f"backward step {fail} has no admissible state; "
                             "messages do not belong to this problem")
    return states


def stack_kernels(kernels, n):
    """Pack kernels into the arrays consumed by the compiled passes.

    Returns ``(sparse, a, b)``: for sparse stacks ``a``/``b`` are the
    ``(K, n, width)`` column and value arrays, otherwise ``a`` is the
    ``(K, n, n)`` dense stack and ``b`` is None.
    """
    return HmmProblem(np.ones(n) / n, tuple(kernels), np.empty(0, np.int64),
                      np.ones((1, n)))._stack


def sample_stacked(initial, stack, steps, likelihoods, rng):
    """FFBS on prebuilt kernel stacks, skipping HmmProblem validation.

    ``stack`` is the output of :func:`stack_kernels`.  Returns
    ``(states, log_evidence)``.
    """
    sparse, a, b = stack
    if sparse:
        msgs, lognorm, fail = _forward_sparse(initial, a, b, steps, likelihoods)
    else:
        msgs, lognorm, fail = _forward_dense(initial, a, steps, likelihoods)
    if fail >= 0:
        raise InconsistentEvidenceError(int(fail))
    u = rng.random(likelihoods.shape[0])
    if sparse:
        states, fail = _backward_sparse(msgs, a, b, steps, u)
    else:
        states, fail = _backward_dense(msgs, a, steps, u)
    if fail >= 0:
        raise AssertionError(f"backward step {fail} has no admissible state")
    return states, float(lognorm.sum())


def sample(p: HmmProblem, rng: np.random.Generator):
    """Forward filter then backward sample; returns ``(states, log_evidence)``."""
    msgs, log_ev = forward_filter(p)
    return backward_sample(p, msgs, rng), log_ev
