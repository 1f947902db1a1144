"""Generators, paths, observations and the algebra connecting them.

Orientation: every matrix in this package stores the *source* state in the
row, so ``rates[i, j]`` is the rate of jumping from ``i`` to ``j`` and
kernels are row-stochastic.  A generator written with source states in
columns (columns summing to zero) is the transpose of ours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DomainError, InvalidPolicyError

#: Log of a zero probability.  Propagates through sums like any float.
LOG_ZERO = -math.inf

_ROW_TOL = 1e-12


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Generator:
    """Rate matrix of a homogeneous Markov jump process.

    Two storages share one interface.  Dense generators keep the full
    ``n x n`` matrix.  Sparse generators keep, for every source state, a
    padded list of ``(neighbour, rate)`` pairs (``cols``/``vals``, both of
    shape ``(n, width)``); padding slots carry rate 0.

    The diagonal is never read from the input; it is recomputed as minus the
    row's off-diagonal sum.
    """

    def __init__(self, rates, *, sparse: bool = False):
        rates = np.array(rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or rates.shape[0] < 1:
            raise DomainError(f"generator must be a non-empty square matrix, got {rates.shape}")
        off = rates.copy()
        np.fill_diagonal(off, 0.0)
        if not np.all(np.isfinite(off)):
            raise DomainError("generator rates must be finite")
        if np.any(off < 0):
            raise DomainError("off-diagonal rates must be non-negative")
        if sparse:
            cols, vals = _dense_to_ell(off)
            self._init_sparse(cols, vals)
        else:
            self._init_dense(off)

    def _init_dense(self, off):
        self.n = off.shape[0]
        self.is_sparse = False
        self._off = _frozen(off)
        self.leave_rates = _frozen(off.sum(axis=1))
        self.cols = self.vals = None

    def _init_sparse(self, cols, vals):
        self.n = cols.shape[0]
        self.is_sparse = True
        self._off = None
        self.cols = _frozen(cols.astype(np.int64))
        self.vals = _frozen(vals.astype(float))
        self.leave_rates = _frozen(self.vals.sum(axis=1))

    @classmethod
    def from_entries(cls, n: int, entries, *, sparse: bool = False) -> "Generator":
        """Build from ``(i, j, q)`` triples; omitted pairs are zero.

        Diagonal triples are ignored and repeated pairs are summed.
        """
        if n < 1:
            raise DomainError("generator dimension must be positive")
        rows: list[dict[int, float]] = [dict() for _ in range(n)]
        for i, j, q in entries:
            i, j, q = int(i), int(j), float(q)
            if not (0 <= i < n and 0 <= j < n):
                raise DomainError(f"rate entry ({i}, {j}) outside dimension {n}")
            if i == j:
                continue
            if not math.isfinite(q) or q < 0:
                raise DomainError(f"rate q({i}->{j}) = {q} must be finite and >= 0")
            rows[i][j] = rows[i].get(j, 0.0) + q
        if not sparse:
            off = np.zeros((n, n))
            for i, row in enumerate(rows):
                for j, q in row.items():
                    off[i, j] = q
            return cls(off)
        width = max(1, max(len(r) for r in rows))
        cols = np.tile(np.arange(n)[:, None], (1, width))
        vals = np.zeros((n, width))
        for i, row in enumerate(rows):
            for e, (j, q) in enumerate(sorted(row.items())):
                cols[i, e] = j
                vals[i, e] = q
        gen = cls.__new__(cls)
        gen._init_sparse(cols, vals)
        return gen

    @classmethod
    def tridiagonal(cls, up, down, *, sparse: bool = True) -> "Generator":
        """Birth-death generator with ``up[i] = q(i -> i+1)`` and ``down[i] = q(i -> i-1)``.

        ``up[-1]`` and ``down[0]`` must be zero (or are dropped).
        """
        up = np.asarray(up, dtype=float)
        down = np.asarray(down, dtype=float)
        n = up.shape[0]
        if down.shape[0] != n:
            raise DomainError("up and down rate vectors differ in length")
        entries = [(i, i + 1, up[i]) for i in range(n - 1)]
        entries += [(i, i - 1, down[i]) for i in range(1, n)]
        return cls.from_entries(n, entries, sparse=sparse)

    # -- views -------------------------------------------------------------

    @cached_property
    def matrix(self) -> np.ndarray:
        """Full matrix including the negative diagonal."""
        m = self.off_diagonal.copy()
        m[np.diag_indices(self.n)] = -self.leave_rates
        return _frozen(m)

    @cached_property
    def off_diagonal(self) -> np.ndarray:
        if self._off is not None:
            return self._off
        off = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), self.cols.shape[1])
        np.add.at(off, (rows, self.cols.ravel()), self.vals.ravel())
        np.fill_diagonal(off, 0.0)
        return _frozen(off)

    @cached_property
    def jump_cdf(self) -> np.ndarray:
        """Row-wise cumulative next-state distribution; zero rows for absorbing states."""
        off = self.off_diagonal
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(self.leave_rates[:, None] > 0, off / self.leave_rates[:, None], 0.0)
        return _frozen(np.cumsum(p, axis=1))

    @property
    def max_leave_rate(self) -> float:
        return float(self.leave_rates.max())

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return int(np.count_nonzero(self.vals))
        return int(np.count_nonzero(self._off))

    def rate(self, i: int, j: int) -> float:
        """q(i -> j) for i != j; the (negative) diagonal entry for i == j."""
        if i == j:
            return -float(self.leave_rates[i])
        if self._off is not None:
            return float(self._off[i, j])
        hit = self.cols[i] == j
        return float(self.vals[i][hit].sum())

    def entries(self):
        """Yield the non-zero off-diagonal ``(i, j, q)`` triples in row order."""
        off = self.off_diagonal
        for i, j in zip(*np.nonzero(off)):
            yield int(i), int(j), float(off[i, j])

    def to_sparse(self) -> "Generator":
        if self.is_sparse:
            return self
        return Generator(self._off, sparse=True)

    def to_dense(self) -> "Generator":
        if not self.is_sparse:
            return self
        return Generator(self.off_diagonal)

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"Generator(n={self.n}, {kind}, max_leave_rate={self.max_leave_rate:.4g})"


def _dense_to_ell(off):
    n = off.shape[0]
    counts = np.count_nonzero(off, axis=1)
    width = max(1, int(counts.max()))
    cols = np.tile(np.arange(n)[:, None], (1, width))
    vals = np.zeros((n, width))
    for i in range(n):
        nz = np.flatnonzero(off[i])
        cols[i, : nz.size] = nz
        vals[i, : nz.size] = off[i, nz]
    return cols, vals


@dataclass(frozen=True)
class InitialDistribution:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise DomainError("initial distribution must be a non-empty vector")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise DomainError("initial weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > _ROW_TOL:
            raise DomainError(f"initial weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, n: int) -> "InitialDistribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, state: int) -> "InitialDistribution":
        w = np.zeros(n)
        w[state] = 1.0
        return cls(w)

    @classmethod
    def normalized(cls, weights) -> "InitialDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)


@dataclass(frozen=True)
class _StepPath:
    t_start: float
    t_end: float
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t0, t1 = float(self.t_start), float(self.t_end)
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=np.int64).reshape(-1)
        if not t0 <= t1:
            raise DomainError(f"empty interval [{t0}, {t1}]")
        if states.size != times.size + 1:
            raise DomainError("need exactly one more state than jump times")
        if times.size:
            if times[0] <= t0 or times[-1] >= t1:
                raise DomainError("jump times must lie strictly inside the interval")
            if np.any(np.diff(times) <= 0):
                raise DomainError("jump times must be strictly increasing")
        if np.any(states < 0):
            raise DomainError("states must be non-negative indices")
        object.__setattr__(self, "t_start", t0)
        object.__setattr__(self, "t_end", t1)
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "states", _frozen(states))

    @property
    def num_jumps(self) -> int:
        return self.times.size

    @property
    def initial_state(self) -> int:
        return int(self.states[0])

    @property
    def final_state(self) -> int:
        return int(self.states[-1])

    def segments(self):
        """Return ``(starts, ends, states)`` of the constant pieces."""
        starts = np.concatenate(([self.t_start], self.times))
        ends = np.concatenate((self.times, [self.t_end]))
        return starts, ends, self.states

    def state_at(self, t: float) -> int:
        return state_at(self, t)

    def states_at(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < self.t_start) or np.any(ts > self.t_end):
            raise DomainError("query time outside the path interval")
        return self.states[np.searchsorted(self.times, ts, side="right")]


@dataclass(frozen=True)
class MjpPath(_StepPath):
    """Piecewise-constant, right-continuous trajectory ``(S, T)``.

    ``times`` holds the jump times strictly inside ``(t_start, t_end)``;
    ``states[i]`` is the state on ``[times[i-1], times[i])``.  The end of the
    interval is not a jump and is never stored in ``times``.
    """

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.states[1:] == self.states[:-1]):
            raise DomainError("consecutive states of an MJP path must differ")

    @classmethod
    def _trusted(cls, t_start, t_end, times, states) -> "MjpPath":
        # internal fast path for arrays already known to satisfy the invariants
        self = object.__new__(cls)
        object.__setattr__(self, "t_start", t_start)
        object.__setattr__(self, "t_end", t_end)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        return self

    @classmethod
    def constant(cls, t_start, t_end, state) -> "MjpPath":
        return cls(t_start, t_end, np.empty(0), np.array([state]))


@dataclass(frozen=True)
class UniformizedPath(_StepPath):
    """Poisson grid ``W`` with chain states ``V``; self-transitions allowed.

    ``states[0]`` is the state at ``t_start``; ``states[i]`` the state
    assigned at grid time ``times[i-1]``.
    """

    omega: float = 0.0

    @property
    def virtual_mask(self) -> np.ndarray:
        """True for grid times at which the state does not change."""
        return self.states[1:] == self.states[:-1]


def state_at(path, t: float) -> int:
    """State of ``path`` at time ``t`` (right-continuous; ``t_end`` maps to the last state)."""
    if not path.t_start <= t <= path.t_end:
        raise DomainError(f"t={t} outside [{path.t_start}, {path.t_end}]")
    return int(path.states[np.searchsorted(path.times, t, side="right")])


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic matrix, dense (``matrix``) or padded sparse (``cols``/``vals``)."""

    matrix: np.ndarray | None = None
    cols: np.ndarray | None = None
    vals: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix is not None:
            m = np.array(self.matrix, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DomainError("kernel must be square")
            if np.any(m < 0):
                raise DomainError("kernel entries must be non-negative")
            if np.any(np.abs(m.sum(axis=1) - 1.0) > _ROW_TOL):
                raise DomainError("kernel rows must sum to 1")
            object.__setattr__(self, "matrix", _frozen(m))
        else:
            cols = np.asarray(self.cols, dtype=np.int64)
            vals = np.asarray(self.vals, dtype=float)
            if cols.shape != vals.shape or cols.ndim != 2:
                raise DomainError("sparse kernel needs matching (n, width) arrays")
            if np.any(vals < 0):
                raise DomainError("kernel entries must be non-negative")
            if np.any(np.abs(vals.sum(axis=1) - 1.0) > _ROW_TOL):
                raise DomainError("kernel rows must sum to 1")
            object.__setattr__(self, "cols", _frozen(cols))
            object.__setattr__(self, "vals", _frozen(vals))

    @property
    def is_sparse(self) -> bool:
        return self.matrix is None

    @property
    def n(self) -> int:
        return self.matrix.shape[0] if self.matrix is not None else self.cols.shape[0]

    @classmethod
    def identity(cls, n: int, *, sparse: bool = False) -> "TransitionKernel":
        if sparse:
            return cls(cols=np.arange(n)[:, None], vals=np.ones((n, 1)))
        return cls(np.eye(n))

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        n = self.n
        m = np.zeros((n, n))
        rows = np.repeat(np.arange(n), self.cols.shape[1])
        np.add.at(m, (rows, self.cols.ravel()), self.vals.ravel())
        return m


def build_kernel(A: Generator, omega: float) -> TransitionKernel:
    """``B = I + A / omega`` in row-source orientation.

    A generator with no transitions at all yields the identity for any
    ``omega >= 0``.
    """
    omega = float(omega)
    max_leave = A.max_leave_rate
    if max_leave == 0.0 and omega >= 0.0:
        return TransitionKernel.identity(A.n, sparse=A.is_sparse)
    if not omega >= max_leave or omega <= 0.0:
        raise InvalidPolicyError(
            f"omega={omega} is below the maximum leave rate {max_leave}")
    if A.is_sparse:
        vals = np.concatenate((A.vals / omega, (1.0 - A.leave_rates / omega)[:, None]), axis=1)
        cols = np.concatenate((A.cols, np.arange(A.n)[:, None]), axis=1)
        np.maximum(vals, 0.0, out=vals)
        return TransitionKernel(cols=cols, vals=vals)
    B = A.off_diagonal / omega
    B[np.diag_indices(A.n)] = np.maximum(1.0 - A.leave_rates / omega, 0.0)
    return TransitionKernel(B)


@dataclass(frozen=True)
class UniformizationPolicy:
    """``omega = multiplier * max leave rate``; the multiplier must exceed 1."""

    multiplier: float = 2.0

    def __post_init__(self):
        if not float(self.multiplier) > 1.0:
            raise InvalidPolicyError(
                f"multiplier must be > 1 for an ergodic sampler, got {self.multiplier}")

    def omega(self, A: Generator) -> float:
        return self.multiplier * A.max_leave_rate


# -- observations -------------------------------------------------------------


class PointMassLikelihood:
    """Noiseless observation: the payload is the state itself."""

    def __call__(self, state, payload):
        return 1.0 if int(state) == int(payload) else 0.0

    def vector(self, payload, n):
        v = np.zeros(n)
        v[int(payload)] = 1.0
        return v


class TableLikelihood:
    """Likelihood read from a ``(n_payloads, n_states)`` emission table."""

    def __init__(self, table):
        self.table = _frozen(np.asarray(table, dtype=float))

    def __call__(self, state, payload):
        return float(self.table[int(payload), int(state)])

    def vector(self, payload, n):
        return self.table[int(payload), :n]


@dataclass(frozen=True)
class ObservationSet:
    """Timestamped observations with a pluggable likelihood model.

    ``model(state, payload)`` returns ``p(payload | state)``; a model may also
    provide ``vector(payload, n)`` for the whole state space at once.  The
    ``(O, n)`` likelihood table is evaluated once at construction.
    """

    times: np.ndarray
    payloads: tuple
    model: Callable[[int, Any], float]
    n_states: int
    likelihoods: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        payloads = tuple(self.payloads)
        if len(payloads) != times.size:
            raise DomainError("one payload per observation time is required")
        if times.size and np.any(np.diff(times) < 0):
            order = np.argsort(times, kind="stable")
            times = times[order]
            payloads = tuple(payloads[i] for i in order)
        n = int(self.n_states)
        table = np.empty((times.size, n))
        vec = getattr(self.model, "vector", None)
        for r, x in enumerate(payloads):
            if vec is not None:
                table[r] = vec(x, n)
            else:
                table[r] = [self.model(s, x) for s in range(n)]
        if np.any(~np.isfinite(table)) or np.any(table < 0):
            raise DomainError("likelihood values must be finite and non-negative")
        if table.size and np.any(table.max(axis=1) <= 0):
            bad = int(np.flatnonzero(table.max(axis=1) <= 0)[0])
            raise DomainError(f"observation {bad} has zero likelihood under every state")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "payloads", payloads)
        object.__setattr__(self, "n_states", n)
        object.__setattr__(self, "likelihoods", _frozen(table))

    @classmethod
    def empty(cls, n_states: int) -> "ObservationSet":
        return cls(np.empty(0), (), PointMassLikelihood(), n_states)

    def __len__(self):
        return self.times.size

    def check_interval(self, t_start, t_end):
        if len(self) and (self.times[0] < t_start or self.times[-1] > t_end):
            raise DomainError("observation times must lie inside the interval")


# -- path algebra ---------------------------------------------------------------


def path_log_density(A: Generator, pi: InitialDistribution, path: MjpPath) -> float:
    """Log density of ``(S, T)``: initial weight, jump rates and survival terms."""
    s = path.states
    if s.max() >= A.n:
        raise DomainError("path visits a state outside the generator")
    p0 = pi.weights[s[0]]
    if p0 <= 0:
        return LOG_ZERO
    starts, ends, _ = path.segments()
    survival = float(np.dot(A.leave_rates[s], ends - starts))
    if path.num_jumps:
        if A.is_sparse:
            q = np.array([A.rate(a, b) for a, b in zip(s[:-1], s[1:])])
        else:
            q = A.off_diagonal[s[:-1], s[1:]]
        if np.any(q <= 0):
            return LOG_ZERO
        jumps = float(np.log(q).sum())
    else:
        jumps = 0.0
    return math.log(p0) + jumps - survival


@dataclass(frozen=True)
class SufficientStats:
    """Per-state dwell times and per-ordered-pair transition counts."""

    dwell: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dwell", np.asarray(self.dwell, dtype=float))
        object.__setattr__(self, "transitions", np.asarray(self.transitions, dtype=float))

    @property
    def n(self) -> int:
        return self.dwell.size

    def to_vector(self) -> np.ndarray:
        """Dwell times followed by the off-diagonal counts in row order."""
        mask = ~np.eye(self.n, dtype=bool)
        return np.concatenate((self.dwell, self.transitions[mask]))

    def labels(self, prefix: str = "") -> list[str]:
        n = self.n
        names = [f"{prefix}dwell_{i}" for i in range(n)]
        names += [f"{prefix}n_{i}_{j}" for i in range(n) for j in range(n) if i != j]
        return names

    @classmethod
    def from_vector(cls, v, n) -> "SufficientStats":
        v = np.asarray(v, dtype=float)
        trans = np.zeros((n, n))
        trans[~np.eye(n, dtype=bool)] = v[n:]
        return cls(v[:n], trans)

    def to_dict(self) -> dict:
        return {"dwell": self.dwell.tolist(), "transitions": self.transitions.tolist()}

    @classmethod
    def from_dict(cls, d) -> "SufficientStats":
        return cls(np.asarray(d["dwell"], float), np.asarray(d["transitions"], float))


def sufficient_stats(path: MjpPath, n: int | None = None) -> SufficientStats:
    """Dwell time per state and count per ordered transition of one path."""
    s = path.states
    if n is None:
        n = int(s.max()) + 1
    starts, ends, _ = path.segments()
    dwell = np.bincount(s, weights=ends - starts, minlength=n).astype(float)
    trans = np.zeros((n, n))
    if path.num_jumps:
        np.add.at(trans, (s[:-1], s[1:]), 1.0)
    return SufficientStats(dwell, trans)


def stack_stats(stats: Sequence[SufficientStats]) -> np.ndarray:
    """Concatenate the vector form of several (e.g. per-node) statistics."""
    return np.concatenate([s.to_vector() for s in stats])
