"""Continuous-time Bayesian networks and the node-wise uniformization Gibbs sweep.

Parent configurations are encoded mixed-radix with the *first* listed
parent as the least significant digit::

    config = s[p0] + n[p0] * (s[p1] + n[p1] * (s[p2] + ...))

The same encoding, over all nodes in index order, numbers the states of the
flattened joint MJP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import ffbs
from .core import (
    Generator,
    InitialDistribution,
    MjpPath,
    ObservationSet,
    SufficientStats,
    UniformizationPolicy,
    build_kernel,
)
from .errors import DomainError, GridCollisionError, InconsistentEvidenceError


def _radix(sizes) -> np.ndarray:
    out = np.ones(len(sizes), dtype=np.int64)
    for i in range(1, len(sizes)):
        out[i] = out[i - 1] * sizes[i - 1]
    return out


class CtbnModel:
    """Nodes, parent lists, conditional generators and an initial network.

    ``generators[k][c]`` is node ``k``'s Generator under parent configuration
    ``c``.  ``initial`` is either a list of per-node InitialDistributions
    (product form) or a joint probability array of shape ``n_states``
    (axis ``k`` for node ``k``).  The graph may contain cycles.
    """

    def __init__(self, n_states: Sequence[int], parents: Sequence[Sequence[int]],
                 generators: Sequence[Sequence[Generator]], initial, names=None):
        self.n_states = tuple(int(n) for n in n_states)
        m = self.m = len(self.n_states)
        if m < 1:
            raise DomainError("a CTBN needs at least one node")
        self.parents = tuple(tuple(int(p) for p in ps) for ps in parents)
        if len(self.parents) != m or len(generators) != m:
            raise DomainError("parents and generators must list every node")
        self.names = tuple(names) if names is not None else tuple(f"X{k}" for k in range(m))
        self.children = tuple(tuple(c for c in range(m) if k in self.parents[c]) for k in range(m))
        self.radix = []
        self.leave = []
        self.offdiag = []
        self.log_rates = []
        self.generators = []
        for k in range(m):
            ps = self.parents[k]
            if len(set(ps)) != len(ps) or k in ps or any(not 0 <= p < m for p in ps):
                raise DomainError(f"invalid parent list {ps} for node {k}")
            sizes = [self.n_states[p] for p in ps]
            n_cfg = int(np.prod(sizes)) if sizes else 1
            gens = list(generators[k])
            if len(gens) != n_cfg:
                raise DomainError(f"node {k} needs {n_cfg} generators, got {len(gens)}")
            for g in gens:
                if g.n != self.n_states[k]:
                    raise DomainError(f"node {k} generator has dimension {g.n}")
            self.generators.append(tuple(gens))
            self.radix.append(_radix(sizes))
            off = np.array([g.off_diagonal for g in gens])
            self.offdiag.append(off)
            self.leave.append(off.sum(axis=2))
            with np.errstate(divide="ignore"):
                self.log_rates.append(np.log(off))
        self.generators = tuple(self.generators)

        if isinstance(initial, np.ndarray):
            table = np.asarray(initial, dtype=float)
            if table.shape != self.n_states:
                raise DomainError("joint initial table has the wrong shape")
            if np.any(table < 0) or abs(table.sum() - 1.0) > 1e-12:
                raise DomainError("joint initial table must be a distribution")
            self.initial_joint = table
            self.initial_marginals = None
        else:
            marg = [d if isinstance(d, InitialDistribution) else InitialDistribution(d)
                    for d in initial]
            if len(marg) != m or any(d.n != n for d, n in zip(marg, self.n_states)):
                raise DomainError("one initial marginal per node is required")
            self.initial_marginals = tuple(marg)
            self.initial_joint = None

    @property
    def is_sparse(self) -> bool:
        return all(g.is_sparse for gens in self.generators for g in gens)

    def config(self, k: int, states) -> int:
        """Parent configuration index of node ``k`` given every node's state."""
        ps = self.parents[k]
        return int(sum(int(states[p]) * int(r) for p, r in zip(ps, self.radix[k])))

    def generator(self, k: int, states) -> Generator:
        return self.generators[k][self.config(k, states)]

    def initial_conditional(self, k: int, states) -> np.ndarray:
        """Distribution of node ``k``'s initial state given the others' initial states."""
        if self.initial_marginals is not None:
            return self.initial_marginals[k].weights
        idx = tuple(slice(None) if j == k else int(states[j]) for j in range(self.m))
        w = self.initial_joint[idx]
        tot = w.sum()
        if not tot > 0:
            raise InconsistentEvidenceError(0, node=k,
                                            message="initial configuration has zero probability")
        return w / tot

    def sample_initial(self, rng) -> np.ndarray:
        if self.initial_marginals is not None:
            return np.array([rng.choice(d.n, p=d.weights) for d in self.initial_marginals])
        flat = self.initial_joint.ravel(order="F")
        idx = rng.choice(flat.size, p=flat)
        return np.array(np.unravel_index(idx, self.n_states, order="F"))

    def __repr__(self):
        return f"CtbnModel(m={self.m}, n_states={self.n_states}, parents={self.parents})"


class CtbnPath(tuple):
    """One MjpPath per node over a common interval; no two nodes jump together."""

    def __new__(cls, paths, check=True):
        self = super().__new__(cls, paths)
        if check:
            if not self:
                raise DomainError("a CTBN path needs at least one node")
            t0, t1 = self[0].t_start, self[0].t_end
            if any(p.t_start != t0 or p.t_end != t1 for p in self):
                raise DomainError("node paths must share one interval")
            allt = np.concatenate([p.times for p in self])
            allt.sort()
            if allt.size > 1 and np.any(allt[1:] == allt[:-1]):
                raise DomainError("two nodes jump at the same time")
        return self

    @property
    def t_start(self):
        return self[0].t_start

    @property
    def t_end(self):
        return self[0].t_end

    def replace(self, k: int, path: MjpPath) -> "CtbnPath":
        items = list(self)
        items[k] = path
        return CtbnPath(items, check=False)

    def states_at(self, t) -> np.ndarray:
        return np.array([p.state_at(t) for p in self])


# -- prior simulation -----------------------------------------------------------


def sample_ctbn_prior(model: CtbnModel, interval, rng, initial_states=None) -> CtbnPath:
    """Forward simulation by competing exponential clocks.

    The total leave rate of the current configuration sets the time to the
    next event; the jumping node is chosen proportionally to its own leave
    rate, which is distributionally identical to racing one clock per node.
    """
    t0, t1 = float(interval[0]), float(interval[1])
    state = (np.array(initial_states, dtype=np.int64) if initial_states is not None
             else model.sample_initial(rng))
    times = [[] for _ in range(model.m)]
    states = [[int(s)] for s in state]
    t = t0
    rates = np.empty(model.m)
    while True:
        for k in range(model.m):
            rates[k] = model.leave[k][model.config(k, state), state[k]]
        total = rates.sum()
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        if t >= t1:
            break
        k = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        k = min(k, model.m - 1)
        row = model.offdiag[k][model.config(k, state), state[k]]
        cdf = np.cumsum(row)
        new = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        state[k] = new
        times[k].append(t)
        states[k].append(new)
    return CtbnPath([MjpPath(t0, t1, np.array(times[k]), np.array(states[k]))
                     for k in range(model.m)])


# -- conditional structure ----------------------------------------------------------


@dataclass(frozen=True)
class RateTimeline:
    """Piecewise-constant generator of one node given its parents' paths.

    ``breakpoints[0]`` is t_start; the rest are the parents' jump times.
    ``configs[i]`` indexes the generator valid on segment ``i``.
    """

    breakpoints: np.ndarray
    configs: np.ndarray
    generators: tuple

    @property
    def parent_change_times(self) -> np.ndarray:
        return self.breakpoints[1:]

    def segment_of(self, t) -> np.ndarray:
        return np.searchsorted(self.breakpoints, t, side="right") - 1


def _config_at(model, path, k, ts, skip=None) -> np.ndarray:
    """Parent configuration index of ``k`` at times ``ts`` (``skip`` parent contributes 0)."""
    cfg = np.zeros(np.shape(ts), dtype=np.int64)
    for p, r in zip(model.parents[k], model.radix[k]):
        if p == skip:
            continue
        pp = path[p]
        cfg += r * pp.states[np.searchsorted(pp.times, ts, side="right")]
    return cfg


def node_rate_timeline(model: CtbnModel, path: CtbnPath, k: int) -> RateTimeline:
    ps = model.parents[k]
    if ps:
        P = np.concatenate([path[p].times for p in ps])
        P.sort()
    else:
        P = np.empty(0)
    bp = np.concatenate(([path.t_start], P))
    cfg = _config_at(model, path, k, bp)
    return RateTimeline(bp, cfg, tuple(model.generators[k][c] for c in cfg))


def _radix_of(model, c, k):
    return int(model.radix[c][model.parents[c].index(k)])


def child_segment_loglik(model: CtbnModel, path: CtbnPath, k: int, s: int, a: float,
                         b: float) -> float:
    """Log density of the children's paths on ``[a, b)`` with node ``k`` held at ``s``.

    Each child's piece of path is scored as a homogeneous MJP on every
    sub-interval where its own state and its other parents are constant:
    log rates of the child's jumps in ``[a, b)`` minus leave rate times
    duration.  No initial-state term.
    """
    total = 0.0
    for c in model.children[k]:
        child = path[c]
        rk = _radix_of(model, c, k)
        others = [p for p in model.parents[c] if p != k]
        cuts = [child.times] + [path[p].times for p in others]
        cuts = np.concatenate(cuts)
        cuts = np.unique(cuts[(cuts > a) & (cuts < b)])
        starts = np.concatenate(([a], cuts))
        ends = np.concatenate((cuts, [b]))
        for lo, hi in zip(starts, ends):
            cfg = int(_config_at(model, path, c, lo, skip=k)) + s * rk
            cs = child.state_at(lo)
            total -= model.leave[c][cfg, cs] * (hi - lo)
        jumps = np.flatnonzero((child.times >= a) & (child.times < b))
        for j in jumps:
            t = child.times[j]
            cfg = int(_config_at(model, path, c, t, skip=k)) + s * rk
            lr = model.log_rates[c][cfg, child.states[j], child.states[j + 1]]
            total += lr
            if lr == -math.inf:
                return -math.inf
    return total


def children_loglik_table(model: CtbnModel, path: CtbnPath, k: int, slot_starts) -> np.ndarray:
    """``table[i, s]`` = children log-likelihood on slot ``i`` with node ``k`` at ``s``.

    ``slot_starts`` begins with t_start; slot ``i`` is
    ``[slot_starts[i], slot_starts[i+1])`` and the last one ends at t_end.
    Vectorized counterpart of :func:`child_segment_loglik`.
    """
    nk = model.n_states[k]
    L = slot_starts.size
    table = np.zeros((L, nk))
    sv = np.arange(nk)
    t1 = path.t_end
    for c in model.children[k]:
        child = path[c]
        rk = _radix_of(model, c, k)
        others = [p for p in model.parents[c] if p != k]
        starts = np.concatenate([slot_starts, child.times] + [path[p].times for p in others])
        starts.sort()
        ends = np.empty_like(starts)
        ends[:-1] = starts[1:]
        ends[-1] = t1
        base = _config_at(model, path, c, starts, skip=k)
        cs = child.states[np.searchsorted(child.times, starts, side="right")]
        cfg = base[:, None] + rk * sv[None, :]
        surv = model.leave[c][cfg, cs[:, None]] * (ends - starts)[:, None]
        first = np.searchsorted(starts, slot_starts)
        table -= np.add.reduceat(surv, first, axis=0)
        if child.times.size:
            jt = child.times
            slot = np.searchsorted(slot_starts, jt, side="right") - 1
            jcfg = _config_at(model, path, c, jt, skip=k)[:, None] + rk * sv[None, :]
            contrib = model.log_rates[c][jcfg, child.states[:-1, None], child.states[1:, None]]
            np.add.at(table, slot, contrib)
    return table


# -- Gibbs updates ---------------------------------------------------------------------


def _obs_for(observations, k):
    if observations is None:
        return None
    if isinstance(observations, Mapping):
        return observations.get(k)
    return observations[k] if k < len(observations) else None


@dataclass
class NodeUpdateInfo:
    grid_size: int
    log_evidence: float


def _kernel_stack(model, k, multiplier):
    """Per-configuration Omega values and packed kernels of node ``k`` (cached on the model)."""
    cache = model.__dict__.setdefault("_kernel_cache", {})
    key = (k, float(multiplier))
    hit = cache.get(key)
    if hit is None:
        omega = multiplier * model.leave[k].max(axis=1)
        kernels = [build_kernel(g, w) for g, w in zip(model.generators[k], omega)]
        hit = cache[key] = (omega, ffbs.stack_kernels(kernels, model.n_states[k]))
    return hit


def _node_update(model, path, k, obs, policy, rng):
    cur = path[k]
    t0, t1 = cur.t_start, cur.t_end
    T = cur.times
    tl = node_rate_timeline(model, path, k)
    bp, cfg = tl.breakpoints, tl.configs
    leave = model.leave[k]
    omega_cfg, stack = _kernel_stack(model, k, policy.multiplier)

    # virtual jumps on the refinement of T and P
    pstarts = np.concatenate((bp, T))
    pstarts.sort()
    pends = np.empty_like(pstarts)
    pends[:-1] = pstarts[1:]
    pends[-1] = t1
    pcfg = cfg[np.searchsorted(bp, pstarts, side="right") - 1]
    pstate = cur.states[np.searchsorted(T, pstarts, side="right")]
    dur = pends - pstarts
    rate = omega_cfg[pcfg] - leave[pcfg, pstate]
    np.maximum(rate, 0.0, out=rate)
    counts = rng.poisson(rate * dur)
    total = int(counts.sum())
    U = np.repeat(pstarts, counts) + rng.random(total) * np.repeat(dur, counts)

    P = bp[1:]
    grid = np.concatenate((T, U, P))
    order = np.argsort(grid, kind="stable")
    grid = grid[order]
    is_p = order >= T.size + total
    if grid.size > 1 and (grid[1:] == grid[:-1]).any():
        raise GridCollisionError(f"auxiliary grid of node {k} has duplicate times")
    steps = cfg[np.searchsorted(bp, grid, side="right") - 1]
    steps[is_p] = ffbs.IDENTITY

    slot_starts = np.empty(grid.size + 1)
    slot_starts[0] = t0
    slot_starts[1:] = grid
    logl = children_loglik_table(model, path, k, slot_starts)
    if obs is not None and len(obs):
        slot = np.searchsorted(grid, obs.times, side="right")
        with np.errstate(divide="ignore"):
            np.add.at(logl, slot, np.log(obs.likelihoods))
    top = logl.max(axis=1)
    if np.isneginf(top).any():
        raise InconsistentEvidenceError(int(np.flatnonzero(np.isneginf(top))[0]), node=k)
    lik = np.exp(logl - top[:, None])

    pi = model.initial_conditional(k, [p.states[0] for p in path])
    try:
        V, log_ev = ffbs.sample_stacked(pi, stack, steps, lik, rng)
    except InconsistentEvidenceError as err:
        raise InconsistentEvidenceError(err.step, node=k) from None
    if P.size and (V[1:][is_p] != V[:-1][is_p]).any():
        raise AssertionError(f"node {k} changed state at a parent jump")

    moved = V[1:] != V[:-1]
    new = MjpPath._trusted(t0, t1, grid[moved], np.concatenate((V[:1], V[1:][moved])))
    info = NodeUpdateInfo(int(grid.size), float(log_ev + top.sum()))
    return path.replace(k, new), info


def ctbn_gibbs_node_update(model: CtbnModel, path: CtbnPath, k: int,
                           observations: ObservationSet | None = None,
                           policy: UniformizationPolicy | None = None, rng=None) -> CtbnPath:
    """Resample node ``k``'s whole path given its Markov blanket.

    The node's generator switches at its parents' jump times; there the
    subordinated chain uses the identity kernel, elsewhere ``I + A^t/Omega^t``
    with ``Omega^t`` the policy multiple of the segment's largest leave rate.
    Slot likelihoods combine the node's own observations with its
    children's path densities.
    """
    policy = policy or UniformizationPolicy()
    return _node_update(model, path, k, observations, policy, rng)[0]


def ctbn_gibbs_sweep(model: CtbnModel, path: CtbnPath, observations=None,
                     policy: UniformizationPolicy | None = None, rng=None,
                     order: str = "fixed", info: list | None = None) -> CtbnPath:
    """Update every node once, in ascending index order (or a random permutation).

    ``observations`` maps node index to ObservationSet (a list works too).
    Per-node grid sizes and log evidences are appended to ``info`` if given.
    """
    policy = policy or UniformizationPolicy()
    nodes = range(model.m) if order == "fixed" else rng.permutation(model.m)
    for k in nodes:
        path, stats = _node_update(model, path, int(k), _obs_for(observations, int(k)),
                                   policy, rng)
        if info is not None:
            info.append(stats)
    return path


def ctbn_stats(model: CtbnModel, path: CtbnPath) -> list[SufficientStats]:
    from .core import sufficient_stats

    return [sufficient_stats(p, n) for p, n in zip(path, model.n_states)]


# -- flattening ---------------------------------------------------------------------------


def joint_states(model: CtbnModel) -> np.ndarray:
    """``(N, m)`` array of node states for every joint index (node 0 least significant)."""
    N = int(np.prod(model.n_states))
    return np.array(np.unravel_index(np.arange(N), model.n_states, order="F")).T


def joint_index(model: CtbnModel, states) -> np.ndarray:
    return np.ravel_multi_index(tuple(np.asarray(states).T), model.n_states, order="F")


def flatten_ctbn(model: CtbnModel, *, sparse: bool = False):
    """The equivalent MJP over the product state space: ``(Generator, InitialDistribution)``."""
    X = joint_states(model)
    entries = []
    for x_idx, x in enumerate(X):
        for k in range(model.m):
            row = model.offdiag[k][model.config(k, x), x[k]]
            for s in np.flatnonzero(row):
                y = x.copy()
                y[k] = s
                entries.append((x_idx, int(joint_index(model, y)), float(row[s])))
    gen = Generator.from_entries(X.shape[0], entries, sparse=sparse)
    if model.initial_joint is not None:
        w = model.initial_joint.ravel(order="F")
    else:
        w = np.ones(X.shape[0])
        for k, d in enumerate(model.initial_marginals):
            w = w * d.weights[X[:, k]]
    return gen, InitialDistribution(w / w.sum())


class _NodeLikelihood:
    """Joint-state likelihood of a single-node observation; payload is ``(node, x)``."""

    def __init__(self, model, obs_by_node):
        self.X = joint_states(model)
        self.lookup = {}
        for k, obs in obs_by_node.items():
            for x, row in zip(obs.payloads, obs.likelihoods):
                self.lookup[(k, x)] = row

    def __call__(self, state, payload):
        return float(self.vector(payload, self.X.shape[0])[state])

    def vector(self, payload, n):
        k, x = payload
        return self.lookup[(k, x)][self.X[:, k]]


def flatten_observations(model: CtbnModel, observations) -> ObservationSet:
    """Per-node observations re-expressed on the joint state space."""
    by_node = {}
    for k in range(model.m):
        obs = _obs_for(observations, k)
        if obs is not None and len(obs):
            by_node[k] = obs
    times, payloads = [], []
    for k, obs in by_node.items():
        times += list(obs.times)
        payloads += [(k, x) for x in obs.payloads]
    N = int(np.prod(model.n_states))
    return ObservationSet(np.array(times), tuple(payloads), _NodeLikelihood(model, by_node), N)


def amalgamate_stats(model: CtbnModel, joint: SufficientStats) -> list[SufficientStats]:
    """Per-node dwell times and transition counts from joint-space statistics."""
    X = joint_states(model)
    out = []
    for k, n in enumerate(model.n_states):
        dwell = np.bincount(X[:, k], weights=joint.dwell, minlength=n)
        trans = np.zeros((n, n))
        src, dst = np.nonzero(joint.transitions)
        for a, b in zip(src, dst):
            xa, xb = X[a], X[b]
            diff = np.flatnonzero(xa != xb)
            if diff.size == 1 and diff[0] == k:
                trans[xa[k], xb[k]] += joint.transitions[a, b]
        out.append(SufficientStats(dwell, trans))
    return out


def joint_path(model: CtbnModel, path: CtbnPath) -> MjpPath:
    """The CTBN path as a path of the flattened MJP."""
    times = np.concatenate([p.times for p in path])
    times.sort()
    pts = np.concatenate(([path.t_start], times))
    X = np.array([p.states_at(pts) for p in path]).T
    return MjpPath(path.t_start, path.t_end, times, joint_index(model, X))


def split_joint_path(model: CtbnModel, path: MjpPath) -> CtbnPath:
    """Inverse of :func:`joint_path` for paths where one node moves per jump."""
    X = joint_states(model)[path.states]
    nodes = []
    for k in range(model.m):
        col = X[:, k]
        moved = col[1:] != col[:-1]
        nodes.append(MjpPath(path.t_start, path.t_end, path.times[moved],
                             np.concatenate((col[:1], col[1:][moved]))))
    return CtbnPath(nodes)
