"""MCMC output analysis: statistic aggregation, ESS and average relative error."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SufficientStats
from .errors import DomainError, UndefinedMetricError


class ConstantTraceWarning(UserWarning):
    """The trace has zero variance; ESS is reported as the trace length."""


def as_vector(stats) -> np.ndarray:
    """Flatten SufficientStats, a sequence of them (e.g. one per CTBN node) or an array."""
    if isinstance(stats, SufficientStats):
        return stats.to_vector()
    if isinstance(stats, np.ndarray):
        return stats.astype(float).ravel()
    items = list(stats)
    if items and isinstance(items[0], SufficientStats):
        return np.concatenate([s.to_vector() for s in items])
    return np.asarray(items, dtype=float).ravel()


@dataclass(frozen=True)
class RelativeError:
    value: float
    excluded: tuple

    def __float__(self):
        return self.value


def average_relative_error(estimates, truth) -> RelativeError:
    """Sum over statistics of ``|estimate - truth| / truth``.

    Statistics whose true value is zero are left out; their indices are
    returned in ``excluded``.
    """
    est = as_vector(estimates)
    ref = as_vector(truth)
    if est.shape != ref.shape:
        raise DomainError(f"shape mismatch {est.shape} vs {ref.shape}")
    keep = ref != 0
    if not keep.any():
        raise UndefinedMetricError("every true statistic is zero")
    value = float(np.sum(np.abs(est[keep] - ref[keep]) / np.abs(ref[keep])))
    return RelativeError(value, tuple(int(i) for i in np.flatnonzero(~keep)))


def autocorrelation(x) -> np.ndarray:
    """Biased sample autocorrelation at all lags, via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(trace) -> float:
    """ESS with Geyer's initial monotone positive sequence truncation.

    Autocorrelations are paired as ``rho[2k] + rho[2k+1]``; pairs are summed
    while positive and forced to be non-increasing.  The result is clamped
    to ``(0, N]``.  A constant trace returns ``N`` and emits
    :class:`ConstantTraceWarning`.
    """
    x = np.asarray(trace, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise DomainError("ESS needs a trace of length >= 10")
    if np.ptp(x) == 0 or not np.var(x) > 0:
        warnings.warn("constant trace", ConstantTraceWarning, stacklevel=2)
        return float(n)
    rho = autocorrelation(x)
    m = (n - 1) // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m:2]
    neg = np.flatnonzero(pairs <= 0)
    if neg.size:
        pairs = pairs[: neg[0]]
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    if not tau > 0:
        return float(n)
    return float(min(n, n / tau))


def monte_carlo_se(trace) -> float:
    """Standard error of the trace mean using the ESS."""
    x = np.asarray(trace, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantTraceWarning)
        ess = effective_sample_size(x)
    return float(np.std(x, ddof=1) / np.sqrt(ess))


def aggregate_stats(samples: Sequence):
    """Elementwise mean of sufficient statistics plus one trace per statistic.

    ``samples`` holds SufficientStats or lists of them (one per CTBN node).
    Returns ``(mean, traces)`` where ``mean`` has the structure of one sample
    and ``traces`` maps statistic labels to arrays.
    """
    samples = list(samples)
    if not samples:
        raise DomainError("no samples to aggregate")
    first = samples[0]
    per_node = not isinstance(first, SufficientStats)
    nodes = list(first) if per_node else [first]
    sizes = [s.n for s in nodes]
    mat = np.array([as_vector(s) for s in samples])
    mean_vec = mat.mean(axis=0)
    labels = []
    for k, s in enumerate(nodes):
        labels += s.labels(prefix=f"node{k}." if per_node else "")
    traces = {lab: mat[:, j] for j, lab in enumerate(labels)}
    out, pos = [], 0
    for n in sizes:
        width = n + n * (n - 1)
        out.append(SufficientStats.from_vector(mean_vec[pos:pos + width], n))
        pos += width
    return (out if per_node else out[0]), traces


def summarize(samples: Sequence, truth=None) -> dict:
    """Per-statistic mean, ESS and MCSE; ARE against ``truth`` when given."""
    mean, traces = aggregate_stats(samples)
    rows = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantTraceWarning)
        for lab, tr in traces.items():
            entry = {"mean": float(tr.mean())}
            if tr.size >= 10:
                ess = effective_sample_size(tr)
                entry["ess"] = ess
                entry["mcse"] = float(np.std(tr, ddof=1) / np.sqrt(ess))
            rows[lab] = entry
    out = {"n_samples": len(samples), "statistics": rows}
    if truth is not None:
        are = average_relative_error(mean, truth)
        tvec = as_vector(truth)
        for lab, t in zip(traces, tvec):
            rows[lab]["truth"] = float(t)
        out["average_relative_error"] = are.value
        out["excluded"] = list(are.excluded)
    return out
