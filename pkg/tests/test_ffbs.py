import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mjpgibbs.core import Generator, TransitionKernel, build_kernel
from mjpgibbs.errors import DomainError, InconsistentEvidenceError
from mjpgibbs.ffbs import IDENTITY, HmmProblem, backward_sample, forward_filter, sample


def random_kernel(rng, n, sparse=False):
    off = rng.uniform(0.1, 2.0, (n, n))
    np.fill_diagonal(off, 0.0)
    A = Generator(off, sparse=sparse)
    return build_kernel(A, 1.5 * A.max_leave_rate)


def enumerate_posterior(p: HmmProblem):
    """Joint weight of every state sequence by brute force."""
    L, n = p.likelihoods.shape
    dense = [k.to_dense() for k in p.kernels]
    out = {}
    for seq in itertools.product(range(n), repeat=L):
        w = p.initial[seq[0]] * p.likelihoods[0, seq[0]]
        for i in range(1, L):
            k = p.steps[i - 1]
            b = (1.0 if seq[i] == seq[i - 1] else 0.0) if k == IDENTITY else dense[k][seq[i - 1], seq[i]]
            w *= b * p.likelihoods[i, seq[i]]
        out[seq] = w
    return out


def test_single_slot():
    p = HmmProblem(np.array([0.5, 0.5]), (), np.empty(0, int), np.array([[1.0, 0.0]]))
    msgs, log_ev = forward_filter(p)
    np.testing.assert_allclose(msgs[0], [1.0, 0.0])
    assert log_ev == pytest.approx(math.log(0.5))


def test_deterministic_kernel():
    k = TransitionKernel(np.array([[0.0, 1.0], [0.0, 1.0]]))
    p = HmmProblem.from_kernels(np.array([1.0, 0.0]), [k], np.ones((2, 2)))
    msgs, log_ev = forward_filter(p)
    np.testing.assert_allclose(msgs[1], [0.0, 1.0])
    assert log_ev == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("sparse", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_evidence_matches_enumeration(seed, sparse):
    rng = np.random.default_rng(seed)
    kernels = [random_kernel(rng, 3, sparse) for _ in range(2)]
    steps = np.array([0, IDENTITY, 1])
    lik = rng.random((4, 3)) + 0.01
    init = rng.random(3)
    init /= init.sum()
    p = HmmProblem(init, tuple(kernels), steps, lik)
    brute = sum(enumerate_posterior(p).values())
    assert forward_filter(p)[1] == pytest.approx(math.log(brute), abs=1e-10)


def test_messages_are_normalized(rng):
    kernels = [random_kernel(rng, 4)]
    p = HmmProblem(np.full(4, 0.25), tuple(kernels), np.zeros(499, int), rng.random((500, 4)))
    msgs, log_ev = forward_filter(p)
    np.testing.assert_allclose(msgs.sum(axis=1), 1.0, atol=1e-12)
    assert np.isfinite(log_ev)


def test_long_horizon_does_not_underflow(rng):
    kernels = [random_kernel(rng, 3)]
    lik = np.full((20000, 3), 1e-3)
    p = HmmProblem(np.full(3, 1 / 3), tuple(kernels), np.zeros(19999, int), lik)
    assert forward_filter(p)[1] == pytest.approx(20000 * math.log(1e-3), rel=1e-12)


def test_inconsistent_evidence_names_step():
    k = TransitionKernel(np.eye(2))
    lik = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    p = HmmProblem.from_kernels(np.array([0.5, 0.5]), [k, k], lik)
    with pytest.raises(InconsistentEvidenceError) as err:
        forward_filter(p)
    assert err.value.step == 2


def test_all_zero_likelihood_row_rejected():
    with pytest.raises(InconsistentEvidenceError):
        HmmProblem(np.array([1.0]), (), np.empty(0, int), np.array([[0.0]]))


@pytest.mark.parametrize("bad", [
    dict(steps=np.array([1])),
    dict(steps=np.array([0, 0])),
    dict(initial=np.array([1.0, 0.0, 0.0])),
    dict(likelihoods=-np.ones((2, 2))),
])
def test_validation(bad):
    kw = dict(initial=np.array([0.5, 0.5]), kernels=(TransitionKernel(np.eye(2)),),
              steps=np.array([0]), likelihoods=np.ones((2, 2)))
    kw.update(bad)
    with pytest.raises(DomainError):
        HmmProblem(**kw)


def test_forced_sequence(rng):
    k = random_kernel(rng, 3)
    target = np.array([2, 0, 0, 1, 2])
    lik = np.zeros((5, 3))
    lik[np.arange(5), target] = 1.0
    p = HmmProblem.from_kernels(np.full(3, 1 / 3), [k] * 4, lik)
    for _ in range(20):
        np.testing.assert_array_equal(sample(p, rng)[0], target)


@pytest.mark.parametrize("sparse", [False, True])
def test_sampling_matches_enumerated_posterior(sparse):
    rng = np.random.default_rng(7)
    k = random_kernel(rng, 2, sparse)
    lik = np.array([[0.3, 0.9], [0.8, 0.2]])
    p = HmmProblem.from_kernels(np.array([0.6, 0.4]), [k], lik)
    post = enumerate_posterior(p)
    z = sum(post.values())
    msgs, _ = forward_filter(p)
    draws = 200_000
    seqs = np.array([backward_sample(p, msgs, rng) for _ in range(draws)])
    for seq, w in post.items():
        prob = w / z
        freq = np.mean(np.all(seqs == np.array(seq), axis=1))
        se = math.sqrt(prob * (1 - prob) / draws)
        assert abs(freq - prob) < 3 * se + 1e-12


def test_identity_chain_keeps_state(rng):
    init = np.array([0.2, 0.5, 0.3])
    p = HmmProblem(init, (), np.full(5, IDENTITY), np.ones((6, 3)))
    draws = np.array([sample(p, rng)[0] for _ in range(20000)])
    assert np.all(draws == draws[:, :1])
    freq = np.bincount(draws[:, 0], minlength=3) / draws.shape[0]
    se = np.sqrt(init * (1 - init) / draws.shape[0])
    assert np.all(np.abs(freq - init) < 3 * se)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.integers(0, 3))
def test_scaling_a_likelihood_shifts_evidence(seed, c, slot):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, 3)
    lik = rng.random((4, 3)) + 0.01
    p = HmmProblem.from_kernels(np.full(3, 1 / 3), [k] * 3, lik)
    scaled = lik.copy()
    scaled[slot] *= c
    q = HmmProblem.from_kernels(np.full(3, 1 / 3), [k] * 3, scaled)
    m1, e1 = forward_filter(p)
    m2, e2 = forward_filter(q)
    assert e2 - e1 == pytest.approx(math.log(c), abs=1e-10)
    np.testing.assert_allclose(m1, m2, atol=1e-12)


def test_scaled_likelihood_same_samples(rng):
    k = random_kernel(rng, 3)
    lik = rng.random((3, 3)) + 0.01
    p = HmmProblem.from_kernels(np.full(3, 1 / 3), [k] * 2, lik)
    q = HmmProblem.from_kernels(np.full(3, 1 / 3), [k] * 2, lik * np.array([[5.0], [0.1], [2.0]]))
    a = [tuple(sample(p, np.random.default_rng(i))[0]) for i in range(500)]
    b = [tuple(sample(q, np.random.default_rng(i))[0]) for i in range(500)]
    assert a == b


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_shared_factor_placement_invariance(seed, c):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, 3)
    lik = rng.random((5, 3)) + 0.01
    evs = []
    for slot in range(5):
        scaled = lik.copy()
        scaled[slot] *= c
        evs.append(forward_filter(HmmProblem.from_kernels(np.full(3, 1 / 3), [k] * 4, scaled))[1])
    assert np.ptp(evs) < 1e-10


def test_sparse_and_dense_give_same_draws(rng):
    off = rng.uniform(0.1, 1.0, (6, 6)) * (rng.random((6, 6)) < 0.5)
    np.fill_diagonal(off, 0.0)
    omega = 2.0 * off.sum(axis=1).max()
    dense = build_kernel(Generator(off), omega)
    sparse = build_kernel(Generator(off, sparse=True), omega)
    lik = rng.random((50, 6)) + 0.01
    p = HmmProblem.from_kernels(np.full(6, 1 / 6), [dense] * 49, lik)
    q = HmmProblem.from_kernels(np.full(6, 1 / 6), [sparse] * 49, lik)
    a, ea = sample(p, np.random.default_rng(1))
    b, eb = sample(q, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    assert ea == pytest.approx(eb, abs=1e-10)
