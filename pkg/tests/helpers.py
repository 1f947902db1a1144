import numpy as np

from mjpgibbs.core import Generator, InitialDistribution


def random_generator(rng, n, low=0.1, high=2.0, density=1.0, sparse=False):
    off = rng.uniform(low, high, size=(n, n))
    off *= rng.random((n, n)) < density
    np.fill_diagonal(off, 0.0)
    return Generator(off, sparse=sparse)


def random_initial(rng, n):
    return InitialDistribution.normalized(rng.random(n) + 0.05)


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
