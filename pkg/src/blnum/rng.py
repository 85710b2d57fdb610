"""Seeded random streams and random orthonormal frames.

Every random choice in the package flows through Philox, a named
counter-based generator, so identical seeds reproduce bit-for-bit
across platforms and across any evaluation order.  Independent
substreams are derived from ``(seed, *key)`` via SeedSequence spawn
keys; per-draw keys make parallel or reordered evaluation harmless.
"""

import numpy as np


def stream(seed, *key):
    """Return the Philox generator for substream ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def haar_frame(rng, n, k):
    """Sample an n-by-k matrix with orthonormal columns, Haar-distributed.

    QR of an iid Gaussian matrix with the R-diagonal sign fix, which makes
    the distribution exactly rotation invariant.
    """
    if k == 0:
        return np.zeros((n, 0))
    g = rng.standard_normal((n, k))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def random_spd(rng, n, spread=0.7):
    """Sample a symmetric positive-definite n-by-n matrix.

    Eigenvalues are lognormal with the given log-scale spread, eigenvectors
    Haar; spread 0 gives the identity.
    """
    q = haar_frame(rng, n, n)
    eigs = np.exp(rng.standard_normal(n) * spread)
    return (q * eigs) @ q.T
