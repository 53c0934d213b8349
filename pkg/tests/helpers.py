"""Shared generators for randomized tests."""
import numpy as np

import crossdiff as cd


def random_reversible_matrix(rng, n):
    """a_ij = S_ij / pi_i with symmetric S: reversible by construction."""
    piw = rng.uniform(0.3, 3.0, n)
    sym = rng.uniform(0.1, 2.0, (n, n))
    sym = 0.5 * (sym + sym.T)
    a = sym / piw[:, None]
    a[np.arange(n), np.arange(n)] = rng.uniform(0.3, 1.2, n)
    return a


def break_cycle_condition(a, factor=1.5):
    """Scale one off-diagonal edge; every cycle through it becomes unbalanced."""
    out = a.copy()
    out[0, 1] *= factor
    return out


def random_db_system(rng, n, s, a0_hi=1.0):
    """Detailed-balance system; for s > 1 the diagonal is lifted so eta1 > 0."""
    a = random_reversible_matrix(rng, n)
    if s > 1.0:
        off = a.copy()
        np.fill_diagonal(off, 0.0)
        need = (s - 1.0) / (s + 1.0) * off.sum(axis=1)
        a[np.arange(n), np.arange(n)] = need + rng.uniform(0.2, 0.8, n)
    return cd.CoefficientSystem(n=n, s=s, a0=rng.uniform(0.0, a0_hi, n), a=a)


def random_eta_system(rng, n, s, a0_hi=1.0):
    """Non-reversible system with eta0 > 0 (s <= 1) or eta2 > 0 (s > 1)."""
    a = rng.uniform(0.0, 1.0, (n, n))
    sq = np.sqrt(a)
    if s <= 1.0:
        penalty = s / (2.0 * (s + 1.0)) * np.sum((sq - sq.T) ** 2, axis=1)
    else:
        cross = s * (a + a.T) - 2.0 * np.sqrt(a * a.T)
        np.fill_diagonal(cross, 0.0)
        penalty = cross.sum(axis=1) / (2.0 * (s + 1.0))
    a[np.arange(n), np.arange(n)] = penalty + rng.uniform(0.2, 0.8, n)
    return cd.CoefficientSystem(n=n, s=s, a0=rng.uniform(0.0, a0_hi, n), a=a)


def smooth_positive_field(x, n, amp=0.3):
    """Strictly positive cosine bumps, one frequency per species."""
    return np.stack([1.0 + 0.2 * i + amp * np.cos((i + 1) * np.pi * x)
                     for i in range(n)], axis=1)
