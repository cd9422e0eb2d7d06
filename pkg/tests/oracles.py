"""Independent reference computations used by the tests.

Each oracle is written from the defining formula with plain loops or
textbook linear algebra and shares no code with the package.
"""
from __future__ import annotations

import cmath
import itertools
import math

import numpy as np


def lif_by_hand(inputs, alpha=1.0, theta=1.0, reset="subtract"):
    """Scalar LIF loop; returns (spike steps, final voltage)."""
    v = 0.0
    fired = []
    for t, i in enumerate(inputs):
        v = alpha * v + i
        if v >= theta:
            fired.append(t)
            v = v - theta if reset == "subtract" else 0.0
    return fired, v


def dft(x):
    """Direct O(N^2) DFT."""
    n = len(x)
    return np.array([sum(x[m] * cmath.exp(-2j * math.pi * k * m / n) for m in range(n)) for k in range(n)])


def resonator_end_magnitude(k, n):
    """|z| after driving an undamped resonator at omega=2 pi k/n with cos(2 pi k m/n), m=0..n-1.

    z = sum_m e^{i w (n-1-m)} cos(w m) = e^{i w (n-1)} (n/2 + 0.5 sum_m e^{-2 i w m});
    the second sum vanishes unless 2k is a multiple of n.
    """
    if (2 * k) % n == 0:
        return abs(n / 2 + 0.5 * n)
    return n / 2


def lasso_objective(phi, s, lam, a):
    r = phi @ a - s
    return 0.5 * float(r @ r) + lam * float(np.abs(a).sum())


def lasso_active_set(phi, s, lam):
    """Exact LASSO solution by enumerating every sign pattern in {-1, 0, +1}^N.

    For each pattern the reduced stationarity system is solved in closed
    form; a candidate is kept only if its signs match the pattern and the
    off-support subgradient condition holds. Among survivors the lowest
    objective wins.
    """
    m, n = phi.shape
    best, best_obj = np.zeros(n), lasso_objective(phi, s, lam, np.zeros(n))
    g0 = phi.T @ s
    if np.all(np.abs(g0) <= lam + 1e-12):
        return best
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        sig = np.array(pattern, dtype=float)
        sup = np.nonzero(sig)[0]
        if sup.size == 0 or sup.size > m:
            continue
        ps = phi[:, sup]
        gram = ps.T @ ps
        if np.linalg.matrix_rank(gram) < sup.size:
            continue
        a_s = np.linalg.solve(gram, ps.T @ s - lam * sig[sup])
        if np.any(np.sign(a_s) != sig[sup]):
            continue
        a = np.zeros(n)
        a[sup] = a_s
        g = phi.T @ (phi @ a - s)
        off = np.setdiff1d(np.arange(n), sup)
        if off.size and np.max(np.abs(g[off])) > lam + 1e-9:
            continue
        obj = lasso_objective(phi, s, lam, a)
        if obj < best_obj:
            best, best_obj = a, obj
    return best


def complex_least_squares(a_mat, d):
    """``argmin ||A w - d||`` via the normal equations ``A^H A w = A^H d``."""
    ah = a_mat.conj().T
    return np.linalg.solve(ah @ a_mat, ah @ d)


def enumerate_configs(powers, bandwidths, k, p_total, w_total):
    """Feasible per-beam (P, W) assignments as a list of tuples, lexicographic."""
    pairs = sorted((p, w) for p in set(powers) for w in set(bandwidths))
    out = []
    for combo in itertools.product(pairs, repeat=k):
        if sum(c[0] for c in combo) <= p_total and sum(c[1] for c in combo) <= w_total:
            out.append(combo)
    return out


def capacity(p, w, gamma):
    return w * min(math.log2(1 + gamma * p), 6.0)


def best_config(demand, configs, gamma):
    """(index, mismatch) of the L1-closest configuration, lowest index on ties."""
    best_i, best_m = -1, math.inf
    for i, combo in enumerate(configs):
        mis = sum(abs(d - capacity(p, w, g)) for d, (p, w), g in zip(demand, combo, gamma))
        if mis < best_m:
            best_i, best_m = i, mis
    return best_i, best_m


def binomial_band(n, p, k=3.0):
    mu = n * p
    sd = math.sqrt(n * p * (1 - p))
    return mu - k * sd, mu + k * sd
