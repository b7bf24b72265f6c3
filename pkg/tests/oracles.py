"""Slow, independent reference computations used to freeze expected values.

Nothing here imports grwlab: each oracle is written from the defining
formula with explicit loops so it shares no code path with the library.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def ptrace_loops(rho: np.ndarray, dims: list[int], keep: list[int]) -> np.ndarray:
    """Partial trace by explicit index enumeration."""
    n = len(dims)
    kd = [dims[i] for i in keep]
    dk = int(np.prod(kd)) if kd else 1
    out = np.zeros((dk, dk), dtype=complex)
    for a in itertools.product(*[range(d) for d in dims]):
        for b in itertools.product(*[range(d) for d in dims]):
            if any(a[i] != b[i] for i in range(n) if i not in keep):
                continue
            ia = np.ravel_multi_index(a, dims)
            ib = np.ravel_multi_index(b, dims)
            ka = np.ravel_multi_index([a[i] for i in keep], kd) if kd else 0
            kb = np.ravel_multi_index([b[i] for i in keep], kd) if kd else 0
            out[ka, kb] += rho[ia, ib]
    return out


def ring_distance(i: int, j: int, m: int, a: float = 1.0) -> float:
    d = abs(i - j) % m
    return a * min(d, m - d)


def jump_factor(center: int, m: int, delta: float, a: float = 1.0) -> list[float]:
    """Square-normalized Gaussian on an ``m``-site ring."""
    g = [math.exp(-ring_distance(x, center, m, a) ** 2 / (2 * delta * delta)) for x in range(m)]
    k = 1.0 / math.sqrt(a * sum(v * v for v in g))
    return [k * v for v in g]


def center_probabilities(psi: np.ndarray, m: int, delta: float, a: float = 1.0) -> list[float]:
    """``a * || j_c psi ||^2`` for a single-subsystem lattice state."""
    out = []
    for c in range(m):
        j = jump_factor(c, m, delta, a)
        out.append(a * sum((j[x] ** 2) * abs(psi[x]) ** 2 for x in range(m)))
    return out


def branch_kill_probability(m: int, s0: int, s1: int, delta: float, w0: float,
                            threshold: float = 1e-6) -> float:
    """Probability one jump leaves the minority branch weight <= threshold."""
    psi = np.zeros(m)
    psi[s0], psi[s1] = math.sqrt(w0), math.sqrt(1 - w0)
    p = center_probabilities(psi, m, delta)
    total = 0.0
    for c in range(m):
        j = jump_factor(c, m, delta)
        a0 = w0 * j[s0] ** 2
        a1 = (1 - w0) * j[s1] ** 2
        if min(a0, a1) / (a0 + a1) <= threshold:
            total += p[c]
    return total


def grw_offdiag_factor(m: int, s0: int, s1: int, delta: float, p: float) -> float:
    """Coherence multiplier of the first-order GRW channel between two sites."""
    overlap = sum(jump_factor(c, m, delta)[s0] * jump_factor(c, m, delta)[s1] for c in range(m))
    return (1 - p) + p * overlap


def poisson_pmf(k: int, lam: float) -> float:
    return math.exp(-lam + k * math.log(lam) - math.lgamma(k + 1)) if lam > 0 else float(k == 0)


def wigner_mixture(alpha: complex, beta: complex) -> float:
    """P(O=+1) after collapse onto a branch, averaged over branches."""
    a2, b2 = abs(alpha) ** 2, abs(beta) ** 2
    return a2 * a2 + b2 * b2


def cloning_residual(s: float) -> float:
    return abs(s - s * s)


# Frozen values (computed with the oracles above; kept as literals so a
# change in the oracle code is itself caught).
FROZEN = {
    "mixture_0.6_0.8": 0.5392,
    "cloning_residual_inv_sqrt2": 0.20710678118654757,
    "no_jump_e_minus_20": 2.061153622438558e-09,
    "jump_factor_peak_m16_d1": 0.7510866968724995,
    "kill_prob_m32_sep8": 0.999999936515394,
    "offdiag_m16_sep6_p0.05": 0.9500061704908986,
}
