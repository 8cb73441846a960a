"""Brute-force reference computations for small instances.

These deliberately avoid the production code paths so they can be used to
cross-check them.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def relay_load_by_enumeration(D, ap_to_cpu, beta, N: int, tau_c: int) -> int:
    """Inter-CPU scalars per block via (AP, destination CPU) pair enumeration.

    The master CPU is found by counting serving APs per CPU in plain Python
    (ties: larger gain sum, then lower CPU index). AP ``l`` must be forwarded
    to CPU ``m`` iff some UE mastered by ``m`` is served by ``l`` and ``l``
    belongs to another CPU; each such pair costs ``N * tau_c`` scalars.
    """
    K, L = len(D), len(D[0])
    masters = []
    for k in range(K):
        tally: dict[int, list[float]] = {}
        for l in range(L):
            if D[k][l]:
                entry = tally.setdefault(int(ap_to_cpu[l]), [0, 0.0])
                entry[0] += 1
                entry[1] += float(beta[k][l])
        masters.append(min(tally, key=lambda u: (-tally[u][0], -tally[u][1], u)))
    pairs = 0
    cpus = sorted({int(c) for c in ap_to_cpu})
    for l in range(L):
        for m in cpus:
            if int(ap_to_cpu[l]) == m:
                continue
            if any(D[k][l] and masters[k] == m for k in range(K)):
                pairs += 1
    return pairs * N * tau_c


def min_subset_reaching(gains, delta: float, rel_tol: float = 1e-12) -> int:
    """Smallest number of entries whose sum reaches ``delta`` percent of the total."""
    gains = [float(g) for g in gains]
    target = delta / 100.0 * sum(gains) * (1 - rel_tol)
    for size in range(1, len(gains) + 1):
        if any(sum(c) >= target for c in combinations(gains, size)):
            return size
    return len(gains)


def random_instance(rng: np.random.Generator, max_L: int = 10, max_U: int = 4, max_K: int = 8):
    """Random tiny (D, ap_to_cpu, beta) with every CPU owning an AP and every UE served."""
    L = int(rng.integers(1, max_L + 1))
    U = int(rng.integers(1, min(max_U, L) + 1))
    K = int(rng.integers(1, max_K + 1))
    ap_to_cpu = np.concatenate([np.arange(U), rng.integers(0, U, L - U)])
    rng.shuffle(ap_to_cpu)
    D = rng.random((K, L)) < rng.uniform(0.1, 0.7)
    for k in range(K):
        if not D[k].any():
            D[k, rng.integers(L)] = True
    beta = rng.exponential(1.0, (K, L))
    return D, ap_to_cpu, beta
