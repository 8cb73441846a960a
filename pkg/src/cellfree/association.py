"""UE-AP association schemes: HybridUA and the six comparison benchmarks.

Every scheme fills a boolean serving matrix ``D[k, l]`` (AP ``l`` serves UE
``k`` with all of its antennas). All gain sums use linear power units.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import SCHEMES, ScenarioConfig
from .fronthaul import master_cpu_of
from .pilots import PilotAssignment
from .topology import Topology

log = logging.getLogger(__name__)

STREAMING = ("HybridUA", "SCF2", "Border", "LLSFB", "Nearest")
BATCH = ("SCF1", "SCF1lim")
_REL_TOL = 1e-12
WARMUP_DECISIONS = 20  # untimed decisions before the timed loop, so timings are steady-state


@dataclass(frozen=True, eq=False)
class Association:
    D: np.ndarray  # (K, L) bool
    master_cpu: np.ndarray  # (K,)
    ap_to_cpu: np.ndarray  # (L,)
    scheme: str
    network_centric: np.ndarray | None = None  # HybridUA branch per UE
    top_cpus: list[np.ndarray] | None = None  # HybridUA candidate CPUs per UE
    ue_time_s: np.ndarray = field(default_factory=lambda: np.zeros(0))  # per-UE decision time

    @property
    def K(self) -> int:
        return self.D.shape[0]

    def serving_aps(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.D[k])

    def serving_cpus(self, k: int) -> np.ndarray:
        return np.unique(self.ap_to_cpu[self.D[k]])

    @property
    def aps_per_ue(self) -> np.ndarray:
        return self.D.sum(axis=1)

    @property
    def ues_per_ap(self) -> np.ndarray:
        return self.D.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "ues": [
                {
                    "aps": self.serving_aps(k).tolist(),
                    "cpus": self.serving_cpus(k).tolist(),
                    "master_cpu": int(self.master_cpu[k]),
                }
                for k in range(self.K)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def cluster_gain(beta_row, topology: Topology) -> np.ndarray:
    """Summed linear gain from one UE to each CPU's AP cluster, shape (U,)."""
    return np.bincount(topology.ap_to_cpu, weights=np.asarray(beta_row, dtype=float), minlength=topology.U)


def zscores(beta_ku) -> tuple[np.ndarray, bool]:
    """Population z-scores; all zeros and ``degenerate=True`` when the spread is 0."""
    beta_ku = np.asarray(beta_ku, dtype=float)
    mu = beta_ku.mean()
    sigma = np.sqrt(((beta_ku - mu) ** 2).mean())
    if not sigma > _REL_TOL * abs(mu):
        return np.zeros_like(beta_ku), True
    return (beta_ku - mu) / sigma, False


def _rank_desc(values: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """``ids`` ordered by descending value, ties by ascending id."""
    return ids[np.lexsort((ids, -values))]


def select_aps_by_delta(candidate_aps, beta_row, delta: float) -> np.ndarray:
    """Fewest strongest candidates whose gains reach ``delta`` percent of the candidate total."""
    candidate_aps = np.asarray(candidate_aps, dtype=int)
    if candidate_aps.size == 0:
        raise ValueError("no candidate APs")
    gains = np.asarray(beta_row, dtype=float)[candidate_aps]
    order = np.lexsort((candidate_aps, -gains))
    cum = np.cumsum(gains[order])
    target = delta / 100.0 * cum[-1] * (1 - _REL_TOL)
    n = int(np.searchsorted(cum, target, side="left")) + 1
    return np.sort(candidate_aps[order[: min(n, len(order))]])


def top_cpus(beta_ku: np.ndarray, count: int) -> np.ndarray:
    return _rank_desc(beta_ku, np.arange(len(beta_ku)))[:count]


def _union_aps(topology: Topology, cpus) -> np.ndarray:
    return np.concatenate([topology.cpu_ap_sets[u] for u in cpus])


@dataclass(frozen=True)
class HybridDecision:
    aps: np.ndarray
    top_cpus: np.ndarray
    network_centric: bool
    degenerate: bool


def associate_hybrid(beta_row, topology: Topology, epsilon: float, upsilon: int, delta: float) -> HybridDecision:
    """One online HybridUA decision from a UE's own gains and the static clustering."""
    beta_ku = cluster_gain(beta_row, topology)
    z, degenerate = zscores(beta_ku)
    best = top_cpus(beta_ku, 1)
    above = np.flatnonzero(z >= epsilon)
    network_centric = (not degenerate) and above.size == 1 and above[0] == best[0]
    if degenerate:
        log.debug("zero spread across cluster gains, using the user-centric branch")
    chosen = best if network_centric else top_cpus(beta_ku, upsilon)
    aps = select_aps_by_delta(_union_aps(topology, chosen), beta_row, delta)
    return HybridDecision(aps, chosen, bool(network_centric), degenerate)


def associate_scf2(beta_row, topology: Topology, n_cpus: int = 2) -> np.ndarray:
    chosen = top_cpus(cluster_gain(beta_row, topology), n_cpus)
    return np.sort(_union_aps(topology, chosen))


def associate_llsfb(beta_row, topology: Topology, delta: float) -> np.ndarray:
    best = top_cpus(cluster_gain(beta_row, topology), 1)
    return select_aps_by_delta(topology.cpu_ap_sets[best[0]], beta_row, delta)


def _centroid_order(ue_position, topology: Topology):
    d = np.hypot(*(topology.cpu_centroids - np.asarray(ue_position, dtype=float)).T)
    order = np.lexsort((np.arange(len(d)), d))
    return order, d[order]


def associate_nearest(ue_position, topology: Topology) -> np.ndarray:
    order, _ = _centroid_order(ue_position, topology)
    return topology.cpu_ap_sets[order[0]].copy()


def is_border_ue(ue_position, topology: Topology, border_m: float = 100.0) -> bool:
    """Half the gap between the two nearest centroid distances is under ``border_m``."""
    if topology.U < 2:
        return False
    _, d = _centroid_order(ue_position, topology)
    return (d[1] - d[0]) / 2 < border_m


def associate_border(ue_position, beta_row, topology: Topology, border_m: float = 100.0,
                     delta: float = 95.0) -> np.ndarray:
    """Interior UEs: delta-selection in the nearest cluster. Edge UEs: delta-selection
    inside each of the two nearest clusters, so they are always multi-CPU."""
    order, _ = _centroid_order(ue_position, topology)
    clusters = order[:2] if is_border_ue(ue_position, topology, border_m) else order[:1]
    picks = [select_aps_by_delta(topology.cpu_ap_sets[u], beta_row, delta) for u in clusters]
    return np.sort(np.concatenate(picks))


def associate_scf1(beta, pilots: PilotAssignment) -> np.ndarray:
    """Master AP plus, per AP and pilot, the strongest UE on that pilot.

    An AP that is already the master AP of some UE on a pilot keeps that UE
    and takes no other UE on the same pilot.
    """
    beta = np.asarray(beta, dtype=float)
    K, L = beta.shape
    D = np.zeros((K, L), dtype=bool)
    masters = np.argmax(beta, axis=1)
    D[np.arange(K), masters] = True
    aps = np.arange(L)
    for ues in pilots.copilot_sets:
        if ues.size == 0:
            continue
        winners = ues[np.argmax(beta[ues], axis=0)]
        free = ~np.isin(aps, masters[ues])
        D[winners[free], aps[free]] = True
    return D


def trim_cross_cpu(D, beta, ap_to_cpu, delta: float) -> np.ndarray:
    """Drop non-master-CPU APs of UEs whose cross-CPU gain share is below 100 - delta percent."""
    D = np.array(D, dtype=bool)
    beta = np.asarray(beta, dtype=float)
    limit = (100.0 - delta) / 100.0
    for k in range(D.shape[0]):
        aps = np.flatnonzero(D[k])
        cpus = ap_to_cpu[aps]
        if np.unique(cpus).size < 2:
            continue
        m = master_cpu_of(aps, ap_to_cpu, beta[k])
        foreign = aps[cpus != m]
        share = beta[k, foreign].sum() / beta[k, aps].sum()
        if share < limit:
            D[k, foreign] = False
    return D


def associate_scf1lim(D_scf1, topology: Topology, beta, delta: float) -> np.ndarray:
    return trim_cross_cpu(D_scf1, beta, topology.ap_to_cpu, delta)


def build_association(D, topology: Topology, beta, scheme: str, **extra) -> Association:
    D = np.asarray(D, dtype=bool)
    if not D.any(axis=1).all():
        raise ValueError(f"{scheme}: some UE has no serving AP")
    beta = np.asarray(beta, dtype=float)
    master = np.array([master_cpu_of(np.flatnonzero(D[k]), topology.ap_to_cpu, beta[k]) for k in range(len(D))],
                      dtype=int)
    return Association(D=D, master_cpu=master, ap_to_cpu=topology.ap_to_cpu, scheme=scheme, **extra)


def associate(scheme: str, topology: Topology, beta, pilots: PilotAssignment | None,
              config: ScenarioConfig) -> Association:
    """Run one scheme over all UEs of a setup."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    beta = np.asarray(beta, dtype=float)
    K, L = beta.shape
    if scheme in BATCH:
        if pilots is None:
            raise ValueError(f"{scheme} needs a pilot assignment")
        start = time.perf_counter()
        D = associate_scf1(beta, pilots)
        if scheme == "SCF1lim":
            D = associate_scf1lim(D, topology, beta, config.delta)
        elapsed = time.perf_counter() - start
        return build_association(D, topology, beta, scheme, ue_time_s=np.full(K, elapsed / K))

    def decide(k):
        if scheme == "HybridUA":
            return associate_hybrid(beta[k], topology, config.epsilon, config.upsilon, config.delta)
        if scheme == "SCF2":
            return associate_scf2(beta[k], topology, config.scf2_cpus)
        if scheme == "Border":
            return associate_border(topology.ue_positions[k], beta[k], topology, config.border_m, config.delta)
        if scheme == "LLSFB":
            return associate_llsfb(beta[k], topology, config.delta)
        return associate_nearest(topology.ue_positions[k], topology)

    for k in range(WARMUP_DECISIONS):
        decide(k % K)
    D = np.zeros((K, L), dtype=bool)
    times = np.empty(K)
    branch = np.zeros(K, dtype=bool) if scheme == "HybridUA" else None
    tops = [] if scheme == "HybridUA" else None
    for k in range(K):
        start = time.perf_counter()
        dec = decide(k)
        times[k] = time.perf_counter() - start
        if scheme == "HybridUA":
            D[k, dec.aps] = True
            branch[k] = dec.network_centric
            tops.append(dec.top_cpus)
        else:
            D[k, dec] = True
    return build_association(D, topology, beta, scheme, network_centric=branch, top_cpus=tops, ue_time_s=times)
