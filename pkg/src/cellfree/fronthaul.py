"""Master-CPU selection and inter-CPU fronthaul load accounting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .association import Association
    from .topology import Topology


def master_cpu_of(serving_aps, ap_to_cpu, beta_row=None) -> int:
    """CPU owning the most serving APs; ties -> larger summed gain, then lower index."""
    serving_aps = np.asarray(serving_aps, dtype=int)
    if serving_aps.size == 0:
        raise ValueError("UE has no serving AP")
    cpus = np.asarray(ap_to_cpu)[serving_aps]
    U = int(cpus.max()) + 1
    counts = np.bincount(cpus, minlength=U)
    best = np.flatnonzero(counts == counts.max())
    if best.size > 1 and beta_row is not None:
        gains = np.bincount(cpus, weights=np.asarray(beta_row)[serving_aps], minlength=U)[best]
        best = best[gains == gains.max()]
    return int(best[0])


@dataclass(frozen=True, eq=False)
class FronthaulReport:
    ue_sets: list[set[int]]  # UEs touching each CPU's APs
    master_sets: list[set[int]]  # UEs mastered by each CPU
    relay_sets: list[set[int]]  # foreign APs relayed to each CPU
    intercpu_load: int  # complex scalars per coherence block
    ap_cpu_load: np.ndarray  # (L,) AP <-> own-CPU scalars per coherence block

    def to_dict(self) -> dict:
        return {
            "intercpu_load_scalars": self.intercpu_load,
            "ues_per_cpu": [len(s) for s in self.ue_sets],
            "master_ues_per_cpu": [len(s) for s in self.master_sets],
            "relayed_aps_per_cpu": [sorted(s) for s in self.relay_sets],
        }


def relay_sets(D: np.ndarray, master_cpu: np.ndarray, ap_to_cpu: np.ndarray, U: int):
    """Per-CPU sets (UEs touched, UEs mastered, foreign APs relayed in)."""
    ue_sets = [set() for _ in range(U)]
    master_sets = [set() for _ in range(U)]
    relayed = [set() for _ in range(U)]
    for k in range(D.shape[0]):
        aps = np.flatnonzero(D[k])
        m = int(master_cpu[k])
        master_sets[m].add(k)
        for u in np.unique(ap_to_cpu[aps]):
            ue_sets[int(u)].add(k)
        relayed[m].update(int(l) for l in aps[ap_to_cpu[aps] != m])
    return ue_sets, master_sets, relayed


def fronthaul_load(relayed: list[set[int]], N: int, tau_c: int) -> int:
    return sum(len(s) for s in relayed) * N * tau_c


def compute_fronthaul(association: "Association", topology: "Topology", N: int, tau_p: int, tau_u: int,
                      tau_d: int) -> FronthaulReport:
    ue_sets, master_sets, relayed = relay_sets(association.D, association.master_cpu, topology.ap_to_cpu,
                                               topology.U)
    tau_c = tau_p + tau_u + tau_d
    return FronthaulReport(
        ue_sets=ue_sets,
        master_sets=master_sets,
        relay_sets=relayed,
        intercpu_load=fronthaul_load(relayed, N, tau_c),
        ap_cpu_load=np.full(topology.L, (tau_p + tau_u + tau_d) * N, dtype=int),
    )
