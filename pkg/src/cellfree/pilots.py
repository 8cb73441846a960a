"""Online pilot assignment minimizing contamination at each UE's master AP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PilotAssignment:
    index: np.ndarray  # (K,) pilot per UE, 0-based
    tau_p: int

    @property
    def copilot_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.index == t) for t in range(self.tau_p)]

    def copilots(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.index == self.index[k])


def assign_pilots(beta_lin, tau_p: int) -> PilotAssignment:
    """UEs arrive in index order; each takes the pilot least used at its strongest AP.

    Contamination of pilot t is the summed gain, at the newcomer's master AP,
    of the UEs already holding t. Unused pilots have zero contamination, and
    ties go to the lowest pilot index.
    """
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    beta_lin = np.asarray(beta_lin, dtype=float)
    K = beta_lin.shape[0]
    index = np.empty(K, dtype=int)
    masters = np.argmax(beta_lin, axis=1)
    for k in range(K):
        contamination = np.bincount(index[:k], weights=beta_lin[:k, masters[k]], minlength=tau_p)
        index[k] = int(np.argmin(contamination))
    return PilotAssignment(index, tau_p)
