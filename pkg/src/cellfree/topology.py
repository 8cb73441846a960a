"""Random network layouts and geographic AP-to-CPU clustering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import streams
from .config import ConfigError, ScenarioConfig

MAX_KMEANS_ITER = 100


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray  # (n,) cluster per point
    centroids: np.ndarray  # (k, 2)
    objective_history: tuple[float, ...]
    n_iter: int

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # all remaining points coincide with chosen centers
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(points, points[[idx]])[:, 0])
    return points[chosen].astype(float)


def _fill_empty(points, labels, centroids, k):
    """Move each empty centroid onto the point farthest from its own centroid."""
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        cost = ((points - centroids[labels]) ** 2).sum(axis=1)
        cost[counts[labels] <= 1] = -1.0  # never strip a cluster down to nothing
        far = int(np.argmax(cost))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
        centroids[c] = points[far]
    return labels, centroids


def kmeans_ap_clustering(points, U: int, seed: int = 0) -> KMeansResult:
    """k-means++ seeded Lloyd clustering of 2-D points into ``U`` nonempty clusters."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    n = len(points)
    if U < 1 or U > n:
        raise ConfigError(f"cannot form {U} clusters from {n} points")
    rng = streams.substream(seed, streams.KMEANS)
    centroids = _kmeans_pp_init(points, U, rng)
    labels = np.argmin(_sq_dists(points, centroids), axis=1)
    labels, centroids = _fill_empty(points, labels, centroids, U)
    history = [float(((points - centroids[labels]) ** 2).sum())]
    n_iter = 0
    for n_iter in range(1, MAX_KMEANS_ITER + 1):
        for c in range(U):
            centroids[c] = points[labels == c].mean(axis=0)
        history.append(float(((points - centroids[labels]) ** 2).sum()))
        new = np.argmin(_sq_dists(points, centroids), axis=1)
        new, centroids = _fill_empty(points, new, centroids, U)
        changed = not np.array_equal(new, labels)
        labels = new
        if not changed:
            break
    for c in range(U):
        centroids[c] = points[labels == c].mean(axis=0)
    history.append(float(((points - centroids[labels]) ** 2).sum()))
    return KMeansResult(labels=labels, centroids=centroids, objective_history=tuple(history), n_iter=n_iter)


@dataclass(frozen=True, eq=False)
class Topology:
    ap_positions: np.ndarray  # (L, 2) m
    ue_positions: np.ndarray  # (K, 2) m
    ap_to_cpu: np.ndarray  # (L,) int
    cpu_centroids: np.ndarray  # (U, 2) m

    @property
    def L(self) -> int:
        return len(self.ap_positions)

    @property
    def K(self) -> int:
        return len(self.ue_positions)

    @property
    def U(self) -> int:
        return len(self.cpu_centroids)

    @cached_property
    def cpu_ap_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.ap_to_cpu == u) for u in range(self.U)]

    def with_ues(self, ue_positions) -> "Topology":
        return Topology(self.ap_positions, np.asarray(ue_positions, dtype=float), self.ap_to_cpu, self.cpu_centroids)

    def to_json(self) -> str:
        return json.dumps(
            {
                "ap_positions": self.ap_positions.tolist(),
                "ue_positions": self.ue_positions.tolist(),
                "ap_to_cpu": self.ap_to_cpu.tolist(),
                "cpu_centroids": self.cpu_centroids.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        d = json.loads(text)
        return cls(
            ap_positions=np.asarray(d["ap_positions"], dtype=float).reshape(-1, 2),
            ue_positions=np.asarray(d["ue_positions"], dtype=float).reshape(-1, 2),
            ap_to_cpu=np.asarray(d["ap_to_cpu"], dtype=int),
            cpu_centroids=np.asarray(d["cpu_centroids"], dtype=float).reshape(-1, 2),
        )


def topology_from_positions(ap_positions, ue_positions, U: int, seed: int = 0) -> Topology:
    ap_positions = np.asarray(ap_positions, dtype=float).reshape(-1, 2)
    ue_positions = np.asarray(ue_positions, dtype=float).reshape(-1, 2)
    km = kmeans_ap_clustering(ap_positions, U, seed)
    return Topology(ap_positions, ue_positions, km.labels, km.centroids)


def generate_topology(config: ScenarioConfig, seed: int, setup: int = 0) -> Topology:
    """Uniform AP/UE drop over the square plus k-means AP-to-CPU clustering."""
    if config.U > config.L:
        raise ConfigError(f"U = {config.U} exceeds L = {config.L}")
    rng = streams.substream(seed, streams.TOPOLOGY, setup)
    side = config.area_side
    aps = rng.uniform(0.0, side, size=(config.L, 2))
    ues = rng.uniform(0.0, side, size=(config.K, 2))
    km = kmeans_ap_clustering(aps, config.U, seed=_mix(seed, setup))
    return Topology(aps, ues, km.labels, km.centroids)


def _mix(seed: int, setup: int) -> int:
    return int(np.random.SeedSequence([seed, setup]).generate_state(1)[0])
