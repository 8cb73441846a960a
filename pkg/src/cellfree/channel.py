"""Large-scale fading, spatial correlation and correlated Rayleigh channel draws."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import streams
from .config import ScenarioConfig
from .topology import Topology

log = logging.getLogger(__name__)

UNCORRELATED = "uncorrelated"
LOCAL_SCATTERING = "local_scattering"


def compute_lsfc(d_km, shadow_db=0.0, pathloss_db_1km=-148.1, exponent=3.76, min_distance_km=1e-3):
    """Log-distance path loss plus shadowing, returns ``(beta_db, beta_lin)``.

    Distances below ``min_distance_km`` are clamped to it.
    """
    d_km = np.asarray(d_km, dtype=float)
    clamped = d_km < min_distance_km
    if np.any(clamped):
        log.debug("clamped %d distance(s) to %.3g km", int(np.count_nonzero(clamped)), min_distance_km)
        d_km = np.where(clamped, min_distance_km, d_km)
    beta_db = pathloss_db_1km - 10.0 * exponent * np.log10(d_km) + np.asarray(shadow_db, dtype=float)
    beta_lin = 10.0 ** (beta_db / 10.0)
    if beta_db.ndim == 0:
        return float(beta_db), float(beta_lin)
    return beta_db, beta_lin


def build_correlation(beta_lin: float, N: int, model: str = UNCORRELATED, asd_deg: float = 15.0,
                      angle_rad: float = 0.0, spacing: float = 0.5) -> np.ndarray:
    """N x N spatial correlation matrix with ``trace(R) / N == beta_lin``.

    ``local_scattering`` uses the Gaussian angular-spread approximation for a
    uniform linear array with ``spacing`` wavelengths between antennas.
    """
    if model == UNCORRELATED or N == 1:
        return beta_lin * np.eye(N, dtype=complex)
    if model != LOCAL_SCATTERING:
        raise ValueError(f"unknown correlation model {model!r}")
    sigma = np.deg2rad(asd_deg)
    lag = np.arange(N)[:, None] - np.arange(N)[None, :]
    phase = 2 * np.pi * spacing * lag
    R = np.exp(1j * phase * np.sin(angle_rad)) * np.exp(-0.5 * (sigma * phase * np.cos(angle_rad)) ** 2)
    R = 0.5 * (R + R.conj().T)
    return beta_lin * R * (N / np.trace(R).real)


@dataclass(frozen=True, eq=False)
class LsfState:
    beta_db: np.ndarray  # (K, L)
    beta_lin: np.ndarray  # (K, L)
    d_km: np.ndarray  # (K, L)
    corr: np.ndarray  # (K, L, N, N)
    model: str = UNCORRELATED

    @property
    def K(self) -> int:
        return self.beta_lin.shape[0]

    @property
    def L(self) -> int:
        return self.beta_lin.shape[1]

    @property
    def N(self) -> int:
        return self.corr.shape[-1]

    @property
    def is_scaled_identity(self) -> bool:
        return self.model == UNCORRELATED or self.N == 1

    @cached_property
    def corr_sqrt(self) -> np.ndarray:
        """Hermitian square roots of ``corr`` with negative eigenvalues clipped."""
        if self.is_scaled_identity:
            return np.sqrt(self.beta_lin)[..., None, None] * np.eye(self.N)
        w, V = np.linalg.eigh(self.corr)
        if np.any(w < 0):
            worst = float(w.min())
            if worst < -1e-12 * float(np.abs(w).max()):
                log.warning("correlation matrix not PSD (min eigenvalue %.3e), clipping", worst)
            w = np.clip(w, 0.0, None)
        return (V * np.sqrt(w)[..., None, :]) @ V.conj().swapaxes(-1, -2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,l,beta_db\n")
        for k in range(self.K):
            for l in range(self.L):
                buf.write(f"{k},{l},{self.beta_db[k, l]!r}\n")
        return buf.getvalue()


def lsf_from_beta(beta_lin, N: int = 1, d_km=None) -> LsfState:
    """Uncorrelated LSF state straight from a linear gain matrix (fixtures, what-ifs)."""
    beta_lin = np.asarray(beta_lin, dtype=float)
    with np.errstate(divide="ignore"):
        beta_db = 10 * np.log10(beta_lin)
    corr = beta_lin[..., None, None] * np.eye(N)
    if d_km is None:
        d_km = np.full(beta_lin.shape, np.nan)
    return LsfState(beta_db, beta_lin, np.asarray(d_km, dtype=float), corr.astype(complex), UNCORRELATED)


def generate_lsf(topology: Topology, config: ScenarioConfig, seed: int, setup: int = 0) -> LsfState:
    diff = topology.ue_positions[:, None, :] - topology.ap_positions[None, :, :]
    d_m = np.hypot(diff[..., 0], diff[..., 1])
    d_km = np.maximum(d_m, config.min_distance_m) / 1e3
    rng = streams.substream(seed, streams.SHADOWING, setup)
    shadow = config.shadow_std_db * rng.standard_normal((topology.K, topology.L))
    beta_db, beta_lin = compute_lsfc(d_km, shadow, config.pathloss_db_1km, config.pathloss_exponent,
                                     config.min_distance_m / 1e3)
    N = config.N
    if config.correlation == UNCORRELATED or N == 1:
        corr = beta_lin[..., None, None] * np.eye(N, dtype=complex)
    else:
        angles = np.arctan2(-diff[..., 1], -diff[..., 0])  # UE direction as seen from the AP
        corr = np.empty((topology.K, topology.L, N, N), dtype=complex)
        for k in range(topology.K):
            for l in range(topology.L):
                corr[k, l] = build_correlation(beta_lin[k, l], N, config.correlation, config.asd_deg, angles[k, l])
    return LsfState(beta_db, beta_lin, d_km, corr, config.correlation)


def sample_channels(lsf: LsfState, count: int, seed: int, setup: int = 0, first_trial: int = 0) -> np.ndarray:
    """Channel draws ``h[t, k, l, :] ~ CN(0, R_kl)``, shape (count, K, L, N).

    Trial ``t`` always comes from the substream keyed by
    ``(seed, setup, first_trial + t)``, so any slice of trials can be
    regenerated on its own.
    """
    K, L, N = lsf.K, lsf.L, lsf.N
    out = np.empty((count, K, L, N), dtype=complex)
    sqrt_r = lsf.corr_sqrt
    for t in range(count):
        g = streams.complex_normal(streams.substream(seed, streams.CHANNEL, setup, first_trial + t), (K, L, N))
        if lsf.is_scaled_identity:
            out[t] = np.sqrt(lsf.beta_lin)[..., None] * g
        else:
            out[t] = np.einsum("klij,klj->kli", sqrt_r, g)
    return out
