"""Uplink training, MMSE estimation, P-MMSE precoding, DL power and SINR.

Shapes: channels and estimates are ``(T, K, L, N)`` (trial, UE, AP,
antenna); a precoder for UE ``k`` is stored only on its serving APs as
``(aps, W)`` with ``W`` of shape ``(T, len(aps) * N)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import streams
from .channel import LsfState
from .pilots import PilotAssignment

log = logging.getLogger(__name__)

MIN_TRIALS = 10
COND_WARN = 1e12


def hpd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for Hermitian positive-definite ``A``, batched over leading axes.

    Small systems go through a vectorized Cholesky with forward/back
    substitution; large ones through LAPACK per batch element.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    vec = B.ndim == A.ndim - 1
    if vec:
        B = B[..., None]
    if A.ndim == 2:
        X = sla.cho_solve(sla.cho_factor(A, lower=True, check_finite=False), B, check_finite=False)
        return X[..., 0] if vec else X
    n = A.shape[-1]
    batch = A.shape[:-2]
    if n > 12:
        Af = A.reshape(-1, n, n)
        Bf = np.broadcast_to(B, batch + B.shape[-2:]).reshape(-1, n, B.shape[-1])
        X = np.empty(Bf.shape, dtype=np.result_type(Af, Bf))
        for i in range(len(Af)):
            X[i] = sla.cho_solve(sla.cho_factor(Af[i], lower=True, check_finite=False), Bf[i], check_finite=False)
        X = X.reshape(batch + B.shape[-2:])
    else:
        Lc = np.linalg.cholesky(A)
        X = np.array(np.broadcast_to(B, batch + B.shape[-2:]), dtype=np.result_type(A, B))
        for r in range(n):
            X[..., r, :] = (X[..., r, :] - np.einsum("...j,...jc->...c", Lc[..., r, :r], X[..., :r, :])) / Lc[
                ..., r, r, None]
        Lh = Lc.conj().swapaxes(-1, -2)
        for r in range(n - 1, -1, -1):
            X[..., r, :] = (X[..., r, :] - np.einsum("...j,...jc->...c", Lh[..., r, r + 1:],
                                                     X[..., r + 1:, :])) / Lh[..., r, r, None]
    return X[..., 0] if vec else X


def _powers(p, K: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.full(K, float(p)) if p.ndim == 0 else p


# ---------------------------------------------------------------------------
# uplink training


def received_pilot(h: np.ndarray, pilots: PilotAssignment, ul_power, noise_var: float, noise=None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Received training signal per (trial, pilot, AP), shape (T, tau_p, L, N).

    ``noise`` may be given explicitly (same shape as the output); otherwise it
    is drawn from ``rng``.
    """
    T, K, L, N = h.shape
    tau_p = pilots.tau_p
    amp = np.sqrt(tau_p * _powers(ul_power, K))
    y = np.zeros((T, tau_p, L, N), dtype=complex)
    for t, ues in enumerate(pilots.copilot_sets):
        if ues.size:
            y[:, t] = np.einsum("i,tiln->tln", amp[ues], h[:, ues])
    if noise is None:
        if rng is None:
            raise ValueError("need noise or rng")
        noise = streams.complex_normal(rng, y.shape)
        noise *= np.sqrt(noise_var)
    return y + noise


def pilot_noise(setup_seed: int, setup: int, first_trial: int, count: int, tau_p: int, L: int, N: int,
                noise_var: float) -> np.ndarray:
    out = np.empty((count, tau_p, L, N), dtype=complex)
    for t in range(count):
        rng = streams.substream(setup_seed, streams.PILOT_NOISE, setup, first_trial + t)
        out[t] = np.sqrt(noise_var) * streams.complex_normal(rng, (tau_p, L, N))
    return out


@dataclass(frozen=True, eq=False)
class Estimator:
    psi: np.ndarray  # (tau_p, L, N, N) training-signal correlation
    gain: np.ndarray  # (K, L, N, N) sqrt(tau_p p_k) R_kl Psi^-1
    err_corr: np.ndarray  # (K, L, N, N) R - tau_p p_k R Psi^-1 R
    pilot_index: np.ndarray  # (K,)

    def estimate(self, y: np.ndarray) -> np.ndarray:
        """MMSE channel estimates (T, K, L, N) from training signals (T, tau_p, L, N)."""
        return np.einsum("klij,tklj->tkli", self.gain, y[:, self.pilot_index])


def mmse_estimator(lsf: LsfState, pilots: PilotAssignment, ul_power, noise_var: float) -> Estimator:
    K, L, N = lsf.K, lsf.L, lsf.N
    p = _powers(ul_power, K)
    tau_p = pilots.tau_p
    R = lsf.corr
    psi = np.zeros((tau_p, L, N, N), dtype=complex)
    for t, ues in enumerate(pilots.copilot_sets):
        if ues.size:
            psi[t] = np.einsum("i,ilmn->lmn", tau_p * p[ues], R[ues])
    psi += noise_var * np.eye(N)
    eig = np.linalg.eigvalsh(psi)
    cond = eig[..., -1] / eig[..., 0]
    if np.any(cond > COND_WARN):
        log.warning("ill-conditioned training correlation (max condition number %.3e)", float(cond.max()))
    psi_k = psi[pilots.index]  # (K, L, N, N)
    # Psi^-1 R, then R Psi^-1 is its conjugate transpose
    psi_inv_r = hpd_solve(psi_k, R)
    r_psi_inv = psi_inv_r.conj().swapaxes(-1, -2)
    gain = np.sqrt(tau_p * p)[:, None, None, None] * r_psi_inv
    err = R - (tau_p * p)[:, None, None, None] * (r_psi_inv @ R)
    err = 0.5 * (err + err.conj().swapaxes(-1, -2))
    return Estimator(psi, gain, err, pilots.index)


def mmse_estimate(y: np.ndarray, estimator: Estimator) -> np.ndarray:
    return estimator.estimate(y)


# ---------------------------------------------------------------------------
# precoding


def partial_set(D: np.ndarray, k: int) -> np.ndarray:
    """UEs sharing at least one serving AP with UE ``k`` (``k`` included)."""
    return np.flatnonzero(D[:, D[k]].any(axis=1))


class TrialChunk:
    """One chunk of trials held AP-major, ``(L, N, T, K)``, for fast per-UE gathers."""

    def __init__(self, h: np.ndarray, hhat: np.ndarray):
        self.T, self.K, self.L, self.N = h.shape
        self.h_conj = np.ascontiguousarray(h.conj().transpose(2, 3, 0, 1))
        self.hhat = np.ascontiguousarray(hhat.transpose(2, 3, 0, 1))


def _pmmse(chunk: TrialChunk, err_corr, D, k: int, p: np.ndarray, noise_var: float):
    T, N = chunk.T, chunk.N
    aps = np.flatnonzero(D[k])
    S = partial_set(D, k)
    d = aps.size * N
    local = chunk.hhat[aps].reshape(d, T, chunk.K)
    G = np.ascontiguousarray(local[:, :, S].transpose(1, 0, 2)) * np.sqrt(p[S])  # (T, d, |S|)
    Z = np.zeros((aps.size, N, N), dtype=complex)  # block-diagonal part, one block per AP
    if err_corr is not None:
        Z += np.einsum("i,ilmn->lmn", p[S], err_corr[S][:, aps])
    Z[:, np.arange(N), np.arange(N)] += noise_var
    rhs = p[k] * local[:, :, k].T  # (T, d)
    if d <= S.size:
        M = G @ G.conj().swapaxes(-1, -2)
        for j in range(aps.size):
            M[:, j * N:(j + 1) * N, j * N:(j + 1) * N] += Z[j]
        W = hpd_solve(M, rhs)
    else:
        # Woodbury: (G G^H + Z)^-1 b = Z^-1 b - Z^-1 G (I + G^H Z^-1 G)^-1 G^H Z^-1 b
        Zt = np.broadcast_to(Z, (T,) + Z.shape)

        def apply_zinv(X):
            return hpd_solve(Zt, X.reshape(T, aps.size, N, -1)).reshape(X.shape)

        ZG = apply_zinv(G)
        Zb = apply_zinv(rhs[..., None])
        Gh = G.conj().swapaxes(-1, -2)
        inner = Gh @ ZG
        inner[:, np.arange(S.size), np.arange(S.size)] += 1.0
        W = (Zb - ZG @ hpd_solve(inner, Gh @ Zb))[..., 0]
    zero = ~np.any(rhs != 0, axis=1)
    if zero.any():
        W[zero] = 1.0 / np.sqrt(d)
    return aps, W, int(zero.sum())


def pmmse_direction(hhat: np.ndarray, err_corr: np.ndarray | None, D: np.ndarray, k: int, ul_power,
                    noise_var: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Unnormalized P-MMSE precoder of UE ``k`` on its serving APs.

    Returns ``(aps, W, n_zero)`` where ``W`` has shape (T, len(aps) * N) and
    ``n_zero`` counts trials whose own estimate vanished (uniform fallback).
    """
    chunk = TrialChunk(hhat, hhat)
    return _pmmse(chunk, err_corr, D, k, _powers(ul_power, chunk.K), noise_var)


def normalize_precoder(W: np.ndarray) -> np.ndarray:
    energy = np.mean(np.sum(np.abs(W) ** 2, axis=1))
    if energy <= 0:
        return np.full_like(W, 1.0 / np.sqrt(W.shape[1]))
    return W / np.sqrt(energy)


def pmmse_precoders(hhat, err_corr, D, ul_power, noise_var) -> list[tuple[np.ndarray, np.ndarray]]:
    """Batch-normalized P-MMSE precoders for every UE, ``E||w_k||^2 = 1`` over the batch."""
    out = []
    for k in range(D.shape[0]):
        aps, W, n_zero = pmmse_direction(hhat, err_corr, D, k, ul_power, noise_var)
        if n_zero:
            log.warning("UE %d: zero channel estimate in %d trial(s), uniform precoder used", k, n_zero)
        out.append((aps, normalize_precoder(W)))
    return out


@dataclass(frozen=True, eq=False)
class PrecoderStats:
    """Monte-Carlo expectations under batch-normalized precoders."""

    signal: np.ndarray  # (K,) E{h_k^H w_k}
    cross: np.ndarray  # (K, K) [k, i] -> E{|h_k^H w_i|^2}
    ap_energy: np.ndarray  # (K, L) E{||w_il||^2}
    signal_stderr: np.ndarray  # (K,) standard error of the signal estimate
    trials: int
    zero_estimates: int = 0


class DownlinkAccumulator:
    """Streams trial chunks and builds :class:`PrecoderStats` for one association."""

    def __init__(self, D: np.ndarray, N: int):
        self.D = np.asarray(D, dtype=bool)
        K, L = self.D.shape
        self.N = N
        self._signal = np.zeros(K, dtype=complex)
        self._cross = np.zeros((K, K))
        self._energy = np.zeros(K)
        self._ap_energy = np.zeros((K, L))
        self.trials = 0
        self.zero_estimates = 0

    def add_precoder(self, chunk: TrialChunk, i: int, aps: np.ndarray, W: np.ndarray) -> None:
        T = chunk.T
        sub = chunk.h_conj[aps].reshape(-1, T, chunk.K).transpose(1, 0, 2)  # (T, d, K)
        g = (W[:, None, :] @ sub)[:, 0, :]  # g[t, k] = h_k^H w_i
        self._signal[i] += g[:, i].sum()
        self._cross[:, i] += (np.abs(g) ** 2).sum(axis=0)
        e = np.abs(W) ** 2
        self._energy[i] += e.sum()
        self._ap_energy[i, aps] += e.reshape(T, aps.size, -1).sum(axis=(0, 2))

    def add(self, chunk: TrialChunk, err_corr, ul_power, noise_var: float) -> None:
        p = _powers(ul_power, chunk.K)
        for i in range(self.D.shape[0]):
            aps, W, n_zero = _pmmse(chunk, err_corr, self.D, i, p, noise_var)
            self.zero_estimates += n_zero
            self.add_precoder(chunk, i, aps, W)
        self.trials += chunk.T

    def finalize(self) -> PrecoderStats:
        T = self.trials
        if T == 0:
            raise ValueError("no trials accumulated")
        energy = self._energy / T
        scale = np.where(energy > 0, energy, 1.0)
        signal = self._signal / T / np.sqrt(scale)
        cross = self._cross / T / scale[None, :]
        ap_energy = self._ap_energy / T / scale[:, None]
        own = np.diag(cross)
        stderr = np.sqrt(np.maximum(own - np.abs(signal) ** 2, 0.0) / T)
        if self.zero_estimates:
            log.warning("%d zero channel estimates replaced by uniform precoders", self.zero_estimates)
        return PrecoderStats(signal, cross, ap_energy, stderr, T, self.zero_estimates)


def precoder_statistics(h: np.ndarray, precoders) -> PrecoderStats:
    """Expectations for explicit precoders ``[(aps, W), ...]`` over the trials of ``h``.

    Precoders are (re)normalized over the batch, so unnormalized input is fine.
    """
    T, K, L, N = h.shape
    acc = DownlinkAccumulator(np.zeros((K, L), dtype=bool), N)
    chunk = TrialChunk(h, h)
    for i, (aps, W) in enumerate(precoders):
        acc.D[i, aps] = True
        acc.add_precoder(chunk, i, np.asarray(aps), W)
    acc.trials = T
    return acc.finalize()


# ---------------------------------------------------------------------------
# power allocation and SINR


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    rho: np.ndarray  # (K,) mW
    ap_power: np.ndarray  # (L,) expected radiated mW per AP
    exponent: float
    method: str
    binding_ap: int

    def check(self, budget: float, rel_tol: float = 1e-9) -> bool:
        """Every AP within budget and, for the global rule, the binding AP exactly on it."""
        feasible = bool(np.all(self.ap_power <= budget * (1 + rel_tol)))
        if self.method != "global":
            return feasible
        return feasible and abs(self.ap_power[self.binding_ap] - budget) <= rel_tol * budget


def fractional_power_allocation(D, beta_lin, ap_energy, P_AP: float, exponent: float = -0.5,
                                method: str = "global", kappa: float = 0.5) -> PowerAllocation:
    """Fractional DL power from summed serving gains.

    ``global``: ``rho_k = c * (sum_l beta_kl)^exponent`` with ``c`` the largest
    scale keeping every AP within ``P_AP``. ``scalable``: the per-UE
    normalized variant with precoder-energy weighting ``kappa``.
    """
    D = np.asarray(D, dtype=bool)
    beta_lin = np.asarray(beta_lin, dtype=float)
    ap_energy = np.where(D, ap_energy, 0.0)
    served_gain = np.where(D, beta_lin, 0.0).sum(axis=1)
    weight = served_gain**exponent
    if method == "global":
        usage = weight @ ap_energy
        binding = int(np.argmax(usage))
        c = P_AP / usage[binding] if usage[binding] > 0 else 0.0
        rho = c * weight
    elif method == "scalable":
        omega = ap_energy.max(axis=1)
        omega = np.where(omega > 0, omega, 1.0)
        per_ap = (weight * omega ** (1 - kappa)) @ D  # (L,)
        denom = np.where(D, per_ap[None, :], 0.0).max(axis=1)
        rho = P_AP * weight * omega ** (-kappa) / denom
        binding = -1
    else:
        raise ValueError(f"unknown power allocation {method!r}")
    ap_power = rho @ ap_energy
    if method == "scalable":
        binding = int(np.argmax(ap_power))
    return PowerAllocation(rho, ap_power, exponent, method, binding)


@dataclass(frozen=True, eq=False)
class SeResult:
    sinr: np.ndarray
    se: np.ndarray
    signal_stderr: np.ndarray
    trials: int
    clamped: int = 0


def dl_sinr(stats: PrecoderStats, rho, noise_dl: float, tau_d: int, tau_c: int) -> SeResult:
    """Hardening-bound SINR and SE from precoder statistics and DL powers."""
    if stats.trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {stats.trials}")
    rho = np.asarray(rho, dtype=float)
    desired = rho * np.abs(stats.signal) ** 2
    interference = stats.cross @ rho - desired
    clamped = interference < 0
    if clamped.any():
        log.warning("clamped %d negative interference term(s) to 0", int(clamped.sum()))
        interference = np.where(clamped, 0.0, interference)
    sinr = desired / (interference + noise_dl)
    se = tau_d / tau_c * np.log2(1 + sinr)
    return SeResult(sinr, se, stats.signal_stderr, stats.trials, int(clamped.sum()))


def dl_sinr_montecarlo(h: np.ndarray, precoders, rho, noise_dl: float, tau_d: int, tau_c: int) -> SeResult:
    return dl_sinr(precoder_statistics(h, precoders), rho, noise_dl, tau_d, tau_c)


def se_from_sinr(sinr, tau_d: int, tau_c: int):
    return tau_d / tau_c * np.log2(1 + np.asarray(sinr, dtype=float))
