"""Fairness, distribution and load metrics for one scheme in one setup."""

from __future__ import annotations

import logging

import numpy as np

from .association import Association
from .fronthaul import FronthaulReport

log = logging.getLogger(__name__)


def jain_fairness(se) -> float:
    se = np.asarray(se, dtype=float)
    if se.size == 0:
        raise ValueError("empty SE vector")
    if np.any(se < 0):
        raise ValueError("SE values must be non-negative")
    sq = np.sum(se**2)
    if sq == 0:
        log.info("all-zero SE vector, Jain index defined as 1")
        return 1.0
    return float(se.sum() ** 2 / (se.size * sq))


def outage_quantile(se, q: float = 0.05) -> float:
    """Empirical ``q``-quantile with linear interpolation between order statistics."""
    return float(np.quantile(np.asarray(se, dtype=float), q, method="linear"))


def triple(x) -> dict:
    x = np.asarray(x, dtype=float)
    return {"mean": float(x.mean()), "min": float(x.min()), "max": float(x.max())}


def aggregate(association: Association, fronthaul: FronthaulReport, se=None) -> dict:
    """Per-setup metric record for one scheme; SE fields are omitted when ``se`` is None."""
    out = {
        "intercpu_load": int(fronthaul.intercpu_load),
        "aps_per_ue": triple(association.aps_per_ue),
        "ues_per_ap": triple(association.ues_per_ap),
        "ues_per_cpu": triple([len(s) for s in fronthaul.ue_sets]),
        "master_ues_per_cpu": triple([len(s) for s in fronthaul.master_sets]),
        "multi_cpu_ues": int(sum(len(association.serving_cpus(k)) > 1 for k in range(association.K))),
        "assoc_time_per_ue_s": float(np.mean(association.ue_time_s)) if association.ue_time_s.size else 0.0,
    }
    if association.network_centric is not None:
        out["network_centric_ues"] = int(association.network_centric.sum())
    if se is not None:
        se = np.asarray(se, dtype=float)
        out.update(
            se_mean=float(se.mean()),
            se_median=float(np.median(se)),
            se_outage_5=outage_quantile(se, 0.05),
            jain=jain_fairness(se),
        )
    return out


def summarize(per_setup: list[dict], se_samples=None) -> dict:
    """Average per-setup records; count triples keep the mean of means and global extremes."""
    if not per_setup:
        raise ValueError("no setups to summarize")
    out = {"n_setups": len(per_setup)}
    for key, value in per_setup[0].items():
        vals = [rec[key] for rec in per_setup]
        if isinstance(value, dict):
            out[key] = {
                "mean": float(np.mean([v["mean"] for v in vals])),
                "min": float(min(v["min"] for v in vals)),
                "max": float(max(v["max"] for v in vals)),
            }
        else:
            out[key] = float(np.mean(vals))
    if se_samples is not None:
        se = np.sort(np.asarray(se_samples, dtype=float))
        out["se_mean"] = float(se.mean())
        out["se_median"] = float(np.median(se))
        out["se_outage_5"] = outage_quantile(se, 0.05)
        out["se_cdf"] = se.tolist()
    return out
