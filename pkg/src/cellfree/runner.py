"""Scenario orchestration: setups, scheme comparison, sweeps and report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import phy
from .association import associate
from .channel import generate_lsf, sample_channels
from .config import ScenarioConfig, SweepSpec
from .fronthaul import compute_fronthaul
from .metrics import aggregate, summarize
from .pilots import assign_pilots
from .topology import generate_topology

log = logging.getLogger(__name__)

OUT_DIR_ENV = "CELLFREE_OUT"
TIMING_KEYS = ("assoc_time_per_ue_s",)

SUMMARY_COLUMNS = [
    "scheme", "K", "L", "N", "U", "area_km2", "n_setups",
    "se_mean", "se_median", "se_outage_5", "jain", "intercpu_load",
    "aps_per_ue_mean", "aps_per_ue_min", "aps_per_ue_max",
    "ues_per_ap_mean", "ues_per_ap_min", "ues_per_ap_max",
    "ues_per_cpu_mean", "ues_per_cpu_min", "ues_per_cpu_max",
    "master_ues_per_cpu_mean", "master_ues_per_cpu_min", "master_ues_per_cpu_max",
    "multi_cpu_ues",
]


class SimulationError(RuntimeError):
    category = "simulation-error"


@dataclass
class RunReport:
    config: ScenarioConfig
    schemes: dict[str, dict] = field(default_factory=dict)  # scheme -> {"summary", "per_setup"}

    def summary(self, scheme: str) -> dict:
        return self.schemes[scheme]["summary"]

    def per_setup(self, scheme: str, key: str) -> np.ndarray:
        return np.array([rec[key] for rec in self.schemes[scheme]["per_setup"]])

    def to_dict(self, include_timings: bool = False) -> dict:
        def strip(rec):
            return {k: v for k, v in rec.items() if include_timings or k not in TIMING_KEYS}

        return {
            "config": self.config.to_dict(),
            "schemes": {
                s: {"summary": strip(v["summary"]), "per_setup": [strip(r) for r in v["per_setup"]]}
                for s, v in self.schemes.items()
            },
        }

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), indent=1, sort_keys=True)

    def timings(self) -> dict:
        return {s: [r["assoc_time_per_ue_s"] for r in v["per_setup"]] for s, v in self.schemes.items()}

    def summary_rows(self) -> list[dict]:
        c = self.config
        rows = []
        for s, v in self.schemes.items():
            summ = v["summary"]
            row = {"scheme": s, "K": c.K, "L": c.L, "N": c.N, "U": c.U, "area_km2": round(c.area_km2, 9),
                   "n_setups": summ["n_setups"]}
            for col in SUMMARY_COLUMNS[len(row):]:
                base, _, stat = col.rpartition("_")
                if col in summ:
                    row[col] = summ[col]
                elif base in summ and isinstance(summ[base], dict):
                    row[col] = summ[base][stat]
                else:
                    row[col] = ""
            rows.append(row)
        return rows

    def summary_csv(self) -> str:
        return _csv(self.summary_rows(), SUMMARY_COLUMNS)

    def se_cdf_csv(self) -> str:
        buf = io.StringIO()
        buf.write("scheme,se\n")
        for s, v in self.schemes.items():
            for x in v["summary"].get("se_cdf", []):
                buf.write(f"{s},{x!r}\n")
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "summary.csv").write_text(self.summary_csv())
        (out / "se_cdf.csv").write_text(self.se_cdf_csv())
        (out / "timings.json").write_text(json.dumps(self.timings(), indent=1))
        return out


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def simulate_setup(config: ScenarioConfig, setup: int, keep: bool = False) -> dict:
    """All configured schemes on one random drop, sharing channels and estimates.

    Returns ``{scheme: {"record": dict, "se": array | None}}``; with ``keep``
    the association, fronthaul report and power allocation are included too.
    """
    seed = config.seed
    topo = generate_topology(config, seed, setup)
    lsf = generate_lsf(topo, config, seed, setup)
    pilots = assign_pilots(lsf.beta_lin, config.tau_p)
    out = {}
    for scheme in config.schemes:
        assoc = associate(scheme, topo, lsf.beta_lin, pilots, config)
        fh = compute_fronthaul(assoc, topo, config.N, config.tau_p, config.tau_u, config.tau_d)
        out[scheme] = {"association": assoc, "fronthaul": fh, "se": None}
    if config.compute_se:
        noise = config.noise_mw
        p = config.ul_power_mw
        est = phy.mmse_estimator(lsf, pilots, p, noise)
        accs = {s: phy.DownlinkAccumulator(out[s]["association"].D, config.N) for s in config.schemes}
        T = config.n_channel_realizations
        for start in range(0, T, config.trial_chunk):
            n = min(config.trial_chunk, T - start)
            h = sample_channels(lsf, n, seed, setup, start)
            y = phy.received_pilot(h, pilots, p, noise,
                                   noise=phy.pilot_noise(seed, setup, start, n, config.tau_p, lsf.L, lsf.N, noise))
            chunk = phy.TrialChunk(h, est.estimate(y))
            for acc in accs.values():
                acc.add(chunk, est.err_corr, p, noise)
        for s in config.schemes:
            stats = accs[s].finalize()
            D = out[s]["association"].D
            power = phy.fractional_power_allocation(D, lsf.beta_lin, stats.ap_energy, config.ap_dl_power_mw,
                                                    config.power_exponent, config.power_allocation,
                                                    config.power_kappa)
            if not power.check(config.ap_dl_power_mw):
                raise SimulationError(f"{s}: per-AP power constraint violated")
            res = phy.dl_sinr(stats, power.rho, noise, config.tau_d, config.tau_c)
            out[s].update(se=res.se, power=power, stats=stats, sinr=res)
    for s in config.schemes:
        rec = aggregate(out[s]["association"], out[s]["fronthaul"], out[s]["se"])
        rec["setup"] = setup
        if out[s]["se"] is not None:
            rec["binding_ap_power_mw"] = float(out[s]["power"].ap_power[out[s]["power"].binding_ap])
        out[s]["record"] = rec
        if not keep:
            out[s] = {"record": rec, "se": out[s]["se"]}
    return out


def _setup_worker(args):
    config, setup = args
    try:
        return simulate_setup(config, setup)
    except Exception as exc:  # attach scenario context across the process boundary
        raise SimulationError(f"K={config.K} L={config.L} U={config.U} seed={config.seed} setup={setup}: {exc}") from exc


def run_scenario(config: ScenarioConfig, threads: int = 1) -> RunReport:
    config.validate()
    jobs = [(config, s) for s in range(config.n_setups)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_setup_worker, jobs))
    else:
        results = [_setup_worker(j) for j in jobs]
    report = RunReport(config)
    for scheme in config.schemes:
        records = [r[scheme]["record"] for r in results]
        se = None
        if config.compute_se:
            se = np.concatenate([r[scheme]["se"] for r in results])
        report.schemes[scheme] = {"summary": summarize(records, se), "per_setup": records}
    return report


def run_sweep(spec: SweepSpec, threads: int = 1) -> tuple[list[RunReport], str]:
    """One report per axis value (each covering every scheme) plus a combined CSV."""
    reports = []
    rows = []
    out_dir = spec.out_dir or os.environ.get(OUT_DIR_ENV)
    for value, cfg in zip(spec.values, spec.configs()):
        rep = run_scenario(cfg, threads)
        reports.append(rep)
        for row in rep.summary_rows():
            rows.append({"axis": spec.axis, "value": value, **row})
        if out_dir:
            rep.write(Path(out_dir) / f"{spec.axis}={value}")
    table = _csv(rows, ["axis", "value"] + SUMMARY_COLUMNS)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "sweep.csv").write_text(table)
    return reports, table
