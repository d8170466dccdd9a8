"""Monte-Carlo frame simulation, MCS and BER sweeps, and report emission.

Every run ``r`` of a sweep point draws its channel, messages and noise from
``numpy.random.default_rng(master_seed + r)``. The same run index therefore
sees the same channel across grid points, and both receivers always process
the same received frame.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (ScenarioTarget, apply_channel, apply_channel_time, generate_channel_pair,
                      measure_alpha, measure_rho)
from .config import ExperimentConfig
from .metrics import (QUADRANTS, BerCurve, OutcomeTally, OutOfRangeError, empirical_throughput,
                      received_power, threshold_gain, threshold_snr)
from .transceiver import (McsGroup, design_precoders, effective_gains, jd_receive, sic_receive,
                          split_messages, transmit, user_budgets)
from .waveform import FrameGeometry, assemble_grid, data_cells, estimate_channel, genie_estimate, \
    ofdm_demodulate, ofdm_modulate

log = logging.getLogger(__name__)

RECEIVERS = {"jd": jd_receive, "sic": sic_receive}
BER_STREAMS = ("common", "private", "private1", "private2", "combined")

MCS_CSV_COLUMNS = (
    ["case", "receiver", "mcs_c", "mcs_1", "mcs_2", "t", "snr_db", "D_sc", "D_s1", "D_s2",
     "T_runs", "throughput_mbps"]
    + [f"u{k}_{q}" for k in (1, 2) for q in QUADRANTS]
)
BER_CSV_COLUMNS = ["case", "receiver", "stream", "mcs_c", "mcs_1", "mcs_2", "t", "snr_db",
                   "bit_errors", "bits", "ber", "T_runs"]
CALIBRATION_CSV_COLUMNS = ["case", "alpha_target_db", "alpha_mean_db", "rho_target", "rho_mean",
                           "runs", "alpha_ok", "rho_ok"]
LOOPBACK_CSV_COLUMNS = ["run", "seed", "receiver", "snr_db", "time_domain", "common_errors_u1",
                        "common_errors_u2", "private_errors_u1", "private_errors_u2"]


@dataclass
class FrameSpec:
    scenario: ScenarioTarget
    group: McsGroup
    t: float
    snr_db: float
    receivers: tuple[str, ...] = ("jd", "sic")
    genie_csi: bool = True
    snr_mode: str = "transmit"  # or "demapper"
    time_domain: bool = False
    list_size: int = 8
    geometry: FrameGeometry = field(default_factory=FrameGeometry)


@dataclass
class FrameOutcome:
    """Per-receiver decode flags and bit-error counts, indexed ``[user - 1]``."""

    c_ok: dict
    p_ok: dict
    err_c: dict
    err_p: dict
    bits_c: int
    bits_p: tuple[int, int]
    gamma_db: float


def _sounding(ch, geometry: FrameGeometry, rng):
    """Feedback CSI from a preamble-and-pilots-only frame."""
    zeros = [np.zeros(geometry.data_cells)] * 3
    dummy = design_precoders(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.0)
    rx1, rx2 = apply_channel(assemble_grid(zeros, dummy, geometry), ch, rng)
    return estimate_channel(rx1, geometry), estimate_channel(rx2, geometry)


def simulate_frame(spec: FrameSpec, seed: int) -> FrameOutcome:
    g = spec.geometry
    rng = np.random.default_rng(seed)
    ch = generate_channel_pair(spec.scenario, g, rng)
    d = g.data_idx

    if spec.snr_mode == "transmit":
        ch = ch.with_sigma2(10.0 ** (-spec.snr_db / 10.0))
    elif spec.snr_mode == "demapper":
        ref = design_precoders(ch.h1[d], ch.h2[d], spec.t)
        ch = ch.with_sigma2(received_power(ch, ref, g) / 10.0 ** (spec.snr_db / 10.0))
    else:
        raise ValueError(f"unknown snr_mode {spec.snr_mode!r}")

    if spec.genie_csi:
        csi = (genie_estimate(ch, 1), genie_estimate(ch, 2))
    else:
        csi = _sounding(ch, g, rng)
    P = design_precoders(csi[0].h_hat[d], csi[1].h_hat[d], spec.t)

    (n1, n2), _ = user_budgets(spec.group, g)
    w1 = rng.integers(0, 2, n1, dtype=np.uint8)
    w2 = rng.integers(0, 2, n2, dtype=np.uint8)
    msgs = split_messages(w1, w2, spec.group, geometry=g)
    grid = transmit(msgs, spec.group, P, g)

    if spec.time_domain:
        y1, y2 = apply_channel_time(ofdm_modulate(grid, g), ch, rng)
        rx = (ofdm_demodulate(y1, g), ofdm_demodulate(y2, g))
    else:
        rx = apply_channel(grid, ch, rng)

    out = FrameOutcome({}, {}, {}, {}, msgs.wc.size, (msgs.wp1.size, msgs.wp2.size),
                       10.0 * np.log10(received_power(ch, P, g) / ch.sigma2))
    for name in spec.receivers:
        out.c_ok[name], out.p_ok[name] = [False, False], [False, False]
        out.err_c[name], out.err_p[name] = [0, 0], [0, 0]
    for k in (1, 2):
        est = csi[k - 1] if spec.genie_csi else estimate_channel(rx[k - 1], g)
        h = est.h_hat[d]
        gains = effective_gains(h, P, k)
        # residual interference from the other user's private stream counts as noise
        s2 = est.sigma2_hat + np.abs(np.conj(h) @ P.private(3 - k)) ** 2
        cells = data_cells(rx[k - 1], g)
        truth_p = msgs.private(k)
        for name in spec.receivers:
            res = RECEIVERS[name](cells, gains, s2, spec.group, g, spec.list_size)
            ec = int(np.count_nonzero(res.wc_hat != msgs.wc))
            ep = int(np.count_nonzero(res.wp_hat != truth_p))
            out.c_ok[name][k - 1], out.p_ok[name][k - 1] = ec == 0, ep == 0
            out.err_c[name][k - 1], out.err_p[name][k - 1] = ec, ep
    return out


def _simulate_many(spec: FrameSpec, seeds, workers: int = 1) -> list[FrameOutcome]:
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(simulate_frame, [spec] * len(seeds), seeds, chunksize=4))
    return [simulate_frame(spec, s) for s in seeds]


def scenario_of(cfg: ExperimentConfig) -> ScenarioTarget:
    return cfg.scenario.target()


def _mcs_groups(cfg: ExperimentConfig) -> list[McsGroup]:
    m = cfg.mcs
    if m.tie_private:
        return [McsGroup.parse(c, p, p) for c, p in product(m.common, m.private)]
    return [McsGroup.parse(c, p1, p2) for c, p1, p2 in product(m.common, m.private, m.private)]


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _metadata(cfg: ExperimentConfig, kind: str) -> dict:
    return {"kind": kind, "master_seed": cfg.run.master_seed, "config_hash": config_hash(cfg),
            "version": __version__, "config": cfg.to_dict()}


@dataclass
class SweepReport:
    kind: str
    metadata: dict
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "metadata": self.metadata, "rows": self.rows, **self.extra}


def run_mcs_sweep(cfg: ExperimentConfig) -> SweepReport:
    """Empirical sum throughput and quadrant tallies over the MCS grid."""
    scenario = scenario_of(cfg)
    receivers = cfg.receivers
    seeds = [cfg.run.master_seed + r for r in range(cfg.run.runs_per_point)]
    report = SweepReport("mcs_sweep", _metadata(cfg, "mcs_sweep"))
    for group, t, snr in product(_mcs_groups(cfg), cfg.mcs_sweep.t, cfg.mcs_sweep.snr_db):
        spec = FrameSpec(scenario, group, t, snr, receivers, cfg.run.genie_csi,
                         time_domain=cfg.run.time_domain, list_size=cfg.run.list_size)
        outcomes = _simulate_many(spec, seeds, cfg.run.workers)
        for name in receivers:
            tally = OutcomeTally()
            for o in outcomes:
                tally.add_run(o.c_ok[name], o.p_ok[name])
            report.rows.append(_mcs_row(cfg, name, group, t, snr, tally))
        log.info("mcs point %s/%s/%s t=%g snr=%g done", *(m.label for m in group), t, snr)
    return report


def _mcs_row(cfg, receiver, group, t, snr, tally: OutcomeTally) -> dict:
    row = {
        "case": cfg.scenario.case if cfg.scenario.case is not None else "custom",
        "receiver": receiver,
        "mcs_c": group.common.label, "mcs_1": group.private1.label, "mcs_2": group.private2.label,
        "t": float(t), "snr_db": float(snr),
        "D_sc": tally.D_sc, "D_s1": tally.D_s1, "D_s2": tally.D_s2, "T_runs": tally.T,
        "throughput_mbps": empirical_throughput(tally, group) / 1e6,
    }
    for k in range(2):
        for q, name in enumerate(QUADRANTS):
            row[f"u{k + 1}_{name}"] = int(tally.quadrants[k, q])
    return row


@dataclass
class BerData:
    """Per-run error counts ``[receiver][stream] -> (runs, n_snr)`` plus bit counts."""

    snr_db: np.ndarray
    errors: dict
    bits: dict

    def curve(self, receiver: str, stream: str, runs=None) -> BerCurve:
        if stream == "combined":
            c = self.curve(receiver, "common", runs)
            p = self.curve(receiver, "private", runs)
            return BerCurve("combined", self.snr_db, np.maximum(c.ber, p.ber),
                            np.minimum(c.n_bits, p.n_bits))
        e = self.errors[receiver][stream]
        b = self.bits[stream]
        if runs is not None:
            e, b = e[runs], b[runs]
        n = b.sum(axis=0)
        return BerCurve(stream, self.snr_db, e.sum(axis=0) / n, n)


def collect_ber(cfg: ExperimentConfig) -> BerData:
    scenario = scenario_of(cfg)
    group = McsGroup.parse(*cfg.ber_sweep.mcs)
    receivers = cfg.receivers
    snrs = np.asarray(cfg.ber_sweep.snr_db, dtype=np.float64)
    R = cfg.run.runs_per_point
    seeds = [cfg.run.master_seed + r for r in range(R)]
    errors = {name: {s: np.zeros((R, snrs.size), dtype=np.int64) for s in BER_STREAMS[:4]}
              for name in receivers}
    bits = {s: np.zeros((R, snrs.size), dtype=np.int64) for s in BER_STREAMS[:4]}
    for j, snr in enumerate(snrs):
        spec = FrameSpec(scenario, group, cfg.ber_sweep.t, float(snr), receivers, cfg.run.genie_csi,
                         snr_mode="demapper", time_domain=cfg.run.time_domain,
                         list_size=cfg.run.list_size)
        for r, o in enumerate(_simulate_many(spec, seeds, cfg.run.workers)):
            bits["common"][r, j] = 2 * o.bits_c
            bits["private1"][r, j], bits["private2"][r, j] = o.bits_p
            bits["private"][r, j] = sum(o.bits_p)
            for name in receivers:
                errors[name]["common"][r, j] = sum(o.err_c[name])
                errors[name]["private1"][r, j], errors[name]["private2"][r, j] = o.err_p[name]
                errors[name]["private"][r, j] = sum(o.err_p[name])
        log.info("ber point snr=%g done", snr)
    return BerData(snrs, errors, bits)


def censored_gain(curve_sic: BerCurve, curve_jd: BerCurve, beta: float) -> tuple[float, bool]:
    """Threshold gain, with a SIC curve that never reaches ``beta`` read as a lower bound.

    When JD crosses ``beta`` inside the grid but SIC stays at or above it up to
    the last point, the SIC threshold lies beyond the grid and
    ``snr_max - gamma_jd`` bounds the gain from below; the flag reports that.
    Any other out-of-range situation raises :class:`OutOfRangeError`.
    """
    try:
        return threshold_gain(curve_sic, curve_jd, beta), False
    except OutOfRangeError:
        b = curve_sic.floored()
        if not b[-1] >= beta:
            raise
        return float(curve_sic.snr_db[-1]) - threshold_snr(curve_jd, beta), True


def bootstrap_gain(data: BerData, stream: str, beta: float, n_boot: int, seed: int,
                   confidence: float = 0.95) -> dict:
    """Point estimate and paired bootstrap interval of the JD-over-SIC threshold gain.

    Resamples draw run indices with replacement, so JD and SIC stay paired.
    Censored resamples (see :func:`censored_gain`) enter with their lower
    bound, which keeps the lower confidence limit conservative.
    """
    try:
        point, censored = censored_gain(data.curve("sic", stream), data.curve("jd", stream), beta)
    except OutOfRangeError:
        point, censored = None, False
    rng = np.random.default_rng(seed)
    R = data.errors["jd"]["common"].shape[0]
    samples, n_censored = [], 0
    for _ in range(n_boot):
        idx = rng.integers(0, R, R)
        try:
            value, cens = censored_gain(data.curve("sic", stream, idx), data.curve("jd", stream, idx), beta)
        except OutOfRangeError:
            continue
        samples.append(value)
        n_censored += cens
    tail = (1.0 - confidence) / 2.0
    lo, hi = (np.quantile(samples, [tail, 1.0 - tail]) if samples else (np.nan, np.nan))
    return {"stream": stream, "beta": beta, "delta_gamma_db": point, "censored": censored,
            "ci_low_db": float(lo), "ci_high_db": float(hi),
            "bootstrap_valid": len(samples), "bootstrap_censored": n_censored,
            "bootstrap_total": n_boot}


def run_ber_sweep(cfg: ExperimentConfig, data: BerData | None = None) -> SweepReport:
    """Coded BER versus demapper-input SNR for both receivers, plus threshold gains."""
    if not {"jd", "sic"} <= set(cfg.receivers) and cfg.ber_sweep.bootstrap:
        log.warning("threshold gains need both receivers; skipping")
    data = data or collect_ber(cfg)
    group = McsGroup.parse(*cfg.ber_sweep.mcs)
    report = SweepReport("ber_sweep", _metadata(cfg, "ber_sweep"))
    case = cfg.scenario.case if cfg.scenario.case is not None else "custom"
    R = cfg.run.runs_per_point
    for name in cfg.receivers:
        for stream in BER_STREAMS:
            curve = data.curve(name, stream)
            for j, snr in enumerate(data.snr_db):
                n = int(curve.n_bits[j])
                report.rows.append({
                    "case": case, "receiver": name, "stream": stream,
                    "mcs_c": group.common.label, "mcs_1": group.private1.label,
                    "mcs_2": group.private2.label, "t": float(cfg.ber_sweep.t), "snr_db": float(snr),
                    "bit_errors": int(round(curve.ber[j] * n)), "bits": n,
                    "ber": float(curve.ber[j]), "T_runs": R,
                })
    gains = []
    if {"jd", "sic"} <= set(cfg.receivers):
        for stream in ("common", "private", "combined"):
            for beta in cfg.ber_sweep.betas:
                gains.append(bootstrap_gain(data, stream, beta, cfg.ber_sweep.bootstrap,
                                            cfg.run.master_seed))
    report.extra["threshold_gains"] = gains
    return report


def run_calibration(cfg: ExperimentConfig, cases=None, alpha_tol: float = 0.5,
                    rho_tol: float = 0.05) -> SweepReport:
    """Mean measured alpha/rho per scenario over ``runs_per_point`` realizations.

    With genie CSI off the metrics are taken on pilot-based estimates at the
    first SNR of the MCS sweep grid, as a receiver would see them.
    """
    from .channel import CASES, case_target

    g = FrameGeometry()
    report = SweepReport("calibration", _metadata(cfg, "calibration"))
    if cases is None:
        cases = [cfg.scenario.case] if cfg.scenario.case is not None else list(CASES)
    sigma2 = 10.0 ** (-cfg.mcs_sweep.snr_db[0] / 10.0)
    for case in cases:
        target = case_target(case, cfg.scenario.taps)
        alphas, rhos = [], []
        for r in range(cfg.run.runs_per_point):
            rng = np.random.default_rng(cfg.run.master_seed + r)
            ch = generate_channel_pair(target, g, rng, sigma2=sigma2)
            if cfg.run.genie_csi:
                h1, h2 = ch.h1, ch.h2
            else:
                e1, e2 = _sounding(ch, g, rng)
                h1, h2 = e1.h_hat, e2.h_hat
            alphas.append(measure_alpha(h1[g.data_idx], h2[g.data_idx]))
            rhos.append(measure_rho(h1[g.data_idx], h2[g.data_idx]))
        a, p = float(np.mean(alphas)), float(np.mean(rhos))
        report.rows.append({
            "case": case, "alpha_target_db": target.alpha_db, "alpha_mean_db": a,
            "rho_target": target.rho, "rho_mean": p, "runs": cfg.run.runs_per_point,
            "alpha_ok": abs(a - target.alpha_db) <= alpha_tol, "rho_ok": abs(p - target.rho) <= rho_tol,
        })
    return report


_COLUMNS = {"mcs_sweep": MCS_CSV_COLUMNS, "ber_sweep": BER_CSV_COLUMNS,
            "calibration": CALIBRATION_CSV_COLUMNS, "loopback": LOOPBACK_CSV_COLUMNS}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def emit_report(report: SweepReport, out_dir, formats=("csv", "json")) -> list[Path]:
    """Write ``<kind>.csv`` and/or ``<kind>.json`` into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out_dir / f"{report.kind}.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=_COLUMNS[report.kind], lineterminator="\n")
                writer.writeheader()
                for row in report.rows:
                    writer.writerow({k: _csv_value(row[k]) for k in _COLUMNS[report.kind]})
            written.append(path)
        if "json" in formats:
            path = out_dir / f"{report.kind}.json"
            path.write_text(json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report to {out_dir}: {exc}") from exc
    return written


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v
