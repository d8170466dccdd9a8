"""SINRs, the bottleneck rate proxy, throughput, outcome tallies and BER thresholds."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .waveform import FrameGeometry

QUADRANTS = ("both_ok", "common_only", "private_only", "both_fail")


class OutOfRangeError(ValueError):
    """Requested BER target is not bracketed by the curve."""


@dataclass(frozen=True, eq=False)
class SinrMap:
    common: np.ndarray  # (2, n) common stream at user 1 and user 2
    private: np.ndarray  # (2, n) private stream k at user k


def _gain2(h: np.ndarray, p: np.ndarray) -> np.ndarray:
    return np.abs(np.conj(h) @ p) ** 2


def compute_sinr(ch, precoders, geometry: FrameGeometry | None = None, bins=None) -> SinrMap:
    """Per-subcarrier SINRs on the data bins (or ``bins``).

    The private SINR assumes the common stream has already been removed.
    """
    g = geometry or FrameGeometry()
    idx = g.data_idx if bins is None else bins
    if not ch.sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    common, private = [], []
    for k, h in ((1, ch.h1[idx]), (2, ch.h2[idx])):
        gc = _gain2(h, precoders.p_c)
        own = _gain2(h, precoders.private(k))
        other = _gain2(h, precoders.private(3 - k))
        common.append(gc / (own + other + ch.sigma2))
        private.append(own / (other + ch.sigma2))
    return SinrMap(np.array(common), np.array(private))


def bottleneck_proxy(sinr: SinrMap) -> dict[str, float]:
    """Worst-subcarrier spectral efficiency per stream (bit/s/Hz).

    The common stream has to be decoded by both users, so its SINR on each
    subcarrier is the smaller of the two users' values.
    """
    common = np.min(sinr.common, axis=0)
    return {
        "common": float(np.min(np.log2(1.0 + common))),
        "private1": float(np.min(np.log2(1.0 + sinr.private[0]))),
        "private2": float(np.min(np.log2(1.0 + sinr.private[1]))),
    }


def nominal_rate(mcs, bandwidth: float = 12e6) -> float:
    """``B_eff * m * r`` in bit/s."""
    return float(Fraction(bandwidth) * mcs.bits_per_symbol * Fraction(mcs.rate))


def expected_throughput(group, success_probs: Sequence[float], bandwidth: float = 12e6) -> float:
    """Common rate weighted by the both-users success probability plus each private rate."""
    p_c, p_1, p_2 = success_probs
    for p in success_probs:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
    return (nominal_rate(group.common, bandwidth) * p_c
            + nominal_rate(group.private1, bandwidth) * p_1
            + nominal_rate(group.private2, bandwidth) * p_2)


@dataclass
class OutcomeTally:
    T: int = 0
    D_sc: int = 0
    D_s1: int = 0
    D_s2: int = 0
    quadrants: np.ndarray = field(default_factory=lambda: np.zeros((2, 4), dtype=np.int64))

    def add_run(self, c_ok: Sequence[bool], p_ok: Sequence[bool]) -> None:
        self.T += 1
        self.D_sc += int(bool(c_ok[0]) and bool(c_ok[1]))
        self.D_s1 += int(bool(p_ok[0]))
        self.D_s2 += int(bool(p_ok[1]))
        for k in range(2):
            self.quadrants[k, quadrant_index(c_ok[k], p_ok[k])] += 1

    def __add__(self, other: "OutcomeTally") -> "OutcomeTally":
        return OutcomeTally(self.T + other.T, self.D_sc + other.D_sc, self.D_s1 + other.D_s1,
                            self.D_s2 + other.D_s2, self.quadrants + other.quadrants)

    def frequencies(self) -> tuple[float, float, float]:
        if self.T == 0:
            raise ValueError("tally is empty")
        return self.D_sc / self.T, self.D_s1 / self.T, self.D_s2 / self.T

    def quadrant_fractions(self) -> np.ndarray:
        if self.T == 0:
            raise ValueError("tally is empty")
        return self.quadrants / self.T

    def to_dict(self) -> dict:
        return {
            "T": self.T, "D_sc": self.D_sc, "D_s1": self.D_s1, "D_s2": self.D_s2,
            "quadrants": {f"user{k + 1}": dict(zip(QUADRANTS, map(int, self.quadrants[k])))
                          for k in range(2)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeTally":
        q = np.array([[d["quadrants"][f"user{k + 1}"][name] for name in QUADRANTS] for k in range(2)])
        return cls(d["T"], d["D_sc"], d["D_s1"], d["D_s2"], q.astype(np.int64))


def quadrant_index(c_ok: bool, p_ok: bool) -> int:
    return {(True, True): 0, (True, False): 1, (False, True): 2, (False, False): 3}[(bool(c_ok), bool(p_ok))]


def quadrant_tally(results: Iterable) -> OutcomeTally:
    """Tally per-run ``(user1, user2)`` pairs of objects carrying ``c_ok``/``p_ok``."""
    tally = OutcomeTally()
    for r1, r2 in results:
        tally.add_run((r1.c_ok, r2.c_ok), (r1.p_ok, r2.p_ok))
    if tally.T == 0:
        raise ValueError("no runs to tally")
    return tally


def empirical_throughput(tally: OutcomeTally, group, bandwidth: float = 12e6) -> float:
    if tally.T < 1:
        raise ValueError("empirical throughput needs at least one run")
    return expected_throughput(group, tally.frequencies(), bandwidth)


def coded_ber(decoded, truth) -> float:
    decoded = np.asarray(decoded).ravel()
    truth = np.asarray(truth).ravel()
    if decoded.size != truth.size:
        raise ValueError("length mismatch")
    if truth.size == 0:
        raise ValueError("no bits")
    return float(np.count_nonzero(decoded != truth)) / truth.size


@dataclass(frozen=True, eq=False)
class BerCurve:
    stream: str
    snr_db: np.ndarray
    ber: np.ndarray
    n_bits: np.ndarray | None = None

    def __post_init__(self):
        snr = np.asarray(self.snr_db, dtype=np.float64)
        ber = np.asarray(self.ber, dtype=np.float64)
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "ber", ber)
        if snr.shape != ber.shape or snr.ndim != 1:
            raise ValueError("snr_db and ber must be 1-D arrays of equal length")
        if np.any(np.diff(snr) <= 0):
            raise ValueError("snr_db must be strictly increasing")
        if np.any((ber < 0) | (ber > 1)):
            raise ValueError("ber values must lie in [0, 1]")

    def floored(self) -> np.ndarray:
        """BER with zero entries replaced by half a bit error of resolution."""
        if self.n_bits is None:
            floor = np.full(self.ber.shape, 1e-15)
        else:
            floor = 0.5 / np.maximum(np.asarray(self.n_bits, dtype=np.float64), 1.0)
        return np.where(self.ber > 0, self.ber, floor)


def threshold_snr(curve: BerCurve, beta: float) -> float:
    """SNR at which the curve last drops below ``beta`` (log-linear interpolation)."""
    b = curve.floored()
    above = np.nonzero(b >= beta)[0]
    if above.size == 0 or above[-1] == b.size - 1:
        raise OutOfRangeError(f"BER target {beta:g} is not bracketed by the {curve.stream} curve")
    i = above[-1]
    lb0, lb1 = np.log10(b[i]), np.log10(b[i + 1])
    frac = (np.log10(beta) - lb0) / (lb1 - lb0)
    return float(curve.snr_db[i] + frac * (curve.snr_db[i + 1] - curve.snr_db[i]))


def threshold_gain(curve_sic: BerCurve, curve_jd: BerCurve, beta: float) -> float:
    """SNR saved by JD relative to SIC at coded BER ``beta`` (dB)."""
    return threshold_snr(curve_sic, beta) - threshold_snr(curve_jd, beta)


def demapper_input_snr_db(ch, precoders, sigma2: float | None = None,
                          geometry: FrameGeometry | None = None) -> float:
    """Mean received signal power per data cell over the noise variance, both users pooled."""
    g = geometry or FrameGeometry()
    s2 = ch.sigma2 if sigma2 is None else sigma2
    return 10.0 * np.log10(received_power(ch, precoders, g) / s2)


def received_power(ch, precoders, geometry: FrameGeometry | None = None) -> float:
    g = geometry or FrameGeometry()
    total = 0.0
    for h in (ch.h1[g.data_idx], ch.h2[g.data_idx]):
        total += np.mean(sum(_gain2(h, p) for p in (precoders.p_c, precoders.p_1, precoders.p_2)))
    return float(total / 2.0)
