"""Polar coding with shortening and interleaving.

One codeword spans the whole frame of a stream: ``coded_len`` equals the
number of data cells times the bits per symbol. The mother code uses the
generator ``F^{(x)n}`` with ``F = [[1, 0], [1, 1]]`` in natural order (no
bit-reversal permutation; the interleaver absorbs any fixed reordering).

Rate matching is by shortening the tail: mother positions ``coded_len ..
mother_len - 1`` carry frozen zeros in ``u`` and, because the generator is
lower triangular, zeros in the codeword too. They are never transmitted and
the decoder treats them as known zeros.

LLR convention: positive values mean bit 0 is more likely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ._scl import scl_decode
from .waveform import FrameGeometry

DESIGN_SNR_DB = 3.0
DEFAULT_LIST_SIZE = 8
_KNOWN_LLR = 1e30

SUPPORTED_BITS = (1, 2, 4)
SUPPORTED_RATES = (Fraction(1, 2), Fraction(3, 4))


@dataclass(frozen=True, eq=False)
class CodeConfig:
    bits_per_symbol: int
    rate: Fraction
    coded_len: int
    info_len: int
    mother_len: int
    info_set: np.ndarray
    frozen_set: np.ndarray
    shortening_set: np.ndarray
    interleaver: np.ndarray
    list_size: int = DEFAULT_LIST_SIZE

    @property
    def frozen_mask(self) -> np.ndarray:
        mask = np.ones(self.mother_len, dtype=np.bool_)
        mask[self.info_set] = False
        return mask

    def __repr__(self) -> str:
        return (
            f"CodeConfig(m={self.bits_per_symbol}, r={self.rate}, E={self.coded_len}, "
            f"K={self.info_len}, N={self.mother_len}, L={self.list_size})"
        )


def _ln_phi(x: np.ndarray) -> np.ndarray:
    """log of Chung's Gaussian-approximation function phi."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    small = x < 10.0
    xs = np.maximum(x[small], 1e-300)
    out[small] = -0.4527 * xs**0.86 + 0.0218
    xl = x[~small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~small] = 0.5 * np.log(np.pi / xl) - xl / 4.0 + np.log1p(-10.0 / (7.0 * xl))
    out[np.isinf(x)] = -np.inf
    return out


def _ln_phi_inverse(target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    lo = np.zeros_like(target)
    hi = np.full_like(target, 1e7)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        above = _ln_phi(mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    res = 0.5 * (lo + hi)
    return np.where(np.isneginf(target), np.inf, res)


def _check_node_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    la, lb = _ln_phi(a), _ln_phi(b)
    # ln(pa + pb - pa*pb), computed in the log domain
    with np.errstate(invalid="ignore"):
        s = np.logaddexp(la, lb)
        prod = la + lb - s
        lc = s + np.log1p(-np.exp(np.where(np.isfinite(prod), prod, -np.inf)))
    lc = np.where(np.isneginf(la), lb, lc)
    lc = np.where(np.isneginf(lb), la, lc)
    return _ln_phi_inverse(lc)


def ga_reliability(channel_means: np.ndarray) -> np.ndarray:
    """LLR means of the synthetic channels seen by each ``u`` position."""
    z = np.asarray(channel_means, dtype=np.float64)[None, :]
    while z.shape[1] > 1:
        h = z.shape[1] // 2
        check = _check_node_mean(z[:, :h], z[:, h:])
        z = np.stack([check, z[:, :h] + z[:, h:]], axis=1).reshape(-1, h)
    return z.ravel()


def _resolve_rate(r) -> Fraction:
    rate = Fraction(r).limit_denominator(16)
    if rate not in SUPPORTED_RATES:
        raise ValueError(f"unsupported code rate {r}; expected one of 1/2, 3/4")
    return rate


@lru_cache(maxsize=None)
def _cached_config(m: int, rate: Fraction, n_cells: int, list_size: int) -> CodeConfig:
    coded_len = n_cells * m
    info_len = int(rate * coded_len)
    mother_len = 1 << math.ceil(math.log2(coded_len))
    shortening = np.arange(coded_len, mother_len)

    z0 = 4.0 * 10.0 ** (DESIGN_SNR_DB / 10.0)
    channel = np.full(mother_len, z0)
    channel[shortening] = np.inf
    rel = ga_reliability(channel)
    rel[shortening] = -np.inf
    order = np.lexsort((np.arange(mother_len), -rel))
    info_set = np.sort(order[:info_len])
    frozen = np.setdiff1d(np.arange(coded_len), info_set)

    rng = np.random.default_rng([coded_len, info_len, 0x5EED])
    interleaver = rng.permutation(coded_len)
    for arr in (info_set, frozen, shortening, interleaver):
        arr.setflags(write=False)
    return CodeConfig(m, rate, coded_len, info_len, mother_len, info_set, frozen, shortening,
                      interleaver, list_size)


def build_code_config(m: int, r, geometry: FrameGeometry | None = None,
                      list_size: int = DEFAULT_LIST_SIZE) -> CodeConfig:
    """Code geometry for modulation order ``m`` and rate ``r`` on one frame."""
    if m not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bits per symbol {m}; expected one of {SUPPORTED_BITS}")
    if list_size < 1:
        raise ValueError("list_size must be at least 1")
    geometry = geometry or FrameGeometry()
    return _cached_config(m, _resolve_rate(r), geometry.data_cells, int(list_size))


def polar_transform(u: np.ndarray) -> np.ndarray:
    """Multiply by ``F^{(x)n}`` over GF(2); ``u`` may be batched on axis 0."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    lead = x.shape[:-1]
    h = N // 2
    while h >= 1:
        v = x.reshape(lead + (N // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h //= 2
    return x


def interleave(bits: np.ndarray, cfg: CodeConfig) -> np.ndarray:
    return np.asarray(bits)[cfg.interleaver]


def deinterleave(values: np.ndarray, cfg: CodeConfig) -> np.ndarray:
    values = np.asarray(values)
    out = np.empty_like(values)
    out[cfg.interleaver] = values
    return out


def polar_encode(info, cfg: CodeConfig) -> np.ndarray:
    """Encode ``info_len`` bits into an interleaved codeword of ``coded_len`` bits."""
    info = np.asarray(info, dtype=np.uint8).ravel()
    if info.size != cfg.info_len:
        raise ValueError(f"expected {cfg.info_len} info bits, got {info.size}")
    u = np.zeros(cfg.mother_len, dtype=np.uint8)
    u[cfg.info_set] = info
    x = polar_transform(u)
    return interleave(x[: cfg.coded_len], cfg)


def polar_decode(llrs, cfg: CodeConfig, list_size: int | None = None) -> np.ndarray:
    """SCL-decode interleaved codeword LLRs and return the info-bit estimate.

    The decoder reports estimates only; whether they are correct is judged
    by whoever knows the transmitted bits.
    """
    llrs = np.asarray(llrs, dtype=np.float64).ravel()
    if llrs.size != cfg.coded_len:
        raise ValueError(f"expected {cfg.coded_len} LLRs, got {llrs.size}")
    if not np.all(np.isfinite(llrs)):
        raise ValueError("LLRs must be finite")
    channel = np.full(cfg.mother_len, _KNOWN_LLR)
    channel[: cfg.coded_len] = deinterleave(llrs, cfg)
    frozen = cfg.frozen_mask
    if np.all(channel != 0.0):
        # A hard decision that is already a codeword is the unique zero-metric
        # path, so the list search would return it anyway.
        u = polar_transform((channel < 0.0).astype(np.uint8))
        if not u[frozen].any():
            return u[cfg.info_set]
    u = scl_decode(channel, frozen, int(list_size or cfg.list_size))
    return u[cfg.info_set]
