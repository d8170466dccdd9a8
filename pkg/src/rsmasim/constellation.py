"""Modulation alphabets, bit mapping and composite constellations.

Labelling follows the reflected-Gray tables used in 3GPP TS 38.211:

* BPSK:  bit ``b`` maps to ``1 - 2b`` (real axis).
* QPSK:  ``((1 - 2b0) + 1j (1 - 2b1)) / sqrt(2)``.
* 16QAM: ``((1 - 2b0)(2 - (1 - 2b2)) + 1j (1 - 2b1)(2 - (1 - 2b3))) / sqrt(10)``.

Point ``i`` of every alphabet carries the label given by the binary expansion
of ``i`` (most significant bit first). Bit 0 always sits on the positive side
of its decision boundary, which is why a positive LLR means "bit 0 is more
likely" throughout the package.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit


class Scheme(str, enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    QAM16 = "16QAM"

    @property
    def bits_per_symbol(self) -> int:
        return {Scheme.BPSK: 1, Scheme.QPSK: 2, Scheme.QAM16: 4}[self]

    @classmethod
    def from_bits(cls, m: int) -> "Scheme":
        for scheme in cls:
            if scheme.bits_per_symbol == m:
                return scheme
        raise ValueError(f"no modulation with {m} bits per symbol")

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).upper().replace("-", "")
        aliases = {"BPSK": cls.BPSK, "QPSK": cls.QPSK, "16QAM": cls.QAM16, "QAM16": cls.QAM16}
        if key not in aliases:
            raise ValueError(f"unknown modulation scheme {value!r}")
        return aliases[key]


def int_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    """MSB-first binary expansion, shape ``values.shape + (width,)``."""
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


def bits_to_int(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return bits @ weights


@dataclass(frozen=True, eq=False)
class Constellation:
    scheme: Scheme
    points: np.ndarray
    labels: np.ndarray

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @property
    def size(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"Constellation({self.scheme.value})"


def _map_label(scheme: Scheme, b: np.ndarray) -> np.ndarray:
    s = 1.0 - 2.0 * b.astype(np.float64)
    if scheme is Scheme.BPSK:
        return s[:, 0] + 0j
    if scheme is Scheme.QPSK:
        return (s[:, 0] + 1j * s[:, 1]) / np.sqrt(2.0)
    return (s[:, 0] * (2.0 - s[:, 2]) + 1j * s[:, 1] * (2.0 - s[:, 3])) / np.sqrt(10.0)


_CACHE: dict[Scheme, Constellation] = {}


def build_constellation(scheme) -> Constellation:
    """Return the unit-energy Gray-labelled alphabet for ``scheme``."""
    scheme = Scheme.parse(scheme)
    if scheme not in _CACHE:
        m = scheme.bits_per_symbol
        labels = int_to_bits(np.arange(1 << m), m)
        points = _map_label(scheme, labels)
        points.setflags(write=False)
        labels.setflags(write=False)
        _CACHE[scheme] = Constellation(scheme, points, labels)
    return _CACHE[scheme]


def modulate(bits, c: Constellation) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    m = c.bits_per_symbol
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} is not a multiple of {m}")
    if bits.size == 0:
        return np.zeros(0, dtype=np.complex128)
    return c.points[bits_to_int(bits.reshape(-1, m))]


def demap_hard(symbols, c: Constellation) -> np.ndarray:
    """Nearest-point hard decision; returns the flattened bit sequence."""
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    idx = np.argmin(np.abs(symbols[:, None] - c.points[None, :]), axis=1)
    return c.labels[idx].ravel()


@dataclass(frozen=True, eq=False)
class CompositeConstellation:
    """All sums ``g_c * x_c + g_p * x_p``; labels put the common bits first."""

    points: np.ndarray
    labels: np.ndarray
    g_c: complex
    g_p: complex
    common: Constellation
    private: Constellation

    @property
    def bits_common(self) -> int:
        return self.common.bits_per_symbol

    @property
    def bits_private(self) -> int:
        return self.private.bits_per_symbol


def composite_points(g_c, g_p, xc: Constellation, xp: Constellation) -> np.ndarray:
    """Composite alphabets for arrays of gains, shape ``g.shape + (|Xc||Xp|,)``.

    Point index ``ic * |Xp| + ip`` so its MSB-first binary expansion is the
    common label followed by the private label.
    """
    g_c = np.asarray(g_c, dtype=np.complex128)
    g_p = np.asarray(g_p, dtype=np.complex128)
    grid = g_c[..., None, None] * xc.points[:, None] + g_p[..., None, None] * xp.points[None, :]
    return grid.reshape(grid.shape[:-2] + (xc.size * xp.size,))


def build_composite(g_c, g_p, xc: Constellation, xp: Constellation) -> CompositeConstellation:
    points = composite_points(complex(g_c), complex(g_p), xc, xp)
    labels = int_to_bits(np.arange(points.size), xc.bits_per_symbol + xp.bits_per_symbol)
    return CompositeConstellation(points, labels, complex(g_c), complex(g_p), xc, xp)


@njit(cache=True)
def _maxlog_kernel(y, points, labels, out):
    shared = points.shape[0] == 1
    n_bits = labels.shape[1]
    best0 = np.empty(n_bits)
    best1 = np.empty(n_bits)
    for i in range(y.shape[0]):
        row = 0 if shared else i
        best0[:] = np.inf
        best1[:] = np.inf
        for j in range(points.shape[1]):
            d = y[i] - points[row, j]
            dist = d.real * d.real + d.imag * d.imag
            for b in range(n_bits):
                if labels[j, b]:
                    if dist < best1[b]:
                        best1[b] = dist
                elif dist < best0[b]:
                    best0[b] = dist
        for b in range(n_bits):
            out[i, b] = best1[b] - best0[b]


def maxlog_llr(y, points, labels, noise_var) -> np.ndarray:
    """Max-log bit LLRs of received samples against per-sample alphabets.

    ``points`` is either a shared alphabet ``(M,)`` or one alphabet per
    sample ``(n, M)``. ``noise_var`` broadcasts against ``y``. Returns
    ``(n, bits)`` with positive values favouring bit 0.
    """
    y = np.ascontiguousarray(y, dtype=np.complex128).ravel()
    points = np.ascontiguousarray(points, dtype=np.complex128)
    if not np.all(np.isfinite(y)):
        raise ValueError("received samples contain non-finite values")
    if points.ndim == 1:
        points = points[None, :]
    if points.shape[0] not in (1, y.size):
        raise ValueError(f"{points.shape[0]} alphabets for {y.size} samples")
    labels = np.ascontiguousarray(labels, dtype=np.bool_)
    out = np.empty((y.size, labels.shape[1]))
    _maxlog_kernel(y, points, labels, out)
    noise_var = np.asarray(noise_var, dtype=np.float64)
    if noise_var.ndim:
        noise_var = np.broadcast_to(noise_var.ravel(), (y.size,))[:, None]
    return out / noise_var
