"""OFDM frame layout, modulation and pilot-based channel estimation.

Frame layout (two transmit antennas, 64-point FFT, 802.11a-style bins):

* symbol 0 is a preamble; used subcarriers alternate between antenna 0 and
  antenna 1 so each antenna's channel is sounded on every other bin;
* symbols ``1 .. payload_symbols`` carry data on 48 bins and comb pilots on
  bins 7, 21, 43, 57, sent with the fixed antenna weights ``[1, 1]/sqrt(2)``;
* bin 0 (DC) and bins 27..37 are guards and stay empty.

Data cells are ordered symbol-major: cell ``t * n_data + j`` sits on OFDM
symbol ``t`` of the payload and the ``j``-th data bin. Grids are plain
complex arrays ``(antennas, symbols, n_total)``; received grids drop the
antenna axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

N_TX = 2
PILOT_WEIGHTS = np.array([1.0, 1.0]) / np.sqrt(2.0)


@dataclass(frozen=True)
class FrameGeometry:
    n_total: int = 64
    n_data: int = 48
    n_pilot: int = 4
    n_guard: int = 12
    cp_len: int = 16
    payload_symbols: int = 40
    subcarrier_spacing: float = 312.5e3
    effective_bandwidth: float = 12e6
    pilot_bins: tuple = field(default=(7, 21, 43, 57))

    def __post_init__(self):
        if self.n_data + self.n_pilot + self.n_guard != self.n_total:
            raise ValueError("data, pilot and guard counts must add up to n_total")
        if len(self.guard_idx) != self.n_guard or len(self.data_idx) != self.n_data:
            raise ValueError("subcarrier maps do not match the configured counts")

    @cached_property
    def guard_idx(self) -> np.ndarray:
        used = (self.n_total - self.n_guard) // 2
        return np.concatenate(([0], np.arange(used + 1, self.n_total - used)))

    @cached_property
    def pilot_idx(self) -> np.ndarray:
        return np.asarray(self.pilot_bins, dtype=np.int64)

    @cached_property
    def used_idx(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_total), self.guard_idx)

    @cached_property
    def data_idx(self) -> np.ndarray:
        return np.setdiff1d(self.used_idx, self.pilot_idx)

    @property
    def n_symbols(self) -> int:
        return self.payload_symbols + 1

    @property
    def data_cells(self) -> int:
        return self.n_data * self.payload_symbols

    @property
    def samples_per_symbol(self) -> int:
        return self.n_total + self.cp_len

    @cached_property
    def pilot_sequence(self) -> np.ndarray:
        """Known BPSK pilot values, ``(payload_symbols, n_pilot)``."""
        rng = np.random.default_rng(0x0FD)
        seq = 1.0 - 2.0 * rng.integers(0, 2, size=(self.payload_symbols, self.n_pilot))
        return seq.astype(np.complex128)

    @cached_property
    def preamble(self) -> np.ndarray:
        """Per-antenna preamble symbol ``(N_TX, n_total)``; antennas interleave on used bins."""
        rng = np.random.default_rng(0x9EA)
        values = 1.0 - 2.0 * rng.integers(0, 2, size=len(self.used_idx))
        pre = np.zeros((N_TX, self.n_total), dtype=np.complex128)
        for a in range(N_TX):
            sel = slice(a, None, N_TX)
            pre[a, self.used_idx[sel]] = values[sel]
        return pre


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    h_hat: np.ndarray  # (n_total, N_TX), same convention as ChannelRealization
    sigma2_hat: float


def assemble_grid(streams, precoders, geometry: FrameGeometry | None = None) -> np.ndarray:
    """Precode the common and two private symbol streams onto a transmit grid.

    ``streams`` is ``(s_c, s_1, s_2)``; ``precoders`` anything with ``p_c``,
    ``p_1``, ``p_2`` attributes.
    """
    g = geometry or FrameGeometry()
    s = [np.asarray(x, dtype=np.complex128).ravel() for x in streams]
    if len(s) != 3:
        raise ValueError("expected three streams (common, private 1, private 2)")
    for name, x in zip(("common", "private-1", "private-2"), s):
        if x.size != g.data_cells:
            raise ValueError(f"{name} stream has {x.size} symbols, expected {g.data_cells}")
    P = np.stack([precoders.p_c, precoders.p_1, precoders.p_2], axis=1)  # (N_TX, 3)
    S = np.stack(s, axis=0).reshape(3, g.payload_symbols, g.n_data)
    grid = np.zeros((N_TX, g.n_symbols, g.n_total), dtype=np.complex128)
    grid[:, 1:, g.data_idx] = np.einsum("as,stn->atn", P, S)
    grid[:, 1:, g.pilot_idx] = PILOT_WEIGHTS[:, None, None] * g.pilot_sequence[None]
    grid[:, 0, :] = g.preamble
    return grid


def data_cells(rx_grid: np.ndarray, geometry: FrameGeometry | None = None) -> np.ndarray:
    """Payload data cells of a received grid as ``(payload_symbols, n_data)``."""
    g = geometry or FrameGeometry()
    return np.asarray(rx_grid)[..., 1:, :][..., g.data_idx]


def ofdm_modulate(grid: np.ndarray, geometry: FrameGeometry | None = None) -> np.ndarray:
    """IFFT plus cyclic prefix per symbol; returns ``(..., symbols * (n_total + cp_len))``."""
    g = geometry or FrameGeometry()
    grid = np.asarray(grid, dtype=np.complex128)
    body = np.fft.ifft(grid, axis=-1, norm="ortho")
    with_cp = np.concatenate([body[..., -g.cp_len:], body], axis=-1)
    return with_cp.reshape(grid.shape[:-2] + (-1,))


def ofdm_demodulate(samples: np.ndarray, geometry: FrameGeometry | None = None) -> np.ndarray:
    g = geometry or FrameGeometry()
    samples = np.asarray(samples, dtype=np.complex128)
    sps = g.samples_per_symbol
    if samples.shape[-1] != g.n_symbols * sps:
        raise ValueError(f"expected {g.n_symbols * sps} samples, got {samples.shape[-1]}")
    sym = samples.reshape(samples.shape[:-1] + (g.n_symbols, sps))[..., g.cp_len:]
    return np.fft.fft(sym, axis=-1, norm="ortho")


def estimate_channel(rx_grid: np.ndarray, geometry: FrameGeometry | None = None) -> ChannelEstimate:
    """Least-squares channel estimate from the preamble, noise variance from comb pilots.

    Each antenna's channel is measured on its half of the used bins and
    linearly interpolated to the rest (flat beyond the band edges). The noise
    variance is the residual power of the pilot cells around their per-bin
    mean, which is unbiased for a channel that is static over the frame.
    """
    g = geometry or FrameGeometry()
    rx = np.asarray(rx_grid, dtype=np.complex128)
    if np.any(g.pilot_sequence == 0) or np.any(g.preamble[:, g.used_idx].sum(axis=0) == 0):
        raise ValueError("degenerate pilot pattern")
    h_hat = np.zeros((g.n_total, N_TX), dtype=np.complex128)
    used = g.used_idx
    freq = np.where(used < g.n_total // 2, used, used - g.n_total)
    for a in range(N_TX):
        bins = used[a::N_TX]
        # y = conj(h_a) * preamble on bins sounded by antenna a
        ls = np.conj(rx[0, bins] / g.preamble[a, bins])
        f = freq[a::N_TX]
        order = np.argsort(f)
        f, ls = f[order], ls[order]
        h_hat[used, a] = np.interp(freq, f, ls.real) + 1j * np.interp(freq, f, ls.imag)
    ratio = rx[1:, g.pilot_idx] / g.pilot_sequence
    resid = ratio - ratio.mean(axis=0, keepdims=True)
    dof = ratio.shape[0] - 1
    sigma2 = float(np.sum(np.abs(resid) ** 2) / (dof * ratio.shape[1]))
    return ChannelEstimate(h_hat, max(sigma2, 1e-30))


def genie_estimate(channel, user: int) -> ChannelEstimate:
    """Hand the true channel of ``user`` (1 or 2) to the receiver unchanged."""
    h = channel.h1 if user == 1 else channel.h2
    return ChannelEstimate(h, channel.sigma2)
