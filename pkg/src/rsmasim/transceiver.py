"""RSMA transmitter and the two receivers (joint demapping and SIC).

Both receivers take a user's payload data cells ``(payload_symbols, n_data)``,
the per-data-subcarrier effective gains of that user and a noise variance
(scalar or per data subcarrier), and return a :class:`DecodedResult`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .channelcode import build_code_config, polar_decode, polar_encode
from .constellation import Scheme, build_constellation, composite_points, int_to_bits, maxlog_llr, modulate
from .waveform import FrameGeometry, assemble_grid


@dataclass(frozen=True)
class Mcs:
    scheme: Scheme
    rate: Fraction

    @property
    def bits_per_symbol(self) -> int:
        return self.scheme.bits_per_symbol

    @property
    def label(self) -> str:
        return f"{self.scheme.value}-{self.rate.numerator}/{self.rate.denominator}"

    @classmethod
    def parse(cls, value) -> "Mcs":
        """Accept an ``Mcs``, a table index 0..5 or a label like ``"QPSK-3/4"``."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            if not 0 <= value < len(MCS_TABLE):
                raise ValueError(f"MCS index {value} outside 0..{len(MCS_TABLE) - 1}")
            return MCS_TABLE[int(value)]
        text = str(value).strip()
        if text.isdigit():
            return cls.parse(int(text))
        try:
            scheme, rate = text.replace(" ", "-").split("-", 1)
            mcs = cls(Scheme.parse(scheme), Fraction(rate))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse MCS {value!r}") from exc
        if mcs not in MCS_TABLE:
            raise ValueError(f"MCS {value!r} is not in the supported grid")
        return mcs


MCS_TABLE = tuple(
    Mcs(s, Fraction(r)) for s in (Scheme.BPSK, Scheme.QPSK, Scheme.QAM16) for r in ("1/2", "3/4")
)


@dataclass(frozen=True)
class McsGroup:
    common: Mcs
    private1: Mcs
    private2: Mcs

    @classmethod
    def parse(cls, c, p1, p2) -> "McsGroup":
        return cls(Mcs.parse(c), Mcs.parse(p1), Mcs.parse(p2))

    def private(self, k: int) -> Mcs:
        return self.private1 if k == 1 else self.private2

    def __iter__(self):
        return iter((self.common, self.private1, self.private2))

    def code_configs(self, geometry: FrameGeometry | None = None, list_size: int = 8):
        return tuple(build_code_config(m.bits_per_symbol, m.rate, geometry, list_size) for m in self)


@dataclass(frozen=True, eq=False)
class SplitMessages:
    wc: np.ndarray
    wp1: np.ndarray
    wp2: np.ndarray
    common_bits: tuple[int, int]  # bits of W1 and W2 carried in the common message

    def private(self, k: int) -> np.ndarray:
        return self.wp1 if k == 1 else self.wp2


def user_budgets(group: McsGroup, geometry: FrameGeometry | None = None,
                 policy: str = "symmetric") -> tuple[tuple[int, int], tuple[int, int]]:
    """Message lengths ``(|W1|, |W2|)`` and common shares for a split policy.

    ``"symmetric"`` puts half of the common payload in each user's message;
    ``"private"`` leaves the common message empty.
    """
    kc, k1, k2 = (c.info_len for c in group.code_configs(geometry))
    if policy == "symmetric":
        shares = (kc // 2, kc - kc // 2)
    elif policy == "private":
        shares = (0, 0)
    else:
        raise ValueError(f"unknown split policy {policy!r}")
    return (k1 + shares[0], k2 + shares[1]), shares


def split_messages(w1, w2, group: McsGroup, policy: str = "symmetric",
                   geometry: FrameGeometry | None = None) -> SplitMessages:
    w1 = np.asarray(w1, dtype=np.uint8).ravel()
    w2 = np.asarray(w2, dtype=np.uint8).ravel()
    (n1, n2), (c1, c2) = user_budgets(group, geometry, policy)
    if w1.size != n1 or w2.size != n2:
        raise ValueError(f"message lengths ({w1.size}, {w2.size}) do not match budget ({n1}, {n2})")
    wc = np.concatenate([w1[:c1], w2[:c2]])
    return SplitMessages(wc, w1[c1:].copy(), w2[c2:].copy(), (c1, c2))


def combine_message(wc_hat, wp_hat, k: int, split: SplitMessages | tuple[int, int]) -> np.ndarray:
    """User ``k``'s message estimate: its slice of the common message, then its private part."""
    shares = split.common_bits if isinstance(split, SplitMessages) else tuple(split)
    wc_hat = np.asarray(wc_hat, dtype=np.uint8).ravel()
    if wc_hat.size != sum(shares):
        raise ValueError(f"common estimate has {wc_hat.size} bits, bookkeeping says {sum(shares)}")
    if isinstance(split, SplitMessages) and np.size(wp_hat) != split.private(k).size:
        raise ValueError("private estimate length does not match the split")
    lo = 0 if k == 1 else shares[0]
    return np.concatenate([wc_hat[lo:lo + shares[k - 1]], np.asarray(wp_hat, dtype=np.uint8).ravel()])


@dataclass(frozen=True, eq=False)
class PrecoderSet:
    p_c: np.ndarray
    p_1: np.ndarray
    p_2: np.ndarray
    t: float
    status: str = "zf"

    def private(self, k: int) -> np.ndarray:
        return self.p_1 if k == 1 else self.p_2

    @property
    def total_power(self) -> float:
        return float(sum(np.vdot(p, p).real for p in (self.p_c, self.p_1, self.p_2)))


def wideband_direction(h: np.ndarray) -> np.ndarray:
    """Principal eigenvector of ``mean_n h[n] h[n]^H`` scaled by its eigenvalue's root."""
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    cov = h.T @ np.conj(h) / h.shape[0]
    w, v = np.linalg.eigh(cov)
    return np.sqrt(max(w[-1], 0.0)) * v[:, -1]


def design_precoders(h1, h2, t: float, strategy: str = "zf", cond_limit: float = 1e4,
                     singular_limit: float = 1e10) -> PrecoderSet:
    """Wideband RSMA precoders from the two users' channels (``(n, 2)`` or ``(2,)``).

    Private precoders zero-force the wideband user directions (regularized
    above ``cond_limit``, matched filter above ``singular_limit``) and share
    ``1 - t`` equally; the common precoder is the dominant left singular
    vector of the stacked directions with power ``t``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"common power fraction must be in [0, 1], got {t}")
    if strategy not in ("zf", "mrt"):
        raise ValueError(f"unknown precoder strategy {strategy!r}")
    H = np.stack([wideband_direction(h1), wideband_direction(h2)], axis=1)  # columns = users
    norms = np.linalg.norm(H, axis=0)
    if np.any(norms == 0):
        raise ValueError("zero channel")
    gram = np.conj(H.T) @ H
    cond = np.linalg.cond(gram)
    if strategy == "mrt" or cond > singular_limit:
        W, status = H.copy(), "mrt"
    elif cond > cond_limit:
        delta = 1e-2 * np.trace(gram).real / 2
        W, status = H @ np.linalg.inv(gram + delta * np.eye(2)), "rzf"
    else:
        W, status = H @ np.linalg.inv(gram), "zf"
    W = W / np.linalg.norm(W, axis=0) * np.sqrt((1.0 - t) / 2.0)
    u, _, _ = np.linalg.svd(H)
    p_c = u[:, 0] * np.sqrt(t)
    return PrecoderSet(p_c, W[:, 0], W[:, 1], float(t), status)


@dataclass(frozen=True, eq=False)
class EffectiveGains:
    g_c: np.ndarray  # per data subcarrier
    g_p: np.ndarray
    user: int


def effective_gains(h, precoders: PrecoderSet, k: int) -> EffectiveGains:
    """``g_c = h^H p_c`` and ``g_p = h^H p_k`` for every row of ``h``."""
    hc = np.conj(np.asarray(h))
    return EffectiveGains(hc @ precoders.p_c, hc @ precoders.private(k), k)


def encode_streams(msgs: SplitMessages, group: McsGroup,
                   geometry: FrameGeometry | None = None) -> list[np.ndarray]:
    cfgs = group.code_configs(geometry)
    words = (msgs.wc, msgs.wp1, msgs.wp2)
    return [modulate(polar_encode(w, cfg), build_constellation(m.scheme))
            for w, cfg, m in zip(words, cfgs, group)]


def transmit(msgs: SplitMessages, group: McsGroup, precoders: PrecoderSet,
             geometry: FrameGeometry | None = None) -> np.ndarray:
    return assemble_grid(encode_streams(msgs, group, geometry), precoders, geometry)


@dataclass
class DecodedResult:
    wc_hat: np.ndarray
    wp_hat: np.ndarray
    llr_common: np.ndarray
    llr_private: np.ndarray
    c_ok: bool | None = None
    p_ok: bool | None = None
    extras: dict = field(default_factory=dict)


def _prepare(y, gains: EffectiveGains, sigma2):
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim == 1:
        y = y.reshape(-1, np.size(gains.g_c))
    if not np.all(np.isfinite(y)):
        raise ValueError("received cells contain non-finite values")
    shape = y.shape
    g_c = np.broadcast_to(gains.g_c, shape).ravel()
    g_p = np.broadcast_to(gains.g_p, shape).ravel()
    s2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), shape).ravel()
    return y.ravel(), g_c, g_p, s2


def jd_receive(y, gains: EffectiveGains, sigma2, group: McsGroup,
               geometry: FrameGeometry | None = None, list_size: int | None = None) -> DecodedResult:
    """SIC-free receiver: one max-log demapping pass over the composite alphabet."""
    k = gains.user
    cfg_c, cfg_p = (group.code_configs(geometry)[i] for i in (0, k))
    xc = build_constellation(group.common.scheme)
    xp = build_constellation(group.private(k).scheme)
    y, g_c, g_p, s2 = _prepare(y, gains, sigma2)
    points = composite_points(g_c, g_p, xc, xp)
    labels = int_to_bits(np.arange(points.shape[-1]), xc.bits_per_symbol + xp.bits_per_symbol)
    llr = maxlog_llr(y, points, labels, s2)
    bc = xc.bits_per_symbol
    llr_c = llr[:, :bc].ravel()
    llr_p = llr[:, bc:].ravel()
    return DecodedResult(polar_decode(llr_c, cfg_c, list_size), polar_decode(llr_p, cfg_p, list_size), llr_c, llr_p)


def sic_receive(y, gains: EffectiveGains, sigma2, group: McsGroup,
                geometry: FrameGeometry | None = None, list_size: int | None = None,
                common_override: np.ndarray | None = None) -> DecodedResult:
    """Two-stage receiver: decode common (private as Gaussian noise), cancel, decode private.

    The second stage always runs on whatever the first stage produced.
    ``common_override`` replaces the stage-1 estimate used for cancellation
    (for error-propagation experiments).
    """
    k = gains.user
    cfg_c, cfg_p = (group.code_configs(geometry)[i] for i in (0, k))
    xc = build_constellation(group.common.scheme)
    xp = build_constellation(group.private(k).scheme)
    y, g_c, g_p, s2 = _prepare(y, gains, sigma2)

    llr_c = maxlog_llr(y, g_c[:, None] * xc.points, xc.labels, s2 + np.abs(g_p) ** 2).ravel()
    wc_hat = polar_decode(llr_c, cfg_c, list_size)
    used = wc_hat if common_override is None else np.asarray(common_override, dtype=np.uint8)
    s_c = modulate(polar_encode(used, cfg_c), xc)
    residual = y - g_c * s_c
    llr_p = maxlog_llr(residual, g_p[:, None] * xp.points, xp.labels, s2).ravel()
    return DecodedResult(wc_hat, polar_decode(llr_p, cfg_p, list_size), llr_c, llr_p)
