"""Gray-mapped modulation, AWGN, exact LLR demodulation and bit decisions.

Conventions
-----------
* SNR is E_s/N_0 in dB with unit mean symbol energy, so the noise variance
  per real dimension is ``10**(-snr_db/10) / 2``.  ``snr_db = inf`` is the
  noiseless sentinel.
* Bit 1 maps to the positive amplitude, so a positive LLR favours bit 1.
* LLRs are ``ln P(b=1|r) / P(b=0|r)`` clamped to ``[-LLR_CLAMP, LLR_CLAMP]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LLR_CLAMP = 40.0


class UnsupportedModulation(ValueError):
    pass


def as_rng(seed):
    """Accept an int seed, a SeedSequence-compatible tuple, or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-energy constellation; ``symbols[i]`` carries label ``labels[i]``.

    The label of symbol ``i`` is the MSB-first binary expansion of ``i``.
    """

    name: str
    order: int
    symbols: np.ndarray
    labels: np.ndarray

    @property
    def bits_per_symbol(self):
        return self.labels.shape[1]

    @property
    def per_dimension_antipodal(self):
        # BPSK/QPSK: each bit drives its own real dimension with +/-A.
        return self.order in (2, 4)


def _labels(k):
    idx = np.arange(2 ** k)
    return ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)


def _pam4_gray(b0, b1):
    # 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
    return np.where(b0 == 1, np.where(b1 == 1, 1.0, 3.0), np.where(b1 == 1, -1.0, -3.0))


@lru_cache(maxsize=None)
def get_constellation(name):
    key = name.lower().replace("-", "")
    if key == "bpsk":
        labels = _labels(1)
        symbols = (2.0 * labels[:, 0] - 1.0).astype(np.complex128)
    elif key == "qpsk":
        labels = _labels(2)
        a = 1.0 / math.sqrt(2.0)
        symbols = a * (2.0 * labels[:, 0] - 1.0) + 1j * a * (2.0 * labels[:, 1] - 1.0)
    elif key in ("16qam", "qam16"):
        labels = _labels(4)
        i = _pam4_gray(labels[:, 0], labels[:, 1])
        q = _pam4_gray(labels[:, 2], labels[:, 3])
        symbols = (i + 1j * q) / math.sqrt(10.0)
        key = "16qam"
    else:
        raise UnsupportedModulation(f"unknown modulation {name!r}; use bpsk, qpsk or 16qam")
    symbols.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(key, len(symbols), symbols, labels)


@dataclass(frozen=True)
class ChannelRealization:
    snr_db: float
    mode: str = "soft"
    bsc_ber: float | None = None

    def __post_init__(self):
        if self.mode not in ("soft", "hard", "bsc"):
            raise ValueError(f"unknown decision mode {self.mode!r}")
        if (self.mode == "bsc") != (self.bsc_ber is not None):
            raise ValueError("bsc_ber must be given exactly when mode is 'bsc'")
        if self.bsc_ber is not None and not 0.0 <= self.bsc_ber <= 0.5:
            raise ValueError(f"bsc_ber {self.bsc_ber} outside [0, 0.5]")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"invalid snr_db {self.snr_db}")

    @property
    def noiseless(self):
        return self.snr_db == math.inf

    @property
    def sigma2_per_dim(self):
        if self.noiseless:
            return 0.0
        return 10.0 ** (-self.snr_db / 10.0) / 2.0


def pad_length(n_bits, c):
    k = c.bits_per_symbol
    return (-n_bits) % k


def modulate(bits, c):
    """Map bits (last axis) to symbols; zero bits are appended if needed."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = pad_length(bits.shape[-1], c)
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), np.uint8)], axis=-1)
    k = c.bits_per_symbol
    groups = bits.reshape(bits.shape[:-1] + (-1, k))
    index = groups @ (1 << np.arange(k - 1, -1, -1))
    return c.symbols[index]


def modulate_relaxed(values, c):
    """Linear extension of the BPSK/QPSK mapper to real values in [0, 1].

    Binary inputs give exactly :func:`modulate`'s symbols.
    """
    if not c.per_dimension_antipodal:
        raise UnsupportedModulation(
            f"relaxed (real-valued) modulation needs BPSK or QPSK, got {c.name}")
    amp = 2.0 * np.asarray(values, dtype=np.float64) - 1.0
    if c.order == 2:
        return amp.astype(np.complex128)
    pad = pad_length(amp.shape[-1], c)
    if pad:
        amp = np.concatenate([amp, -np.ones(amp.shape[:-1] + (pad,))], axis=-1)
    a = amp.reshape(amp.shape[:-1] + (-1, 2)) / math.sqrt(2.0)
    return a[..., 0] + 1j * a[..., 1]


def awgn(symbols, ch, rng_seed):
    if ch.mode == "bsc":
        raise ValueError("awgn: channel realization is in bsc mode")
    symbols = np.asarray(symbols, dtype=np.complex128)
    if ch.noiseless:
        return symbols.copy()
    rng = as_rng(rng_seed)
    noise = rng.standard_normal(symbols.shape + (2,)) * math.sqrt(ch.sigma2_per_dim)
    return symbols + (noise[..., 0] + 1j * noise[..., 1])


def _logsumexp(x, axis):
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def demodulate_llr(r, c, ch, n_bits=None):
    """Exact per-bit LLRs by enumerating every constellation point.

    Returns an array with the bit axis last; ``n_bits`` trims modulation
    padding.
    """
    r = np.asarray(r, dtype=np.complex128)
    d2 = np.abs(r[..., None] - c.symbols) ** 2
    k = c.bits_per_symbol
    llr = np.empty(r.shape + (k,), dtype=np.float64)
    if not ch.noiseless:
        metric = -d2 / (2.0 * ch.sigma2_per_dim)
    for j in range(k):
        ones = c.labels[:, j] == 1
        if ch.noiseless:
            gap = d2[..., ~ones].min(axis=-1) - d2[..., ones].min(axis=-1)
            llr[..., j] = np.sign(gap) * LLR_CLAMP
        else:
            llr[..., j] = _logsumexp(metric[..., ones], -1) - _logsumexp(metric[..., ~ones], -1)
    llr = llr.reshape(r.shape[:-1] + (-1,))
    if n_bits is not None:
        llr = llr[..., :n_bits]
    return np.clip(llr, -LLR_CLAMP, LLR_CLAMP)


def hard_decide(llr):
    """1 where the LLR is strictly positive, 0 otherwise (ties go to 0)."""
    return (np.asarray(llr) > 0).astype(np.uint8)


def soft_posterior(llr):
    """P(b = 1 | r) = 1 / (1 + exp(-llr))."""
    llr = np.asarray(llr, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-llr))


def bsc_flips(shape, ber, rng_seed):
    if not 0.0 <= ber <= 0.5:
        raise ValueError(f"bsc: bit error rate {ber} outside [0, 0.5]")
    return (as_rng(rng_seed).random(shape) < ber).astype(np.uint8)


def bsc_transmit(bits, ber, rng_seed):
    """Flip each bit independently with probability ``ber``."""
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ bsc_flips(bits.shape, ber, rng_seed)


def q_function(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def analytic_ber(c, snr_db):
    """Gray-coded BPSK/QPSK bit error rate Q(sqrt(2 E_b/N_0))."""
    if c.order not in (2, 4):
        raise UnsupportedModulation(
            f"no closed-form BER for {c.name}; estimate it by Monte Carlo")
    if snr_db == math.inf:
        return 0.0
    ebn0 = 10.0 ** (snr_db / 10.0) / c.bits_per_symbol
    return q_function(math.sqrt(2.0 * ebn0))


def transmit_llr(bits, c, ch, rng_seed):
    """modulate -> AWGN -> exact LLRs, trimmed back to the input bit length."""
    bits = np.asarray(bits, dtype=np.uint8)
    r = awgn(modulate(bits, c), ch, rng_seed)
    return demodulate_llr(r, c, ch, n_bits=bits.shape[-1])
