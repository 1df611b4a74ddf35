"""PSNR, channel-use accounting and Monte Carlo link BER."""
import math

import numpy as np

from . import modem

PSNR_CAP_DB = 100.0


def psnr(x, x_hat):
    """PSNR in dB for images in [0, 1]; identical inputs give ``PSNR_CAP_DB``."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"psnr: shape mismatch {x.shape} vs {x_hat.shape}")
    mse = np.mean((x - x_hat) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def batch_psnr(x, x_hat):
    """Per-image PSNR along the leading axis."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"psnr: shape mismatch {x.shape} vs {x_hat.shape}")
    return np.array([psnr(a, b) for a, b in zip(x, x_hat)])


def mean_psnr(values):
    return math.fsum(values) / len(values)


def cpp_of(n_bits, bits_per_symbol, height, width):
    """Channel uses per pixel: (L_b / log2 M) / (H * W)."""
    if n_bits % bits_per_symbol:
        raise ValueError(
            f"{n_bits} bits do not fill whole symbols of {bits_per_symbol} bits")
    return (n_bits // bits_per_symbol) / (height * width)


def measure_ber(constellation, snr_db, n_bits, seed, chunk=1 << 20):
    """Monte Carlo BER of random bits through modulate -> AWGN -> LLR -> hard decision."""
    if n_bits < 10_000:
        raise ValueError("measure_ber needs at least 1e4 bits")
    rng = np.random.default_rng(seed)
    ch = modem.ChannelRealization(snr_db)
    k = constellation.bits_per_symbol
    chunk -= chunk % k
    errors = 0
    done = 0
    while done < n_bits:
        m = min(chunk, n_bits - done)
        bits = rng.integers(0, 2, m, dtype=np.uint8)
        llr = modem.transmit_llr(bits, constellation, ch, rng)
        errors += int(np.count_nonzero(modem.hard_decide(llr) != bits))
        done += m
    return errors / n_bits
