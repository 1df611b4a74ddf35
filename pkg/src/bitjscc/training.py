"""Two-stage training for the bit-mapper model and the 1-bit quantisation baseline.

Stage 1 trains the codec over an error-free link: encoder features are
squashed by a sigmoid and fed straight to the decoder.  Stage 2 trains end to
end through the digital link.  The link itself is not differentiable; its
output is attached to the graph with a straight-through connection to the
transmitted values, so the decoder sees real channel outputs while gradients
reach the bit sampler (or the quantiser) unchanged.

* soft mode: modulate -> AWGN -> exact LLR -> sigmoid posterior
* hard mode: the modem, channel and hard decision collapse into a binary
  symmetric channel with the link's bit error rate
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import modem
from .autodiff import Adam, StepLR, backward, no_grad, ops
from .autodiff.tensor import Tensor
from .bitmapper import BitMapper, gumbel_max_sample, gumbel_noise, sample_bits_st, tau_schedule
from .codec import SemanticCodec
from .metrics import batch_psnr

BITMAPPER = "bitmapper"
BASELINE = "deepjscc-1bit"
BACKBONE = "backbone"


class TrainingDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-4
    lr_decay: float = 0.9
    decay_interval: int = 20
    stage1_epochs: int = 40
    stage2_epochs: int = 40
    train_snr_db: float = 6.0
    mode: str = "soft"
    tau_start: float = 5.0
    tau_end: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.lr <= 0 or self.decay_interval < 1:
            raise ValueError("batch_size, lr and decay_interval must be positive")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.mode not in ("soft", "hard"):
            raise ValueError(f"decision mode must be 'soft' or 'hard', got {self.mode!r}")
        if self.tau_start <= 0 or self.tau_end <= 0:
            raise ValueError("temperatures must be positive")


class BitMapperModel:
    """Codec plus learnable bit mapper."""

    kind = BITMAPPER

    def __init__(self, codec: SemanticCodec, mapper: BitMapper):
        if mapper.channels != codec.channels:
            raise ValueError("bit mapper channels must equal the codec feature depth")
        if mapper.bits_per_feature * codec.channels != codec.bit_channels:
            raise ValueError(
                f"bit mapper emits {mapper.n_bits(codec.feature_length)} bits but the decoder "
                f"expects {codec.n_bits}")
        self.codec = codec
        self.mapper = mapper

    @property
    def n_bits(self):
        return self.codec.n_bits

    def parameters(self):
        return self.codec.parameters() + self.mapper.parameters()

    def named_parameters(self):
        yield from self.codec.named_parameters("codec.")
        yield from self.mapper.named_parameters("mapper.")

    def transmit_bits(self, x, rng):
        """Inference-time bits: Gumbel-Max draws from the mapper's distribution."""
        p = self.mapper.distribution(self.codec.encode(x))
        _, bits = gumbel_max_sample(p, gumbel_noise(p.shape, rng))
        return bits.reshape(x.shape[0], self.n_bits)


class QuantBaselineModel:
    """Codec with a sigmoid bottleneck and a non-parametric 1-bit quantiser."""

    kind = BASELINE

    def __init__(self, codec: SemanticCodec):
        if codec.bit_channels != codec.channels:
            raise ValueError("the 1-bit baseline needs one bit per feature element")
        self.codec = codec

    @property
    def n_bits(self):
        return self.codec.n_bits

    def parameters(self):
        return self.codec.parameters()

    def named_parameters(self):
        yield from self.codec.named_parameters("codec.")

    def bottleneck(self, x):
        z = ops.sigmoid(self.codec.encode(x))
        return ops.reshape(z, (z.shape[0], self.n_bits))

    def transmit_bits(self, x, rng):
        z = self.bottleneck(x).data
        return quant1bit_forward(z, "infer", rng).astype(np.uint8)


def quant1bit_forward(z, phase, rng_seed=None):
    """Uniform-noise proxy in training, round-half-to-even at inference."""
    z = np.asarray(z)
    if phase == "train":
        u = modem.as_rng(rng_seed).uniform(-0.5, 0.5, size=z.shape)
        return (z + u).astype(z.dtype)
    if phase == "infer":
        return np.rint(z)
    raise ValueError(f"quantiser phase must be 'train' or 'infer', got {phase!r}")


def link_ber(constellation, snr_db, n_bits=200_000, seed=12345):
    """Closed-form BER where available, otherwise a fixed-seed Monte Carlo estimate."""
    try:
        return modem.analytic_ber(constellation, snr_db)
    except modem.UnsupportedModulation:
        ch = modem.ChannelRealization(snr_db)
        rng = np.random.default_rng(seed)
        bits = rng.integers(0, 2, n_bits, dtype=np.uint8)
        llr = modem.transmit_llr(bits, constellation, ch, rng)
        return float(np.mean(modem.hard_decide(llr) != bits))


@dataclass
class LinkStats:
    bits_sent: int = 0
    nonbinary_sent: int = 0
    flips: int = 0

    @property
    def flip_rate(self):
        return self.flips / self.bits_sent if self.bits_sent else 0.0


class TrainingLink:
    """Non-differentiable channel used in the forward pass of stage 2."""

    def __init__(self, constellation, snr_db, mode, stats=None):
        self.constellation = constellation
        self.snr_db = float(snr_db)
        self.mode = mode
        self.stats = stats if stats is not None else LinkStats()
        if mode == "hard":
            self.ber = link_ber(constellation, snr_db)
            self.channel = modem.ChannelRealization(snr_db, "bsc", self.ber)
        elif mode == "soft":
            self.ber = None
            self.channel = modem.ChannelRealization(snr_db, "soft")
        else:
            raise ValueError(f"unknown link mode {mode!r}")

    def __call__(self, values, rng):
        values = np.asarray(values)
        binary = np.isin(values, (0.0, 1.0))
        self.stats.bits_sent += values.size
        self.stats.nonbinary_sent += int(values.size - np.count_nonzero(binary))
        if self.mode == "hard":
            flips = modem.bsc_flips(values.shape, self.ber, rng)
            self.stats.flips += int(flips.sum())
            # flips in value space; equals XOR for binary inputs
            return (values + flips * (1.0 - 2.0 * values)).astype(np.float32)
        if binary.all():
            symbols = modem.modulate(values.astype(np.uint8), self.constellation)
        else:
            symbols = modem.modulate_relaxed(values, self.constellation)
        r = modem.awgn(symbols, self.channel, rng)
        llr = modem.demodulate_llr(r, self.constellation, self.channel, n_bits=values.shape[-1])
        return modem.soft_posterior(llr).astype(np.float32)


def stage1_loss(codec, x):
    z = ops.sigmoid(codec.encode(x))
    v = ops.reshape(z, (z.shape[0], codec.feature_length))
    return ops.mse(codec.decode(v), x)


def bitmapper_loss(model, x, link, rng, tau):
    p = model.mapper.distribution(model.codec.encode(x))
    b = sample_bits_st(p, gumbel_noise(p.shape, rng), tau)
    b = ops.reshape(b, (x.shape[0], model.n_bits))
    received = ops.straight_through(link(b.data, rng), b)
    return ops.mse(model.codec.decode(received), x)


def baseline_loss(model, x, link, rng):
    z = model.bottleneck(x)
    q = ops.add(z, Tensor(quant1bit_forward(z.data, "train", rng) - z.data))
    received = ops.straight_through(link(q.data, rng), q)
    return ops.mse(model.codec.decode(received), x)


@dataclass
class TrainHistory:
    stage: str
    model: str
    step_losses: list = field(default_factory=list)
    epochs: list = field(default_factory=list)  # (epoch, lr, train_mse, val_psnr)

    @property
    def final_loss(self):
        return self.step_losses[-1] if self.step_losses else math.nan


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    if n <= batch_size:
        return [perm]
    return [perm[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def _fit(params, loss_fn, images, epochs, cfg, rng, history, validate=None, on_step=None):
    opt = Adam(params, lr=cfg.lr)
    sched = StepLR(opt, cfg.decay_interval, cfg.lr_decay)
    n = len(images)
    steps_per_epoch = len(_batches(n, cfg.batch_size, np.random.default_rng(0)))
    total = epochs * steps_per_epoch
    step = 0
    for epoch in range(epochs):
        lr = sched.set_epoch(epoch)
        epoch_losses = []
        for idx in _batches(n, cfg.batch_size, rng):
            if on_step is not None:
                on_step(step, total)
            loss = loss_fn(Tensor(images[idx]))
            value = loss.item()
            history.step_losses.append(value)
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"{history.stage}/{history.model}: non-finite loss at step {step}",
                    list(history.step_losses))
            backward(loss)
            opt.step()
            epoch_losses.append(value)
            step += 1
        val = validate() if validate is not None else math.nan
        history.epochs.append((epoch, lr, math.fsum(epoch_losses) / len(epoch_losses), val))
    return history


def _stage_rng(cfg, tag):
    return np.random.default_rng([cfg.seed, tag])


def train_stage1(codec, images, cfg, val_images=None):
    """Pre-train the codec over an error-free link; returns the history."""
    history = TrainHistory("stage1", BACKBONE)
    validate = None
    if val_images is not None:
        def validate():
            with no_grad():
                out = codec.decode(ops.reshape(ops.sigmoid(codec.encode(Tensor(val_images))),
                                               (len(val_images), codec.feature_length)))
            return float(np.mean(batch_psnr(val_images, out.data)))
    return _fit(codec.parameters(), lambda x: stage1_loss(codec, x), images,
                cfg.stage1_epochs, cfg, _stage_rng(cfg, 1), history, validate)


def _stage2(model, images, cfg, mode, constellation, val_images, stats):
    link = TrainingLink(constellation, cfg.train_snr_db, mode, stats)
    rng = _stage_rng(cfg, 2 if model.kind == BITMAPPER else 3)
    history = TrainHistory(f"stage2-{mode}", model.kind)
    state = {"tau": cfg.tau_start}

    def on_step(step, total):
        state["tau"] = tau_schedule(step, total, cfg.tau_start, cfg.tau_end)

    if model.kind == BITMAPPER:
        def loss_fn(x):
            return bitmapper_loss(model, x, link, rng, state["tau"])
    else:
        def loss_fn(x):
            return baseline_loss(model, x, link, rng)

    validate = None
    if val_images is not None:
        eval_channel = modem.ChannelRealization(cfg.train_snr_db, "soft")

        def validate():
            xhat, _ = transmit_images(model, val_images, constellation, eval_channel,
                                      np.random.default_rng([cfg.seed, 99]))
            return float(np.mean(batch_psnr(val_images, xhat)))

    _fit(model.parameters(), loss_fn, images, cfg.stage2_epochs, cfg, rng, history,
         validate, on_step if model.kind == BITMAPPER else None)
    if model.kind == BITMAPPER:
        model.mapper.tau = float(cfg.tau_end) if cfg.stage2_epochs else model.mapper.tau
    return history


def train_stage2_soft(model, images, cfg, constellation, val_images=None, stats=None):
    """End-to-end training through modem + AWGN + soft posteriors."""
    return _stage2(model, images, cfg, "soft", constellation, val_images, stats)


def train_stage2_hard(model, images, cfg, constellation, val_images=None, stats=None):
    """End-to-end training through a BSC at the link's bit error rate."""
    return _stage2(model, images, cfg, "hard", constellation, val_images, stats)


def train_baseline(model, images, cfg, constellation, val_images=None, stats=None):
    """Stage-2 training of the 1-bit baseline in ``cfg.mode``."""
    if model.kind != BASELINE:
        raise TypeError("train_baseline expects a QuantBaselineModel")
    return _stage2(model, images, cfg, cfg.mode, constellation, val_images, stats)


def transmit_images(model, images, constellation, channel, rng, batch_size=64):
    """Inference through the digital link.

    Returns reconstructions (NCHW) and the measured hard-decision BER of the
    transmitted bits.  ``channel.mode`` selects soft posteriors or hard bits
    at the decoder input.
    """
    outs = []
    errors = 0
    total = 0
    with no_grad():
        for start in range(0, len(images), batch_size):
            x = Tensor(images[start:start + batch_size])
            bits = model.transmit_bits(x, rng)
            llr = modem.transmit_llr(bits, constellation, channel, rng)
            decided = modem.hard_decide(llr)
            errors += int(np.count_nonzero(decided != bits))
            total += bits.size
            if channel.mode == "hard":
                decoder_in = decided.astype(np.float32)
            else:
                decoder_in = modem.soft_posterior(llr).astype(np.float32)
            outs.append(model.codec.decode(Tensor(decoder_in)).data)
    return np.concatenate(outs), errors / total
