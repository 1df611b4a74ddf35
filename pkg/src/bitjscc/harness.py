"""Experiment orchestration: training runs, SNR sweeps, BER sweeps, overhead reports."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import modem
from .bitmapper import BitMapper
from .checkpoint import load_checkpoint, load_codec_into, save_checkpoint
from .codec import SemanticCodec, to_nchw
from .config import dump_config
from .data import ingest_dataset
from .metrics import batch_psnr, cpp_of, mean_psnr, measure_ber
from .training import (
    BACKBONE,
    BASELINE,
    BITMAPPER,
    BitMapperModel,
    LinkStats,
    QuantBaselineModel,
    train_baseline,
    train_stage1,
    train_stage2_hard,
    train_stage2_soft,
    transmit_images,
)

log = logging.getLogger(__name__)

RESULTS_HEADER = ["snr_db", "cpp", "modulation", "mode", "model", "psnr_db", "ber",
                  "n_images", "seed"]
TRAIN_LOG_HEADER = ["stage", "model", "epoch", "lr", "train_mse", "val_psnr"]
BER_HEADER = ["snr_db", "modulation", "n_bits", "ber_mc", "ber_analytic"]

STAGE1_CKPT = "stage1.ckpt"
CHECKPOINT_NAMES = {BITMAPPER: "bitmapper.ckpt", BASELINE: "deepjscc-1bit.ckpt"}
MODEL_ORDER = (BITMAPPER, BASELINE)


def prepare_data(cfg):
    """Return ``(train, test)`` NCHW float32 arrays for ``cfg``."""
    total = cfg.n_train + cfg.n_test
    report = ingest_dataset(cfg.dataset, total, cfg.height, cfg.width, cfg.seed)
    for path, reason in report.skipped:
        log.warning("skipped %s: %s", path, reason)
    images = report.images
    if len(images) < 2:
        raise ValueError(f"dataset {cfg.dataset!r} produced {len(images)} usable images")
    n_test = min(cfg.n_test, len(images) // 2)
    data = to_nchw(images)
    return data[:len(data) - n_test][:cfg.n_train], data[len(data) - n_test:]


def build_codec(cfg):
    channels = cfg.feature_channels
    return SemanticCodec(cfg.height, cfg.width, channels, cfg.widths,
                         bit_channels=channels * cfg.bits_per_feature, seed=cfg.seed)


def _write_train_log(path, histories):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAIN_LOG_HEADER)
        for h in histories:
            for epoch, lr, mse, val in h.epochs:
                w.writerow([h.stage, h.model, epoch, f"{lr:.6g}", f"{mse:.8f}",
                            "" if math.isnan(val) else f"{val:.6f}"])


def run_training(cfg, stage="all", mode=None, out_dir=None, models=MODEL_ORDER):
    """Train stage 1 and/or stage 2 and write checkpoints plus ``train_log.csv``.

    Stage 2 starts from ``stage1.ckpt`` in ``out_dir``.  Returns the
    training histories and the link statistics of each stage-2 run.
    """
    mode = mode or cfg.mode
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    train, test = prepare_data(cfg)
    histories = []
    stats = {}
    if stage in ("1", "all"):
        codec = build_codec(cfg)
        log.info("stage 1: %d epochs on %d images", cfg.train.stage1_epochs, len(train))
        histories.append(train_stage1(codec, train, cfg.train, test))
        save_checkpoint(out / STAGE1_CKPT, codec, {"stage": 1, "seed": cfg.seed})
    if stage in ("2", "all"):
        tcfg = copy.copy(cfg.train)
        tcfg.mode = mode
        c = cfg.constellation
        for kind in models:
            codec = build_codec(cfg)
            load_codec_into(codec, out / STAGE1_CKPT)
            stats[kind] = LinkStats()
            log.info("stage 2 (%s): training %s", mode, kind)
            if kind == BITMAPPER:
                model = BitMapperModel(codec, BitMapper(cfg.feature_channels,
                                                        cfg.bits_per_feature,
                                                        tau=cfg.train.tau_start,
                                                        seed=cfg.seed + 1))
                fit = train_stage2_soft if mode == "soft" else train_stage2_hard
                histories.append(fit(model, train, tcfg, c, test, stats[kind]))
            elif kind == BASELINE:
                model = QuantBaselineModel(codec)
                histories.append(train_baseline(model, train, tcfg, c, test, stats[kind]))
            else:
                raise ValueError(f"unknown model {kind!r}")
            save_checkpoint(out / CHECKPOINT_NAMES[kind], model,
                            {"stage": 2, "mode": mode, "seed": cfg.seed,
                             "train_snr_db": cfg.train.train_snr_db})
    _write_train_log(out / "train_log.csv", histories)
    return histories, stats


@dataclass
class ResultRow:
    snr_db: float
    cpp: float
    modulation: str
    mode: str
    model: str
    psnr_db: float
    ber: float
    n_images: int
    seed: int

    def csv_fields(self):
        return [f"{self.snr_db:g}", f"{self.cpp:.6g}", self.modulation, self.mode, self.model,
                f"{self.psnr_db:.6f}", f"{self.ber:.6e}", str(self.n_images), str(self.seed)]


def evaluate_point(model, images, constellation, snr_db, mode, seed_key):
    channel = modem.ChannelRealization(snr_db, mode)
    x_hat, ber = transmit_images(model, images, constellation, channel,
                                 np.random.default_rng(seed_key))
    return mean_psnr(batch_psnr(images, x_hat)), ber


def run_sweep(cfg, checkpoints, out_dir=None, modes=None):
    """Evaluate every checkpoint at every grid SNR; rows ordered by (snr, model, mode)."""
    models = []
    for path in checkpoints:
        model, _ = load_checkpoint(path)
        kind = getattr(model, "kind", BACKBONE)
        if kind not in MODEL_ORDER:
            raise ValueError(f"{path}: sweep needs a stage-2 checkpoint, got {kind}")
        if model.n_bits != cfg.n_bits:
            raise ValueError(f"{path}: model emits {model.n_bits} bits, config needs {cfg.n_bits}")
        models.append(model)
    models.sort(key=lambda m: MODEL_ORDER.index(m.kind))
    _, test = prepare_data(cfg)
    c = cfg.constellation
    modes = modes or [cfg.mode]
    for mode in modes:
        if mode not in ("soft", "hard"):
            raise ValueError(f"unknown decision mode {mode!r}; use soft, hard or soft,hard")
    cpp = cpp_of(cfg.n_bits, c.bits_per_symbol, cfg.height, cfg.width)
    rows = []
    for i, snr in enumerate(cfg.snr_grid):
        for model in models:
            for mode in modes:
                key = [cfg.seed, i, MODEL_ORDER.index(model.kind), ("soft", "hard").index(mode)]
                psnr_db, ber = evaluate_point(model, test, c, snr, mode, key)
                rows.append(ResultRow(snr, cpp, c.name, mode, model.kind, psnr_db, ber,
                                      len(test), cfg.seed))
    if out_dir is not None:
        write_results(rows, out_dir)
    return rows


def write_results(rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for row in rows:
            w.writerow(row.csv_fields())
    with open(out / "results.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(asdict(row), sort_keys=True) + "\n")


def read_results(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class OverheadReport:
    backbone_params: int
    backbone_flops: int
    mapper_params: int
    mapper_flops: int

    @property
    def rows(self):
        b, bf = self.backbone_params, self.backbone_flops
        return [
            ("Backbone", b, bf, 0, 0),
            ("DeepJSCC-1bit", b, bf, 0, 0),
            ("Bit mapper model", b + self.mapper_params, bf + self.mapper_flops,
             self.mapper_params, self.mapper_flops),
        ]

    @property
    def param_share(self):
        return self.mapper_params / self.backbone_params

    @property
    def flop_share(self):
        return self.mapper_flops / self.backbone_flops


def report_overhead(codec, mapper):
    """Parameter and FLOP accounting per image (FLOPs = 2 x multiply-accumulates)."""
    h, w = codec.grid
    return OverheadReport(
        backbone_params=codec.num_parameters(),
        backbone_flops=2 * codec.macs(),
        mapper_params=mapper.num_parameters(),
        mapper_flops=2 * mapper.macs(h, w),
    )


def format_overhead(report):
    lines = [
        "# FLOPs per image = 2 x multiply-accumulates of convolution layers",
        f"{'model':<18}{'params':>12}{'FLOPs':>14}{'d_params':>20}{'d_FLOPs':>22}",
    ]
    for name, p, f, dp, df in report.rows:
        dp_s = f"+{dp} ({100 * dp / report.backbone_params:.2f}%)"
        df_s = f"+{df} ({100 * df / report.backbone_flops:.2f}%)"
        lines.append(f"{name:<18}{p:>12}{f:>14}{dp_s:>20}{df_s:>22}")
    return "\n".join(lines) + "\n"


def ber_sweep(modulation, snr_grid, n_bits, seed, out_dir=None):
    c = modem.get_constellation(modulation)
    rows = []
    for i, snr in enumerate(snr_grid):
        mc = measure_ber(c, snr, n_bits, [seed, i])
        try:
            analytic = modem.analytic_ber(c, snr)
        except modem.UnsupportedModulation:
            analytic = None
        rows.append((snr, c.name, n_bits, mc, analytic))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ber.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BER_HEADER)
            for snr, name, n, mc, an in rows:
                w.writerow([f"{snr:g}", name, n, f"{mc:.6e}", "" if an is None else f"{an:.6e}"])
    return rows


def brute_force_posterior(r, c, sigma2):
    """P(b_j = 1 | r) by direct summation of Gaussian likelihoods (no log domain)."""
    r = np.asarray(r, dtype=np.complex128)
    lik = np.exp(-np.abs(r[:, None] - c.symbols[None, :]) ** 2 / (2.0 * sigma2))
    total = lik.sum(axis=1)
    return np.stack([lik[:, c.labels[:, j] == 1].sum(axis=1) / total
                     for j in range(c.bits_per_symbol)], axis=1)


def llr_check(modulation, samples, seed=0):
    """Largest |sigmoid(LLR) - enumeration posterior| over random (r, sigma) pairs."""
    c = modem.get_constellation(modulation)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        sigma2 = float(rng.uniform(0.05, 1.0))
        r = c.symbols[rng.integers(c.order)] + complex(*rng.normal(0, math.sqrt(sigma2), 2))
        snr_db = -10.0 * math.log10(2.0 * sigma2)
        llr = modem.demodulate_llr(np.array([r]), c, modem.ChannelRealization(snr_db))
        exact = brute_force_posterior(np.array([r]), c, sigma2)
        worst = max(worst, float(np.max(np.abs(modem.soft_posterior(llr) - exact.reshape(-1)))))
    return worst
