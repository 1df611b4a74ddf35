"""Command-line interface: ``bitjscc {train,sweep,ber,llr-check,overhead}``."""
import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_config
from .training import BITMAPPER, TrainingDiverged


def _grid(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR grid {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("SNR grid must not be empty")
    return values


def cmd_train(args):
    cfg = load_config(args.config)
    out = args.out or cfg.out_dir
    harness.run_training(cfg, stage=args.stage, mode=args.mode, out_dir=out)
    print(f"checkpoints and train_log.csv written to {out}")


def cmd_sweep(args):
    cfg = load_config(args.config)
    out = args.out or cfg.out_dir
    modes = args.mode.split(",") if args.mode else None
    rows = harness.run_sweep(cfg, args.checkpoint, out_dir=out, modes=modes)
    for row in rows:
        print(",".join(row.csv_fields()))
    print(f"{len(rows)} rows written to {Path(out) / 'results.csv'}")


def cmd_ber(args):
    rows = harness.ber_sweep(args.modulation, args.snr_grid, args.bits, args.seed, args.out)
    print(",".join(harness.BER_HEADER))
    for snr, name, n, mc, an in rows:
        print(f"{snr:g},{name},{n},{mc:.6e},{'' if an is None else f'{an:.6e}'}")


def cmd_llr_check(args):
    worst = harness.llr_check(args.modulation, args.samples, args.seed)
    status = "ok" if worst <= args.tol else "FAIL"
    print(f"{args.modulation}: max |sigmoid(llr) - posterior| = {worst:.3e} over "
          f"{args.samples} samples ({status})")
    return 0 if worst <= args.tol else 1


def cmd_overhead(args):
    model, _ = load_checkpoint(args.checkpoint)
    if getattr(model, "kind", None) != BITMAPPER:
        raise CheckpointError("overhead needs a bit-mapper checkpoint (codec + mapper)")
    text = harness.format_overhead(harness.report_overhead(model.codec, model.mapper))
    out = Path(args.out or Path(args.checkpoint).parent)
    out.mkdir(parents=True, exist_ok=True)
    (out / "overhead.txt").write_text(text)
    print(text, end="")


def build_parser():
    p = argparse.ArgumentParser(prog="bitjscc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train stage 1, stage 2 or both")
    t.add_argument("--config", required=True)
    t.add_argument("--stage", choices=["1", "2", "all"], default="all")
    t.add_argument("--mode", choices=["soft", "hard"], default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="evaluate checkpoints over the SNR grid")
    s.add_argument("--config", required=True)
    s.add_argument("--checkpoint", nargs="+", required=True)
    s.add_argument("--mode", default=None, help="soft, hard or soft,hard (default: config)")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("ber", help="Monte Carlo vs analytic link BER")
    b.add_argument("--modulation", default="qpsk")
    b.add_argument("--snr-grid", type=_grid, default=[0, 2, 4, 6, 8, 9])
    b.add_argument("--bits", type=int, default=1_000_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_ber)

    c = sub.add_parser("llr-check", help="compare exact LLRs with enumeration posteriors")
    c.add_argument("--modulation", default="16qam")
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float, default=1e-9)
    c.set_defaults(func=cmd_llr_check)

    o = sub.add_parser("overhead", help="parameter / FLOP overhead of the bit mapper")
    o.add_argument("--checkpoint", required=True)
    o.add_argument("--out", default=None)
    o.set_defaults(func=cmd_overhead)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (ConfigError, CheckpointError, TrainingDiverged, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
