"""Command line entry point: ``wavepacket-lab <experiment> --config <path> [--seed u64] [--out dir]``.

Exit status is 0 on success, 2 when the configuration is rejected and 3 when
the experiment fails while running.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {v}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 already; keep the message format ours
        self.print_usage(sys.stderr)
        print(f"wavepacket-lab: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wavepacket-lab", description="Run one named experiment and write CSV, SVG and a manifest.")
    p.add_argument("experiment", choices=EXPERIMENTS, metavar="experiment",
                   help="one of: " + ", ".join(EXPERIMENTS))
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=_u64, default=None, help="override the configured seed")
    p.add_argument("--out", default=None, help="output directory (default from config, else runs/<experiment>)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment, seed=args.seed, out=args.out)
    except ConfigError as exc:
        for field, msg in exc.errors:
            print(f"config error: {field}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    from .experiments import run

    man = run(cfg)
    if man.status != "ok":
        print(f"{cfg.experiment} failed: {man.error}", file=sys.stderr)
        print(f"partial outputs and manifest in {cfg.out_dir}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{cfg.experiment}: ok in {man.timings['wall_seconds']:.1f} s, {len(man.outputs)} files in {cfg.out_dir}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
