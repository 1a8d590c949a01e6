"""Command line entry point: ``xmodal <subcommand> [options]``.

Exit status: 0 on success, 1 on invalid arguments, configuration or data,
2 on any other failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import torch

from xmodal.config import load_config, parse_config
from xmodal.errors import ConfigError, DatasetError
from xmodal.harness import pipeline

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
DEFAULT_OUT = "xmodal_out"

log = logging.getLogger("xmodal")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration (see CONFIG_SCHEMA.md)")
    p.add_argument("--seed", type=int, help="master seed; overrides the config value")
    p.add_argument("--out", type=Path, help=f"run directory (default: $XMODAL_OUT or ./{DEFAULT_OUT})")
    p.add_argument("--data", type=Path, help="dataset directory (default: <out>/dataset)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xmodal", description="Corruption-robust cross-modal depth encoders and navigation policies.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-dataset", help="render a synthetic paired gray/depth dataset")
    _common(p)
    p.add_argument("--count", type=int, help="number of pairs (overrides dataset.count)")

    p = sub.add_parser("train-cmwae", help="train an encoder under a corruption scheme")
    _common(p)
    p.add_argument("--scheme", choices=("s1", "s2", "none"), default="s2")
    p.add_argument("--depth-only", action="store_true", help="train the single-branch depth-only ablation")
    p.add_argument("--epochs", type=int, help="overrides train.epochs")
    p.add_argument("--dump-masks", type=Path, help="write every training mask (RLE) to this directory")

    p = sub.add_parser("eval-cmwae", help="reconstruction sweep over corruption levels")
    _common(p)
    p.add_argument("--checkpoint", type=Path, action="append", help="encoder checkpoint (repeatable; default: all in --out)")

    p = sub.add_parser("train-policy", help="PPO on top of a frozen encoder")
    _common(p)
    p.add_argument("--encoder", type=Path, help="encoder checkpoint (default: <out>/cmwae_s2.safetensors)")
    p.add_argument("--name", default="policy", help="output name stem")
    p.add_argument("--iterations", type=int, help="overrides ppo.iterations")
    p.add_argument("--corrupt-fraction", type=float, help="overrides ppo.corrupt_fraction")

    p = sub.add_parser("eval-policy", help="outcome rates per condition and obstacle level")
    _common(p)
    p.add_argument("--policy", type=Path, help="policy checkpoint (default: <out>/policy.safetensors)")
    p.add_argument("--encoder", type=Path, help="encoder checkpoint (default: <out>/cmwae_s2.safetensors)")
    p.add_argument("--condition", choices=("clean", "corrupted"), action="append", help="repeatable; default both")
    p.add_argument("--levels", type=int, nargs="+", help="obstacle levels (overrides eval.policy_levels)")
    p.add_argument("--episodes", type=int, help="episodes per cell (overrides eval.episodes_per_cell)")
    p.add_argument("--name", help="row label in the report (default: policy file stem)")

    p = sub.add_parser("report", help="merge raw CSVs from run directories into tables")
    _common(p)
    p.add_argument("inputs", type=Path, nargs="*", help="run directories holding recon_raw.csv / policy_raw.csv")
    return parser


def _section_override(cfg, section: str, **values):
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    data = cfg.model_dump()
    data[section].update(values)
    return parse_config(data)


def run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, master_seed=args.seed)
    out = args.out or Path(os.environ.get("XMODAL_OUT", DEFAULT_OUT))
    out.mkdir(parents=True, exist_ok=True)
    data_dir = args.data or out / pipeline.DATASET_DIR
    torch.use_deterministic_algorithms(True)
    cmd = args.command

    if cmd == "gen-dataset":
        cfg = _section_override(cfg, "dataset", count=args.count)
        ds = pipeline.gen_dataset(cfg, data_dir, out)
        print(f"wrote {len(ds)} pairs to {data_dir}")
    elif cmd == "train-cmwae":
        cfg = _section_override(cfg, "train", epochs=args.epochs, depth_only=True if args.depth_only else None)
        path = pipeline.run_train_cmwae(cfg, args.scheme, data_dir, out, args.dump_masks)
        print(f"wrote {path}")
    elif cmd == "eval-cmwae":
        ckpts = args.checkpoint or pipeline.find_checkpoints(out)
        reports = pipeline.run_eval_cmwae(cfg, ckpts, data_dir, out)
        for name, rep in reports.items():
            for lv, m, s in rep.summary():
                print(f"{name} coverage {lv:.2f}: mse {m:.6f} ssim {s:.4f}")
    elif cmd == "train-policy":
        cfg = _section_override(cfg, "ppo", iterations=args.iterations, corrupt_fraction=args.corrupt_fraction)
        encoder = args.encoder or out / "cmwae_s2.safetensors"
        _require(encoder)
        result = pipeline.run_train_policy(cfg, encoder, out, args.name)
        print(f"wrote {result.checkpoint} (final level {result.level})")
    elif cmd == "eval-policy":
        cfg = _section_override(cfg, "eval", episodes_per_cell=args.episodes)
        policy = args.policy or out / "policy.safetensors"
        encoder = args.encoder or out / "cmwae_s2.safetensors"
        _require(policy)
        _require(encoder)
        conditions = tuple(args.condition) if args.condition else ("clean", "corrupted")
        report = pipeline.run_eval_policy(cfg, policy, encoder, out, conditions, args.levels, args.name)
        for (cond, lv) in report.cells:
            p = report.percentages(cond, lv)
            print(f"{cond} level {lv}: success {p['success']:.2f}% timeout {p['timeout']:.2f}% crash {p['crash']:.2f}%")
    elif cmd == "report":
        written = pipeline.merge_reports(args.inputs or [out], out)
        for p in written:
            print(p)
    return EXIT_OK


def _require(path: Path) -> None:
    if not path.exists():
        raise ConfigError(f"{path} does not exist")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(name)s %(message)s"
    )
    try:
        return run(args)
    except (ConfigError, DatasetError) as exc:
        print(f"xmodal {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported, mapped to an exit code
        log.debug("failure", exc_info=True)
        print(f"xmodal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
