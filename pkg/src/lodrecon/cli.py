"""Command line interface: ``lodrecon reconstruct`` and ``lodrecon synth``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, load_config, parse_class_map
from .errors import ConfigError, ParseError, ReconstructionError
from .synth import CLEAN_KINDS, KINDS, write_corpus

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2

logger = logging.getLogger("lodrecon")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lodrecon", description="Building reconstruction in LoD1.2, LoD1.3 and LoD2.2")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconstruct", help="reconstruct all buildings of a footprint file")
    r.add_argument("--footprints", type=Path, help="GeoJSON FeatureCollection of Polygon footprints")
    r.add_argument("--points", type=Path, help="ASCII 'x y z class' point file")
    r.add_argument("--out", type=Path, help="output directory")
    r.add_argument("--config", type=Path, help="INI configuration file")
    r.add_argument("--workers", type=int, help="number of worker processes")
    r.add_argument("--debug-partition", action="store_true", help="dump initial and final roof partitions as GeoJSON")
    r.add_argument("--seed-synthetic", type=int, metavar="N",
                   help="generate N synthetic buildings into <out>/input and reconstruct them")
    r.add_argument("--class-map", help="point class codes, e.g. 'ground=2,building=6'")

    s = sub.add_parser("synth", help="write a synthetic corpus with ground truth")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("-n", type=int, default=100, help="number of buildings")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma", type=float, default=0.05, help="z noise in metres")
    s.add_argument("--kinds", default=",".join(KINDS), help=f"comma separated subset of {','.join(KINDS)}")
    return p


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    changes = {}
    if args.footprints:
        changes["footprints"] = args.footprints
    if args.points:
        changes["points"] = args.points
    if args.out:
        changes["out_dir"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.debug_partition:
        changes["debug_partition"] = True
    if args.class_map:
        changes["class_map"] = {**cfg.class_map, **parse_class_map(args.class_map)}
    return dataclasses.replace(cfg, **changes)


def _reconstruct(args) -> int:
    from .pipeline import run

    cfg = _config_from_args(args)
    if args.seed_synthetic is not None:
        if cfg.out_dir is None:
            raise ConfigError("--seed-synthetic needs --out")
        paths = write_corpus(Path(cfg.out_dir) / "input", args.seed_synthetic, seed=0, kinds=CLEAN_KINDS)
        cfg = dataclasses.replace(cfg, footprints=paths["footprints"], points=paths["points"])
    report = run(cfg)
    c = report.counts
    print(f"{len(report.buildings)} buildings: {c['OK']} OK, {c['flagged']} flagged, {c['failed']} failed "
          f"in {report.seconds:.1f} s")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def _synth(args) -> int:
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise ConfigError(f"unknown kinds: {', '.join(bad) or '(none)'}")
    if args.n < 0:
        raise ConfigError("-n must be >= 0")
    paths = write_corpus(args.out, args.n, args.seed, kinds, args.sigma)
    print(f"wrote {args.n} buildings to {paths['footprints'].parent}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return _synth(args)
        return _reconstruct(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ParseError, ReconstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
