"""Pipeline configuration and its INI file format.

Example::

    [input]
    footprints = footprints.geojson
    points = points.xyzc

    [output]
    directory = out

    [run]
    workers = 4

    [classes]
    ground = 2
    building = 6

    [detection]
    min_points = 15
    dist_epsilon = 0.15
    normal_angle_max = 20
    k_neighbors = 10
    wall_angle_min = 75

    [lines]
    alpha = 0.5
    angle_tol = 5
    dist_tol = 0.5
    adjacency_gap = 0.75
    min_loop_area = 2.0

    [optimization]
    lambda = 1.0
    solver = auto

    [lod]
    lod13_threshold = 3.0
    roof_percentile = 70
    ground_percentile = 5
    ground_buffer = 4.0

    [tiling]
    max_per_leaf = 3500

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .lines import LineConfig
from .partition import EnergyConfig
from .planes import DetectConfig


@dataclass(frozen=True)
class LodConfig:
    lod13_threshold: float = 3.0
    roof_percentile: float = 70.0
    ground_percentile: float = 5.0
    ground_buffer: float = 4.0

    def __post_init__(self):
        if self.lod13_threshold < 0:
            raise ValueError("lod13_threshold must be >= 0")
        for name in ("roof_percentile", "ground_percentile"):
            if not 0 < getattr(self, name) <= 100:
                raise ValueError(f"{name} must lie in (0, 100]")
        if self.ground_buffer < 0:
            raise ValueError("ground_buffer must be >= 0")


@dataclass(frozen=True)
class TilingConfig:
    max_per_leaf: int = 3500

    def __post_init__(self):
        if self.max_per_leaf < 1:
            raise ValueError("max_per_leaf must be >= 1")


@dataclass(frozen=True)
class ReconstructionConfig:
    """Everything a single building reconstruction needs."""

    detection: DetectConfig = field(default_factory=DetectConfig)
    lines: LineConfig = field(default_factory=LineConfig)
    optimization: EnergyConfig = field(default_factory=EnergyConfig)
    lod: LodConfig = field(default_factory=LodConfig)


@dataclass(frozen=True)
class PipelineConfig:
    footprints: Path | None = None
    points: Path | None = None
    out_dir: Path | None = None
    workers: int = 1
    debug_partition: bool = False
    class_map: dict = field(default_factory=lambda: {"ground": 2, "building": 6})
    recon: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    tiling: TilingConfig = field(default_factory=TilingConfig)

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("worker_count must be >= 1")

    def check_paths(self) -> None:
        for name in ("footprints", "points"):
            p = getattr(self, name)
            if p is None:
                raise ConfigError(f"no {name} path given")
            if not Path(p).exists():
                raise FileNotFoundError(f"{name} file not found: {p}")
        if self.out_dir is None:
            raise ConfigError("no output directory given")


# INI key -> dataclass field, where they differ
_RENAMES = {"optimization": {"lambda": "lam"}}


def _coerce(cls, section: str, items: dict[str, str]):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in items.items():
        name = _RENAMES.get(section, {}).get(key, key)
        if name not in fields:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        default = fields[name].default
        try:
            if isinstance(default, bool):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                value = int(raw)
            elif isinstance(default, float):
                value = float(raw)
            else:
                value = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


_SECTIONS = {"input", "output", "run", "classes", "detection", "lines", "optimization", "lod", "tiling"}


def load_config(path) -> PipelineConfig:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(parser.sections()) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")

    def sec(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    base = path.parent

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else base / p

    inp, outp, run = sec("input"), sec("output"), sec("run")
    classes = {"ground": 2, "building": 6}
    for k, v in sec("classes").items():
        if k not in classes:
            raise ConfigError(f"unknown key {k!r} in section [classes]")
        try:
            classes[k] = int(v)
        except ValueError as exc:
            raise ConfigError(f"[classes] {k}: cannot parse {v!r}") from exc
    try:
        workers = int(run.get("workers", 1))
    except ValueError as exc:
        raise ConfigError("[run] workers must be an integer") from exc
    recon = ReconstructionConfig(
        detection=_coerce(DetectConfig, "detection", sec("detection")),
        lines=_coerce(LineConfig, "lines", sec("lines")),
        optimization=_coerce(EnergyConfig, "optimization", sec("optimization")),
        lod=_coerce(LodConfig, "lod", sec("lod")),
    )
    return PipelineConfig(
        footprints=resolve(inp.get("footprints")),
        points=resolve(inp.get("points")),
        out_dir=resolve(outp.get("directory")),
        workers=workers,
        debug_partition=run.get("debug_partition", "false").strip().lower() in ("1", "true", "yes", "on"),
        class_map=classes,
        recon=recon,
        tiling=_coerce(TilingConfig, "tiling", sec("tiling")),
    )


def parse_class_map(text: str) -> dict[str, int]:
    """Parse ``ground=2,building=6`` style mappings."""
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, _, val = item.partition("=")
        key = key.strip().lower()
        if key not in ("ground", "building") or not val.strip().lstrip("-").isdigit():
            raise ConfigError(f"bad class mapping {item!r}")
        out[key] = int(val)
    return out
