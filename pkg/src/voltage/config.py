"""Pipeline configuration: one INI section per stage dataclass."""
from __future__ import annotations

import configparser
import dataclasses
import enum
import io
import types
import typing
from dataclasses import dataclass, field

from .annotate import ClusteringConfig
from .augment import AugmentConfig
from .gfrs import GfrsConfig
from .postrules import DEFAULT_RULES
from .segmentation import SegmentationConfig
from .supcon import LossConfig


@dataclass(frozen=True)
class PathsConfig:
    pages: str = ""
    charset: str = ""
    script: str = ""  # script model INI; default: <charset>/../script.ini
    dictionary: str = ""


@dataclass(frozen=True)
class SynthConfig:
    pages: int = 5
    lines: int = 18
    words_per_line: int = 9
    noise: float = 0.0
    overlap: float = 0.0
    jitter: int = 0
    charset_seed: int = 1
    counts: tuple[int, ...] = (33, 11, 10, 10)
    prototypes_per_label: int = 5


PRESETS = {
    "clean": dict(noise=0.0, overlap=0.0, jitter=0),
    "paper-like": dict(noise=0.002, overlap=0.5, jitter=1),
}


@dataclass(frozen=True)
class RulesConfig:
    enabled: tuple[str, ...] = tuple(sorted(DEFAULT_RULES, key=lambda r: int(r[1:])))
    alternatives: int = 3


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    jobs: int = 1
    paths: PathsConfig = field(default_factory=PathsConfig)
    synthetic: SynthConfig = field(default_factory=SynthConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    gfrs: GfrsConfig = field(default_factory=GfrsConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    augment: AugmentConfig = field(default_factory=lambda: AugmentConfig(copies_per_symbol=4))
    training: LossConfig = field(default_factory=LossConfig)
    postrules: RulesConfig = field(default_factory=RulesConfig)

    def seeded(self, seed: int) -> "PipelineConfig":
        """Same config with every stage seed set to ``seed``."""
        return dataclasses.replace(
            self, seed=seed,
            clustering=dataclasses.replace(self.clustering, seed=seed),
            augment=dataclasses.replace(self.augment, seed=seed),
            training=dataclasses.replace(self.training, seed=seed),
        )


SECTIONS = ("paths", "synthetic", "segmentation", "gfrs", "clustering", "augment", "training", "postrules")
# fields that are derived per run rather than configured
_SKIP = {("clustering", "k")}


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(hint, text: str):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if text.strip() == "":
            return None
        return _parse(args[0], text)
    if origin is tuple:
        inner = typing.get_args(hint)[0]
        return tuple(_parse(inner, t) for t in text.split())
    if hint is bool:
        low = text.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        return hint(text.strip())
    if hint in (int, float, str):
        return hint(text.strip()) if hint is not str else text.strip()
    raise TypeError(f"unsupported config type {hint}")


def _section_items(obj):
    hints = typing.get_type_hints(type(obj))
    for f in dataclasses.fields(obj):
        yield f.name, hints[f.name], getattr(obj, f.name)


def to_ini(cfg: PipelineConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["pipeline"] = {"seed": str(cfg.seed), "jobs": str(cfg.jobs)}
    for sec in SECTIONS:
        cp[sec] = {name: _format(val) for name, _, val in _section_items(getattr(cfg, sec))
                   if (sec, name) not in _SKIP}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def from_ini(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse INI text over ``base`` (defaults); unknown keys are errors."""
    base = base or PipelineConfig()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"malformed config: {exc}") from None
    unknown = set(cp.sections()) - set(SECTIONS) - {"pipeline"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    top = {}
    if cp.has_section("pipeline"):
        for key, val in cp["pipeline"].items():
            if key not in ("seed", "jobs"):
                raise ValueError(f"unknown key pipeline.{key}")
            top[key] = int(val)
    parts = {}
    for sec in SECTIONS:
        obj = getattr(base, sec)
        if not cp.has_section(sec):
            continue
        hints = {name: hint for name, hint, _ in _section_items(obj)}
        changes = {}
        for key, val in cp[sec].items():
            if key not in hints or (sec, key) in _SKIP:
                raise ValueError(f"unknown key {sec}.{key}")
            changes[key] = _parse(hints[key], val)
        parts[sec] = dataclasses.replace(obj, **changes)
    return dataclasses.replace(base, **top, **parts)


def emit_default() -> str:
    head = ("# voltage pipeline configuration; every key shows its default.\n"
            "# Empty values mean 'unset' (derived automatically).\n")
    return head + to_ini(PipelineConfig())
