"""INI-style experiment configuration.

Every run is fully described by one file::

    [data]
    path = fixtures/cora_like

    [run]
    profile = cora        ; dataset hyperparameter profile, see PROFILES
    variant = full        ; full | I | II
    repeats = 5
    seed = 0

    [split]
    source = sample       ; sample | file
    mode = per_class
    per_class = 20
    validation = 500

    [graphhop]
    T = 0.1
    alpha = 10
    ...

    [lp]
    alpha = 0.99

Keys left out take the profile value, then the built-in default.  Relative
``data.path``/``split.path`` values resolve against the config file's
directory.  :meth:`ExperimentConfig.canonical` prints the fully resolved
form, which parses back to an identical config.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .algorithm import GraphHopConfig
from .data import SplitSpec
from .errors import ValidationError
from .lp import LPConfig

VARIANTS = ("full", "I", "II")

CITATION = dict(hops=2, max_iter=100, batch_size=512)
LARGE = dict(hops=1, max_iter=200, batch_size=512)

# T, alpha, beta for the largest label rate of each dataset
PROFILES = {
    "default": {},
    "cora": dict(CITATION, T=0.1, alpha=10.0, beta=1.0),
    "citeseer": dict(CITATION, T=0.1, alpha=10.0, beta=1.0),
    "pubmed": dict(CITATION, T=0.1, alpha=1.0, beta=1.0),
    "reddit": dict(LARGE, T=1.0, alpha=1.0, beta=0.0),
    "ppi": dict(LARGE, T=1.0, alpha=1.0, beta=1.0),
    "amazon2m": dict(LARGE, T=1.0, alpha=100.0, beta=100.0),
}


class ConfigError(ValidationError):
    """Schema violation; ``field`` names the offending ``section.key``."""

    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class DataSection:
    path: str = ""
    name: str = ""


@dataclass
class RunSection:
    profile: str = "default"
    variant: str = "full"
    repeats: int = 5
    seed: int = 0


@dataclass
class SplitSection:
    source: str = "sample"
    path: str = ""
    mode: str = "per_class"
    per_class: int = 20
    fraction: float = 0.01
    validation: int = 500

    def spec(self, seed):
        return SplitSpec(self.mode, self.per_class, self.fraction, self.validation, seed)


@dataclass
class LPSection:
    alpha: float = 0.99
    max_iter: int = 1000
    tol: float = 1e-9

    def config(self):
        return LPConfig(self.alpha, self.max_iter, self.tol)


SECTIONS = {
    "data": DataSection,
    "run": RunSection,
    "split": SplitSection,
    "graphhop": GraphHopConfig,
    "lp": LPSection,
}


def _parse_value(raw, default, name):
    kind = type(default)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if default is None:
            # optional ints (init_hops); empty or "none" keeps the default
            return None if raw.lower() in ("", "none") else int(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        typename = "boolean" if isinstance(default, bool) else (
            "integer" if default is None else kind.__name__)
        raise ConfigError(name, f"expected {typename}, got {raw!r}") from None


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    run: RunSection = field(default_factory=RunSection)
    split: SplitSection = field(default_factory=SplitSection)
    graphhop: GraphHopConfig = field(default_factory=GraphHopConfig)
    lp: LPSection = field(default_factory=LPSection)
    base_dir: Path = field(default=Path("."), compare=False)

    @classmethod
    def from_string(cls, text, base_dir="."):
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                           interpolation=None)
        parser.optionxform = str  # keys are case sensitive (T vs t)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("<file>", str(exc).splitlines()[0]) from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(section, "unknown section")

        profile = parser.get("run", "profile", fallback="default").strip()
        if profile not in PROFILES:
            raise ConfigError("run.profile", f"unknown profile {profile!r}; "
                              f"choose from {sorted(PROFILES)}")
        built = {}
        for name, klass in SECTIONS.items():
            defaults = {f.name: _default_of(f) for f in fields(klass)}
            if name == "graphhop":
                defaults.update(PROFILES[profile])
            values = dict(defaults)
            if parser.has_section(name):
                for key, raw in parser.items(name):
                    if key not in defaults:
                        raise ConfigError(f"{name}.{key}", "unknown key")
                    values[key] = _parse_value(raw, defaults[key], f"{name}.{key}")
            try:
                built[name] = klass(**values)
            except ValidationError as exc:
                raise ConfigError(name, str(exc)) from None
        cfg = cls(**built, base_dir=Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
        return cls.from_string(text, base_dir=path.parent)

    def validate(self):
        if self.run.variant not in VARIANTS:
            raise ConfigError("run.variant", f"must be one of {VARIANTS}")
        if self.run.repeats < 1:
            raise ConfigError("run.repeats", "must be >= 1")
        if self.run.seed < 0:
            raise ConfigError("run.seed", "must be >= 0")
        if self.split.source not in ("sample", "file"):
            raise ConfigError("split.source", "must be 'sample' or 'file'")
        try:
            self.split.spec(0)
            self.lp.config()
        except ValidationError as exc:
            raise ConfigError("split" if "split" in str(exc) or "fraction" in str(exc)
                              or "validation" in str(exc) else "lp", str(exc)) from None

    def data_path(self):
        if not self.data.path:
            raise ConfigError("data.path", "no dataset path configured")
        p = expand_path(self.data.path)
        return p if p.is_absolute() else self.base_dir / p

    def split_path(self):
        if not self.split.path:
            return self.data_path() / "split.json"
        p = expand_path(self.split.path)
        return p if p.is_absolute() else self.base_dir / p

    def graphhop_config(self, seed):
        return dataclasses.replace(self.graphhop, seed=seed)

    def sections(self):
        return {name: getattr(self, name) for name in SECTIONS}

    def canonical(self):
        """Fully resolved config text; parsing it back yields an equal config."""
        out = []
        for name, sec in self.sections().items():
            out.append(f"[{name}]")
            for f in fields(sec):
                out.append(f"{f.name} = {_format_value(getattr(sec, f.name))}")
            out.append("")
        return "\n".join(out)

    def override(self, key, value):
        """Set ``section.key`` (or a bare key, searched in graphhop, split, lp, run)."""
        section, name = _locate(self, key)
        sec = getattr(self, section)
        current = getattr(sec, name)
        if isinstance(value, str):
            value = _parse_value(value, current, f"{section}.{name}")
        try:
            new = dataclasses.replace(sec, **{name: value})
        except ValidationError as exc:
            raise ConfigError(f"{section}.{name}", str(exc)) from None
        cfg = dataclasses.replace(self, **{section: new})
        cfg.validate()
        return cfg


_VAR = re.compile(r"\$\{(\w+)(?::-([^}]*))?\}")


def expand_path(raw):
    """Expand ``${VAR}`` and ``${VAR:-fallback}`` in a path value.

    Environment variables may relocate data but never change numerics, so
    they are honoured only in path keys.
    """
    def sub(m):
        value = os.environ.get(m.group(1))
        if value:
            return value
        if m.group(2) is not None:
            return m.group(2)
        raise ConfigError("path", f"environment variable {m.group(1)} is not set "
                          "and has no fallback")
    return Path(os.path.expanduser(_VAR.sub(sub, raw)))


def _default_of(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    raise TypeError(f"field {f.name} has no default")


def _locate(cfg, key):
    if "." in key:
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(key, "unknown section")
        if name not in {f.name for f in fields(SECTIONS[section])}:
            raise ConfigError(key, "unknown key")
        return section, name
    for section in ("graphhop", "split", "lp", "run"):
        if key in {f.name for f in fields(SECTIONS[section])}:
            return section, key
    raise ConfigError(key, "unknown key")
