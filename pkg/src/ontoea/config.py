"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Every hyperparameter is a key of its own. Other keys: ``data``, ``out``,
``word_vectors``, ``si_init``, ``shared_ontology``, ``tau``, ``csls_k``,
``split``, ``split_seed``, ``eval_split``, ``candidates``. Grid-search lists
are given as ``grid.<hyperparameter> = v1, v2, ...``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import HyperParams

HP_TYPES = HyperParams.field_types()

# published search spaces; keys accepted by ``--grid KEY`` without values
GRID_SPACES: dict[str, tuple] = {
    "learning_rate": (1e-3, 5e-3, 1e-2, 5e-2),
    "batch_entity": (4000, 4500, 5000),
    "batch_onto": (32, 64, 128),
    **{f"gamma1_{x}": (0.01, 0.02, 0.03) for x in "eom"},
    **{f"gamma2_{x}": (1.0, 2.0, 3.0) for x in "eom"},
    **{f"alpha_{x}": (0.1, 0.2, 0.3) for x in "eom"},
    "lambda1": (0.0, 1.0, 2.0, 3.0, 4.0, 5.0),
    "lambda2": (0.0, 1.0, 2.0, 3.0, 4.0, 5.0),
    "lambda3": (0.0, 1.0, 2.0, 3.0, 4.0, 5.0),
    "beta": (0.3, 0.4, 0.5, 0.6, 0.7),
}


@dataclass
class RunConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    data: str | None = None
    out: str | None = None
    word_vectors: str | None = None
    si_init: bool = False
    shared_ontology: bool | None = None  # None: detect from the data directory
    tau: float = 0.9
    csls_k: int = 10
    split: tuple[float, float, float] = (0.2, 0.1, 0.7)
    split_seed: int = 0
    eval_split: str = "test"
    candidates: str = "split"
    grid: dict[str, list] = field(default_factory=dict)

    def grid_points(self) -> list[HyperParams]:
        """Every combination of the grid lists (just ``hp`` without a grid)."""
        if not self.grid:
            return [self.hp]
        keys = sorted(self.grid)
        return [self.hp.replace(**dict(zip(keys, combo))) for combo in itertools.product(*(self.grid[k] for k in keys))]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_bool(text: str) -> bool | None:
    return None if text.strip().lower() in ("auto", "none", "") else _parse_bool(text)


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.replace(":", ",").split(",")]
    if len(parts) != 3:
        raise ValueError("expected three comma-separated fractions")
    return tuple(parts)


def _choice(*options):
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return value
    return parse


def _hp_parser(name: str):
    kind = HP_TYPES[name]
    if kind is int:
        return lambda text: int(text.strip())
    return lambda text: float(text.strip())


OTHER_KEYS = {
    "data": str.strip,
    "out": str.strip,
    "word_vectors": str.strip,
    "si_init": _parse_bool,
    "shared_ontology": _optional_bool,
    "tau": float,
    "csls_k": int,
    "split": _parse_split,
    "split_seed": int,
    "eval_split": _choice("train", "valid", "test"),
    "candidates": _choice("split", "all"),
}
KNOWN_KEYS = tuple(HP_TYPES) + tuple(OTHER_KEYS)


def parse_lines(lines, source: str = "<config>") -> tuple[dict[str, str], list[str]]:
    """Raw ``key -> value`` strings plus syntax errors (not raised)."""
    values: dict[str, str] = {}
    errors = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected key = value")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values, errors


def parse_grid_values(key: str, text: str | None) -> list:
    if text is None or text.strip() == "":
        if key not in GRID_SPACES:
            raise ValueError(f"no published search space for {key}; give explicit values")
        return list(GRID_SPACES[key])
    parse = _hp_parser(key)
    return [parse(v) for v in text.split(",") if v.strip()]


PATH_KEYS = ("data", "out", "word_vectors")


def resolve_paths(values: dict[str, str], base_dir: Path) -> dict[str, str]:
    """Make relative path values relative to ``base_dir`` (the config file's directory)."""
    out = dict(values)
    for key in PATH_KEYS:
        if out.get(key) and not Path(out[key]).is_absolute():
            out[key] = str(base_dir / out[key])
    return out


def build_config(values: dict[str, str]) -> RunConfig:
    """Validate raw values; every problem is collected before raising one ``ConfigError``."""
    errors = []
    hp_values, other, grid = {}, {}, {}
    for key, text in values.items():
        try:
            if key.startswith("grid."):
                name = key[len("grid."):]
                if name not in HP_TYPES:
                    errors.append(f"unknown grid key: {name}")
                    continue
                grid[name] = parse_grid_values(name, text)
                if not grid[name]:
                    errors.append(f"empty grid for {name}")
            elif key in HP_TYPES:
                hp_values[key] = _hp_parser(key)(text)
            elif key in OTHER_KEYS:
                other[key] = OTHER_KEYS[key](text)
            else:
                errors.append(f"unknown key: {key}")
        except ValueError as exc:
            errors.append(f"bad value for {key}: {text!r} ({exc})")

    hp = None
    try:
        hp = HyperParams(**hp_values)
    except ConfigError as exc:
        errors.extend(str(exc).split("; "))
    if hp is not None:
        for name, options in grid.items():
            for value in options:
                errors.extend(f"grid.{name}={value}: {p}" for p in _point_problems(hp, name, value))
    if "tau" in other and not 0.0 <= other["tau"] <= 1.0:
        errors.append("tau must lie in [0, 1]")
    if "csls_k" in other and other["csls_k"] < 1:
        errors.append("csls_k must be >= 1")
    if "split" in other:
        s = other["split"]
        if any(v < 0 for v in s) or abs(sum(s) - 1.0) > 1e-6:
            errors.append("split fractions must be non-negative and sum to 1")
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(hp=hp, grid=grid, **other)


def _point_problems(hp: HyperParams, name: str, value) -> list[str]:
    try:
        hp.replace(**{name: value})
    except ConfigError as exc:
        return str(exc).split("; ")
    return []


def _read(path: Path) -> tuple[dict[str, str], list[str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    values, errors = parse_lines(text.splitlines(), str(path))
    return resolve_paths(values, path.parent), errors


def read_config_lines(path: str | Path) -> dict[str, str]:
    """Raw values of a config file; syntax errors raise ``ConfigError``."""
    values, errors = _read(Path(path))
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return values


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read a config file (optional) and apply string overrides on top."""
    values: dict[str, str] = {}
    errors: list[str] = []
    if path is not None:
        values, errors = _read(Path(path))
    values.update(overrides or {})
    try:
        cfg = build_config(values)
    except ConfigError as exc:
        if errors:
            raise ConfigError(str(exc) + "\n  " + "\n  ".join(errors)) from None
        raise
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg.hp, f.name)}" for f in fields(HyperParams)]
    for key in OTHER_KEYS:
        value = getattr(cfg, key)
        if key == "shared_ontology" and value is None:
            value = "auto"
        elif value is None:
            continue
        elif key == "split":
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    for key, options in sorted(cfg.grid.items()):
        lines.append(f"grid.{key} = {','.join(str(v) for v in options)}")
    return "\n".join(lines) + "\n"
