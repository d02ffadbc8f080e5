"""Scenario configuration and its flat ``key = value`` file format.

A config file holds one ``key = value`` pair per line.  Blank lines and lines
starting with ``#`` are ignored.  Recognised keys mirror the CLI flags::

    scenario = grossman-accumulation
    dim = 16
    step = 1e-3
    t-end = 5
    seed = 42
    out = results/accumulation.csv
    tol.conjugate_instant = 1e-4

``t_end`` is accepted as a spelling of ``t-end``.  ``tol.<name>`` entries
override the scenario's default tolerance for the observable ``<name>``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..errors import ConfigError

SCENARIOS = (
    "sphere-conjugate",
    "constant-curvature-oracle",
    "grossman-accumulation",
    "grossman-epilimit-sweep",
    "grossman-distance-sweep",
    "clifford-displacement",
    "identity-suite",
)

GROSSMAN_SCENARIOS = frozenset(s for s in SCENARIOS if s.startswith("grossman"))

_KEY_ALIASES = {"t_end": "t-end", "output": "out", "output_path": "out", "dims": "dim"}
_KEYS = ("scenario", "dim", "step", "t-end", "seed", "out")


def parse_dims(text) -> tuple[int, ...]:
    """``"8"`` or ``"4,8,16"`` (also an int or a sequence) to a tuple of ints."""
    if isinstance(text, int):
        items = [text]
    elif isinstance(text, str):
        items = [s for s in text.replace(" ", "").split(",") if s]
    else:
        items = list(text)
    try:
        dims = tuple(int(s) for s in items)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse dimension list {text!r}") from None
    if not dims:
        raise ConfigError("empty dimension list")
    return dims


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    dims: tuple[int, ...]
    step: float = 1e-3
    t_end: float | None = None
    seed: int = 42
    output_path: str | None = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dims", parse_dims(self.dims))
        object.__setattr__(self, "tolerances",
                           {str(k): float(v) for k, v in sorted(self.tolerances.items())})
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; "
                              f"choose one of {', '.join(SCENARIOS)}")
        if any(b <= a for a, b in zip(self.dims, self.dims[1:])):
            raise ConfigError(f"dimension list must be strictly increasing, got {self.dims}")
        low = 3 if self.scenario in GROSSMAN_SCENARIOS else 2
        if min(self.dims) < low:
            raise ConfigError(f"{self.scenario} needs dim >= {low}")
        if not self.step > 0:
            raise ConfigError("step must be positive")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigError("t-end must be positive")
        for name, tol in self.tolerances.items():
            if not tol >= 0:
                raise ConfigError(f"tolerance {name} must be non-negative")

    def with_overrides(self, **kw) -> "ScenarioConfig":
        """Return a copy with the non-``None`` keyword values replaced."""
        kw = {k: v for k, v in kw.items() if v is not None}
        if "tolerances" in kw:
            kw["tolerances"] = {**self.tolerances, **kw["tolerances"]}
        return replace(self, **kw)

    def to_text(self, include_output: bool = True) -> str:
        """Canonical flat serialization (fixed key order, shortest float repr)."""
        lines = [f"scenario = {self.scenario}",
                 f"dim = {','.join(str(d) for d in self.dims)}",
                 f"step = {self.step!r}"]
        if self.t_end is not None:
            lines.append(f"t-end = {self.t_end!r}")
        lines.append(f"seed = {self.seed}")
        if include_output and self.output_path is not None:
            lines.append(f"out = {self.output_path}")
        lines += [f"tol.{k} = {v!r}" for k, v in self.tolerances.items()]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        """Short digest of everything that affects the numbers (not the output path)."""
        return hashlib.sha256(self.to_text(include_output=False).encode()).hexdigest()[:12]


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` text into a dict of raw strings (``tol.*`` nested)."""
    raw: dict = {}
    tols: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key.startswith("tol."):
            tols[key[4:]] = value
        elif key in _KEYS:
            raw[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if tols:
        raw["tolerances"] = tols
    return raw


def build_config(raw: dict) -> ScenarioConfig:
    """Turn a raw key/value mapping (file or CLI) into a validated config."""
    if "scenario" not in raw or raw["scenario"] is None:
        raise ConfigError("missing required key 'scenario'")
    if "dim" not in raw or raw["dim"] is None:
        raise ConfigError("missing required key 'dim'")
    try:
        kw = dict(scenario=str(raw["scenario"]), dims=parse_dims(raw["dim"]))
        if raw.get("step") is not None:
            kw["step"] = float(raw["step"])
        if raw.get("t-end") is not None:
            kw["t_end"] = float(raw["t-end"])
        if raw.get("seed") is not None:
            kw["seed"] = int(raw["seed"])
        if raw.get("out") is not None:
            kw["output_path"] = str(raw["out"])
        kw["tolerances"] = {k: float(v) for k, v in raw.get("tolerances", {}).items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ScenarioConfig(**kw)


def load_config(path) -> dict:
    """Read a config file into the raw mapping accepted by :func:`build_config`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text)


def parse_config(text: str) -> ScenarioConfig:
    return build_config(parse_config_text(text))
