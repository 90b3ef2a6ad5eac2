"""Versioned run configuration: INI sections whose values are Python literals.

Unknown sections and keys are errors, so a misspelled tolerance cannot silently
fall back to its default.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCHEMA_VERSION = 1
MODEL_KINDS = ("sphere", "fock", "perturbed")


@dataclass(frozen=True)
class ModelSection:
    kind: str = "sphere"
    E: float = 0.0
    z: tuple = (1.0,)  # sphere: point on S^2 (x1, x2, x3); otherwise complex coordinates
    hamiltonian: dict | None = None
    potential: dict | None = None


@dataclass(frozen=True)
class LadderSection:
    k: tuple = (64, 128, 256, 512)


@dataclass(frozen=True)
class Tolerances:
    ode_tol: float = 1e-12
    tail_tol: float = 1e-12
    return_tol: float = 1e-8
    quadrature_order: int = 40
    ratio_tol: float = 0.10
    exponent_tol: float = 0.10


@dataclass(frozen=True)
class WeylSection:
    eps: float = 0.0  # support of fhat; 0 picks a branch-dependent default
    shifts: tuple = (0.0, 0.5)
    alphas: int = 9
    n_max: int = 32
    q_samples: int = 201


@dataclass(frozen=True)
class TauberianSection:
    T: tuple = (5.0, 10.0, 20.0, 40.0)
    a: float = -3.0
    b: float = 3.0


@dataclass(frozen=True)
class AlgebraSection:
    n_pds: int = 500
    n_folland: int = 1000
    k_values: tuple = (1.0, 4.0, 16.0)
    lambdas: tuple = (0.0, 0.6931471805599453, 1.0)
    bpu_order: int = 60
    fixture: str = "none"  # "non_symplectic" injects a negative control


@dataclass(frozen=True)
class FlowSection:
    points: tuple = (0.3 + 0.1j,)
    t_max: float = 20.0
    samples: int = 101
    radii: tuple = (1e-3, 2.5e-3, 6.3e-3, 1.6e-2, 4e-2, 1e-1)
    a22: float = 0.05
    quartic: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    model: ModelSection = field(default_factory=ModelSection)
    ladder: LadderSection = field(default_factory=LadderSection)
    tolerances: Tolerances = field(default_factory=Tolerances)
    weyl: WeylSection = field(default_factory=WeylSection)
    tauberian: TauberianSection = field(default_factory=TauberianSection)
    algebra: AlgebraSection = field(default_factory=AlgebraSection)
    flow: FlowSection = field(default_factory=FlowSection)
    seed: int = 0
    threads: int = 1
    source_text: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("source_text")
        return d


_SECTIONS = {
    "model": ModelSection,
    "ladder": LadderSection,
    "tolerances": Tolerances,
    "weyl": WeylSection,
    "tauberian": TauberianSection,
    "algebra": AlgebraSection,
    "flow": FlowSection,
}
_RUN_KEYS = {"seed": int, "threads": int}


def _literal(section, key, text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {text!r}") from exc


def _coerce(section, key, value, default):
    kind = type(default)
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple))
        value = tuple(value) if ok else value
    elif default is None:
        ok = value is None or isinstance(value, dict)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(f"[{section}] {key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _validate(cfg: RunConfig):
    if cfg.model.kind not in MODEL_KINDS:
        raise ConfigError(f"[model] kind must be one of {MODEL_KINDS}, got {cfg.model.kind!r}")
    ks = cfg.ladder.k
    if not ks or any(not isinstance(k, int) or k < 1 for k in ks):
        raise ConfigError("[ladder] k must be a nonempty list of positive integers")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ConfigError("[ladder] k must be strictly increasing")
    for f in dataclasses.fields(Tolerances):
        if not getattr(cfg.tolerances, f.name) > 0:
            raise ConfigError(f"[tolerances] {f.name} must be positive")
    if any(not t > 0 for t in cfg.tauberian.T):
        raise ConfigError("[tauberian] T values must be positive")
    if cfg.tauberian.a > cfg.tauberian.b:
        raise ConfigError("[tauberian] a must not exceed b")
    if cfg.algebra.fixture not in ("none", "non_symplectic"):
        raise ConfigError("[algebra] fixture must be 'none' or 'non_symplectic'")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keys are case-sensitive (E)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not parser.has_section("meta"):
        raise ConfigError("missing [meta] section with schema_version")
    meta = dict(parser["meta"])
    unknown = set(meta) - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [meta]: {sorted(unknown)}")
    version = _literal("meta", "schema_version", meta.get("schema_version", "None"))
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    kwargs = {}
    for name in parser.sections():
        if name == "meta":
            continue
        if name == "run":
            for key, raw in parser[name].items():
                if key not in _RUN_KEYS:
                    raise ConfigError(f"unknown key in [run]: {key}")
                kwargs[key] = _coerce("run", key, _literal("run", key, raw), 0)
            continue
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        cls = _SECTIONS[name]
        defaults = cls()
        valid = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser[name].items():
            if key not in valid:
                raise ConfigError(f"unknown key in [{name}]: {key}")
            values[key] = _coerce(name, key, _literal(name, key, raw), getattr(defaults, key))
        kwargs[name] = cls(**values)
    cfg = RunConfig(source_text=text, **kwargs)
    _validate(cfg)
    return cfg


PRESETS = {
    "sphere": """
[meta]
schema_version = 1
[model]
kind = "sphere"
E = 0.0
z = (1.0, 0.0, 0.0)
[ladder]
k = [64, 128, 256, 512, 1024]
[weyl]
shifts = (0.0, 0.5)
""",
    "fock": """
[meta]
schema_version = 1
[model]
kind = "fock"
E = 100.0
z = (10.0,)
hamiltonian = {((1,), (1,)): 1.0}
[ladder]
k = [64, 128, 256, 512]
""",
    "offlevel": """
[meta]
schema_version = 1
[model]
kind = "sphere"
E = 0.0
z = (0.9797958971132712, 0.0, 0.2)
[ladder]
k = [128, 256, 512, 1024]
""",
    "algebra": """
[meta]
schema_version = 1
""",
    "flow": """
[meta]
schema_version = 1
[model]
kind = "perturbed"
E = 0.1
z = (0.3,)
""",
}


def load_config(spec: str | None, default_preset: str = "sphere") -> RunConfig:
    """Read a config file, or a built-in preset given as NAME or preset:NAME."""
    if spec is None:
        return parse_config(PRESETS[default_preset])
    name = spec[len("preset:"):] if spec.startswith("preset:") else spec
    path = Path(spec)
    if not spec.startswith("preset:") and path.is_file():
        try:
            return parse_config(path.read_text(encoding="utf-8"))
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not UTF-8 text: {exc}") from exc
    if name in PRESETS:
        return parse_config(PRESETS[name])
    raise ConfigError(f"no config file or preset named {spec!r}")
