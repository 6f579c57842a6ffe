"""Pipeline configuration: INI sections mapped onto dataclasses.

Every key is optional except where the data source needs it.  Flags given on
the command line are applied with :meth:`PipelineConfig.override` using
``section.key`` names and always win over the file.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError
from .evaluation import DEFAULT_PAIR_CAP
from .group import GROUP_KINDS, GroupSpec
from .kernels import KERNEL_KINDS, POOLING_MODES
from .mmif import TEMPLATE_MODES
from .svm import DEFAULT_MAX_ITER, DEFAULT_STOP_TOL

DATA_SOURCES = ("generate", "load", "ingest")
FEATURE_KINDS = ("invariant", "baseline")


def _opt_float(v):
    return None if v in (None, "", "none", "auto") else float(v)


def _opt_int(v):
    return None if v in (None, "", "none", "auto") else int(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (tuple, list)):
        return tuple(float(x) for x in v)
    return tuple(float(Fraction(x.strip())) for x in str(v).split(",") if x.strip())


@dataclass
class GroupSection:
    kind: str = "cyclic_shift"
    dim: int = 64
    height: int | None = None
    width: int | None = None
    max_order: int | None = None
    matrix_file: str | None = None

    def spec(self, base_dir=None) -> GroupSpec:
        section = {k: str(v) for k, v in asdict(self).items() if v is not None}
        return GroupSpec.from_config(section, base_dir=base_dir)


@dataclass
class KernelSection:
    kind: str = "rbf"
    gamma: float | None = None  # None: 1 / (d * var) fitted on the labeled split
    degree: int = 2
    pooling: str = "mean"
    features: str = "invariant"
    template_mode: str = "explicit_orbits"


@dataclass
class DataSection:
    source: str = "generate"
    num_classes: int = 60
    samples_per_class_labeled: int = 1
    samples_per_class_test: int = 4
    noise_sigma: float = 0.0
    seed: int = 0
    split_fractions: tuple = (1 / 3, 1 / 3, 1 / 3)
    labeled_transformed: bool = False
    path: str | None = None
    matrix: str | None = None
    labels: str | None = None
    manifest: str | None = None


@dataclass
class TaskSection:
    K: int = 32
    subjects_per_task: int | None = None
    positives_per_task: int | None = None
    seed: int = 0


@dataclass
class SolverSection:
    C: float | None = None
    stop_tol: float = DEFAULT_STOP_TOL
    max_iterations: int = DEFAULT_MAX_ITER
    use_bias: bool = False
    standardize: bool = False


@dataclass
class EvalSection:
    far_targets: tuple = (0.001, 0.01, 0.1)
    pair_cap: int = DEFAULT_PAIR_CAP


@dataclass
class OutputSection:
    dir: str = "out"


_SECTIONS = {"group": GroupSection, "kernel": KernelSection, "data": DataSection, "tasks": TaskSection,
             "solver": SolverSection, "eval": EvalSection, "output": OutputSection}

_CASTS = {"int": int, "float": float, "str": str, "bool": _bool, "tuple": _floats,
          "int | None": _opt_int, "float | None": _opt_float, "str | None": lambda v: v or None}


def _cast(cls, key, value):
    types = {f.name: f.type for f in fields(cls)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r} in [{_name_of(cls)}]")
    try:
        return _CASTS[types[key]](value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"[{_name_of(cls)}] {key} = {value!r}: {exc}") from None


def _name_of(cls):
    return next(k for k, v in _SECTIONS.items() if v is cls)


@dataclass
class PipelineConfig:
    group: GroupSection = field(default_factory=GroupSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    data: DataSection = field(default_factory=DataSection)
    tasks: TaskSection = field(default_factory=TaskSection)
    solver: SolverSection = field(default_factory=SolverSection)
    eval: EvalSection = field(default_factory=EvalSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: str | None = None  # relative paths in the file resolve against this

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        cfg = cls(base_dir=str(path.resolve().parent))
        for name in cp.sections():
            if name not in _SECTIONS:
                raise ConfigError(f"unknown config section [{name}]")
            for key, value in cp[name].items():
                cfg.override(f"{name}.{key}", value)
        return cfg

    def override(self, dotted: str, value) -> None:
        name, _, key = dotted.partition(".")
        if name not in _SECTIONS:
            raise ConfigError(f"unknown config section {name!r}")
        section = getattr(self, name)
        setattr(section, key, _cast(type(section), key, value))

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() or self.base_dir is None else Path(self.base_dir) / p

    def validate(self) -> None:
        k, d = self.kernel, self.data
        if self.group.kind not in GROUP_KINDS:
            raise ConfigError(f"unknown group kind {self.group.kind!r}")
        if k.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {k.kind!r}")
        if k.pooling not in POOLING_MODES:
            raise ConfigError(f"unknown pooling {k.pooling!r}")
        if k.features not in FEATURE_KINDS:
            raise ConfigError(f"kernel.features must be one of {FEATURE_KINDS}")
        if k.template_mode not in TEMPLATE_MODES:
            raise ConfigError(f"kernel.template_mode must be one of {TEMPLATE_MODES}")
        if d.source not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}")
        if d.source == "ingest" and k.template_mode == "base_plus_group":
            raise ConfigError("ingested embeddings have no computable group; use template_mode = explicit_orbits")
        need = {"load": ("path",), "ingest": ("matrix", "labels", "manifest")}.get(d.source, ())
        for key in need:
            p = getattr(d, key)
            if not p:
                raise ConfigError(f"data.source = {d.source} needs data.{key}")
            if not self.resolve(p).exists():
                raise ConfigError(f"data.{key} does not exist: {self.resolve(p)}")
        if self.tasks.K < 1:
            raise ConfigError("tasks.K must be >= 1")
        if self.solver.C is not None and self.solver.C <= 0:
            raise ConfigError("solver.C must be positive")
        if self.solver.stop_tol <= 0:
            raise ConfigError("solver.stop_tol must be positive")
        if any(not 0.0 <= t <= 1.0 for t in self.eval.far_targets):
            raise ConfigError("eval.far_targets must lie in [0, 1]")

    def snapshot(self) -> dict:
        """Config as plain data, minus the output location (so reruns elsewhere match)."""
        out = {}
        for name in _SECTIONS:
            if name == "output":
                continue
            out[name] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(getattr(self, name)).items()}
        return out

    def to_ini(self, include_output: bool = True) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name in _SECTIONS:
            if name == "output" and not include_output:
                continue
            items = {}
            for k, v in asdict(getattr(self, name)).items():
                if v is None:
                    continue
                items[k] = ",".join(repr(float(x)) for x in v) if isinstance(v, tuple) else str(v)
            cp[name] = items
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()
