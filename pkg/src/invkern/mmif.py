"""Max-margin invariant features.

Pipeline: an unlabeled template set (with its group orbits) defines an
invariant feature map ``l(x)_i = pool_g k(x, g t_i)``; K binary linear SVMs
are trained on ``l(X)`` for random class-subset tasks; the MMIF feature of a
query is ``<l(x), w_k>`` for each SVM weight vector ``w_k``.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, FormatError, ValidationError
from .formats import read_matrix, sha256_array, write_matrix
from .group import FiniteUnitaryGroup, trivial_group
from .kernels import POOLING_MODES, BaseKernel, InvariantKernel, unitarity_check
from .svm import DEFAULT_MAX_ITER, DEFAULT_STOP_TOL, DualProblem, SvmModel, load_model, save_model, solve_dual

log = logging.getLogger(__name__)

TEMPLATE_MODES = ("base_plus_group", "explicit_orbits")
EXTRACTOR_FORMAT_VERSION = 1


class DegenerateFeatureWarning(RuntimeWarning):
    pass


@dataclass
class TemplateSet:
    """``templates`` holds one base vector per template (M x d).

    In ``explicit_orbits`` mode ``orbits[i]`` lists the observed transforms of
    template i and pooling runs over those rows instead of a computable group.
    """

    templates: np.ndarray
    mode: str = "base_plus_group"
    orbits: list | None = None

    def __post_init__(self):
        if self.mode not in TEMPLATE_MODES:
            raise ConfigError(f"unknown template mode {self.mode!r}")
        self.templates = np.atleast_2d(np.asarray(self.templates, dtype=np.float64))
        if self.templates.size == 0:
            raise ConfigError("template set is empty")
        if self.mode == "explicit_orbits":
            if self.orbits is None or len(self.orbits) != self.templates.shape[0]:
                raise ConfigError("explicit_orbits mode needs one orbit list per template")
            self.orbits = [np.atleast_2d(np.asarray(o, dtype=np.float64)) for o in self.orbits]
            for o in self.orbits:
                if o.shape[0] < 1:
                    raise ConfigError("every template needs at least one orbit sample")
                if o.shape[1] != self.dim:
                    raise ConfigError("orbit sample dimension does not match templates")

    @property
    def dim(self) -> int:
        return self.templates.shape[1]

    def __len__(self) -> int:
        return self.templates.shape[0]

    @classmethod
    def from_orbit_rows(cls, rows: np.ndarray, orbit_ids: Sequence[int],
                        mode: str = "explicit_orbits") -> "TemplateSet":
        """Group unlabeled rows by orbit id; the first row of each orbit is its base template."""
        rows = np.asarray(rows, dtype=np.float64)
        orbit_ids = np.asarray(orbit_ids)
        order = list(dict.fromkeys(orbit_ids.tolist()))
        orbits = [rows[orbit_ids == oid] for oid in order]
        bases = np.stack([o[0] for o in orbits])
        return cls(bases, mode=mode, orbits=orbits if mode == "explicit_orbits" else None)


class InvariantFeatureMap:
    def __init__(self, base: BaseKernel, templates: TemplateSet, group: FiniteUnitaryGroup | None = None,
                 pooling: str = "mean", check_unitarity: bool = True, tol: float = 1e-9):
        if pooling not in POOLING_MODES:
            raise ConfigError(f"unknown pooling {pooling!r}")
        if templates.mode == "base_plus_group":
            if group is None:
                raise ConfigError("base_plus_group templates need a group")
            if group.dim != templates.dim:
                raise ConfigError(f"group dim {group.dim} does not match template dim {templates.dim}")
            if check_unitarity and len(templates) >= 2:
                rep = unitarity_check(base, group, templates.templates[:8], tol)
                if not rep.passed:
                    raise ValidationError(f"kernel is not unitary on this group (deviation {rep.deviation:.3e})")
        self.base = base
        self.templates = templates
        self.group = group
        self.pooling = pooling
        self._orbit_rows = None
        if templates.mode == "explicit_orbits":
            self._orbit_rows = np.vstack(templates.orbits)
            self._orbit_bounds = np.cumsum([0] + [o.shape[0] for o in templates.orbits])

    @property
    def dim(self) -> int:
        return self.templates.dim

    @property
    def output_dim(self) -> int:
        return len(self.templates)

    def _pool(self, acc, term):
        if self.pooling == "mean":
            acc += term
        else:
            np.maximum(acc, term, out=acc)

    def transform(self, X) -> np.ndarray:
        """``l(x)`` for every row of X (n x M)."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise ConfigError(f"input dimension {X.shape[1]} does not match feature map dim {self.dim}")
        T = self.templates.templates
        if self.templates.mode == "base_plus_group":
            acc = InvariantKernel(self.base, self.group, self.pooling).pairwise(X, T)
        else:
            K = self.base.pairwise(X, self._orbit_rows)
            acc = np.empty((X.shape[0], len(self.templates)))
            for i in range(len(self.templates)):
                lo, hi = self._orbit_bounds[i], self._orbit_bounds[i + 1]
                col = K[:, lo].copy()
                for r in range(lo + 1, hi):
                    self._pool(col, K[:, r])
                if self.pooling == "mean":
                    col /= hi - lo
                acc[:, i] = col
        return acc[0] if single else acc

    __call__ = transform

    def descriptor(self) -> dict:
        return {"base": self.base.descriptor(), "pooling": self.pooling, "mode": self.templates.mode,
                "group": None if self.group is None else self.group.name,
                "templates": len(self.templates)}


def build_feature_map(base: BaseKernel, group_or_orbits, pooling: str, T: TemplateSet) -> InvariantFeatureMap:
    group = group_or_orbits if isinstance(group_or_orbits, FiniteUnitaryGroup) else None
    if group is None and T.mode == "base_plus_group":
        raise ConfigError("base_plus_group templates need a FiniteUnitaryGroup")
    return InvariantFeatureMap(base, T, group=group, pooling=pooling)


def extract_invariant(fmap: InvariantFeatureMap, x) -> np.ndarray:
    return fmap.transform(x)


# ----------------------------------------------------------------------
# task assignment

@dataclass
class Task:
    subjects: tuple
    positives: tuple


@dataclass
class TaskAssignment:
    tasks: list[Task]
    seed: int
    subjects_per_task: int
    positives_per_task: int

    def __len__(self) -> int:
        return len(self.tasks)

    def to_json(self) -> dict:
        return {"seed": self.seed, "subjects_per_task": self.subjects_per_task,
                "positives_per_task": self.positives_per_task,
                "tasks": [{"subjects": list(t.subjects), "positives": list(t.positives)} for t in self.tasks]}

    @classmethod
    def from_json(cls, data: dict) -> "TaskAssignment":
        return cls([Task(tuple(t["subjects"]), tuple(t["positives"])) for t in data["tasks"]],
                   data["seed"], data["subjects_per_task"], data["positives_per_task"])


def default_task_shape(n_classes: int, subjects: int | None = None,
                       positives: int | None = None) -> tuple[int, int]:
    """10 subjects with 3 positives; all classes and ~30% positives when there are fewer than 10."""
    if subjects is None:
        subjects = 10 if n_classes >= 10 else n_classes
    if positives is None:
        positives = 3 if subjects == 10 else max(1, int(math.floor(0.3 * subjects + 0.5)))
    return subjects, positives


def assign_tasks(class_ids, K: int, subjects_per_task: int | None = None,
                 positives_per_task: int | None = None, seed: int = 0) -> TaskAssignment:
    classes = sorted(set(np.asarray(class_ids).tolist()))
    if K < 1:
        raise ConfigError("need at least one task (K >= 1)")
    if len(classes) < 2:
        raise ConfigError("need at least two classes to form tasks")
    s, p = default_task_shape(len(classes), subjects_per_task, positives_per_task)
    if s > len(classes):
        raise ConfigError(f"subjects_per_task={s} exceeds the {len(classes)} available classes")
    if not 1 <= p < s:
        raise ConfigError(f"positives_per_task must satisfy 1 <= p < subjects_per_task; got p={p}, s={s}")
    rng = np.random.default_rng(seed)
    tasks = []
    for _ in range(K):
        subj = rng.choice(len(classes), size=s, replace=False)
        pos = rng.choice(subj, size=p, replace=False)
        tasks.append(Task(tuple(sorted(classes[i] for i in subj)), tuple(sorted(classes[i] for i in pos))))
    return TaskAssignment(tasks, seed, s, p)


# ----------------------------------------------------------------------
# training and extraction

@dataclass
class MmifExtractor:
    feature_map: InvariantFeatureMap
    models: list[SvmModel]
    train_features: np.ndarray
    assignment: TaskAssignment
    use_bias: bool = False
    standardize: bool = False
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        F = self._prepared(self.train_features)
        # w_k = sum_j y_j alpha_j l(x_j) over the task's training rows
        self.weights = np.stack([m.coef @ F[np.asarray(m.sample_ids, dtype=np.intp)] for m in self.models])
        self.biases = np.array([m.bias for m in self.models])

    @property
    def output_dim(self) -> int:
        return len(self.models)

    def _prepared(self, F: np.ndarray) -> np.ndarray:
        if not self.standardize:
            return F
        return (F - self.feature_mean) / self.feature_scale

    def transform_features(self, F) -> np.ndarray:
        """MMIF from precomputed ``l(x)`` rows."""
        out = self._prepared(np.atleast_2d(F)) @ self.weights.T
        if self.use_bias:
            out = out + self.biases
        return out

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = self.transform_features(self.feature_map.transform(np.atleast_2d(X)))
        return out[0] if X.ndim == 1 else out

    __call__ = transform


def _task_problem(features, class_ids, task: Task, C, stop_tol, index: int,
                  max_iterations: int = DEFAULT_MAX_ITER) -> DualProblem:
    mask = np.isin(class_ids, task.subjects)
    rows = np.flatnonzero(mask)
    labels = np.where(np.isin(class_ids[rows], task.positives), 1.0, -1.0)
    if labels.size == 0 or np.all(labels == labels[0]):
        raise ValidationError(f"task {index} has single-label training data")
    F = features[rows]
    return DualProblem(F @ F.T, labels, box_C=C, stop_tol=stop_tol, max_iterations=max_iterations,
                       sample_ids=rows.tolist())


def train_mmif(features, class_ids, assignment: TaskAssignment, C: float | None = None,
               stop_tol: float = DEFAULT_STOP_TOL, feature_map: InvariantFeatureMap | None = None,
               use_bias: bool = False, standardize: bool = False, threads: int = 1,
               max_iterations: int = DEFAULT_MAX_ITER) -> MmifExtractor:
    """Train one linear SVM per task on the rows of ``features`` whose class is in the task."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    class_ids = np.asarray(class_ids)
    if features.shape[0] != class_ids.size:
        raise ConfigError(f"{features.shape[0]} feature rows but {class_ids.size} class ids")
    if len(assignment) == 0:
        raise ConfigError("empty task assignment")
    mean = scale = None
    F = features
    if standardize:
        mean = features.mean(axis=0)
        scale = features.std(axis=0)
        scale[scale == 0] = 1.0
        F = (features - mean) / scale
    problems = [_task_problem(F, class_ids, t, C, stop_tol, k, max_iterations)
                for k, t in enumerate(assignment.tasks)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = list(pool.map(solve_dual, problems))
    else:
        models = [solve_dual(p) for p in problems]
    log.debug("trained %d MMIF SVMs", len(models))
    for m in models:
        m.kernel = {"base": {"kind": "linear"}, "on": "invariant_features"}
    return MmifExtractor(feature_map, models, features, assignment, use_bias=use_bias,
                         standardize=standardize, feature_mean=mean, feature_scale=scale)


def extract_mmif(ex: MmifExtractor, x) -> np.ndarray:
    return ex.transform(x)


def match_score(f1, f2) -> float:
    """Cosine similarity; 0 (with a warning) when either vector is zero."""
    f1 = np.asarray(f1, dtype=np.float64).ravel()
    f2 = np.asarray(f2, dtype=np.float64).ravel()
    if f1.size != f2.size or f1.size == 0:
        raise ConfigError(f"feature lengths differ or are empty: {f1.size} vs {f2.size}")
    n1, n2 = np.linalg.norm(f1), np.linalg.norm(f2)
    if n1 == 0.0 or n2 == 0.0:
        warnings.warn("zero feature vector; match score set to 0", DegenerateFeatureWarning, stacklevel=2)
        return 0.0
    return float(np.clip(f1 @ f2 / (n1 * n2), -1.0, 1.0))


# ----------------------------------------------------------------------
# persistence

def save_extractor(ex: MmifExtractor, directory: str | Path, extra_provenance: dict | None = None) -> None:
    """Directory layout: manifest.json, templates.gram (+ orbits), train_features.gram, models/*.svm, provenance.json."""
    d = Path(directory)
    (d / "models").mkdir(parents=True, exist_ok=True)
    fmap = ex.feature_map
    T = fmap.templates
    write_matrix(d / "templates.gram", T.templates)
    manifest = {
        "format": "invkern-mmif-extractor",
        "version": EXTRACTOR_FORMAT_VERSION,
        "feature_map": {"base": fmap.base.descriptor(), "pooling": fmap.pooling, "mode": T.mode},
        "group": None,
        "K": ex.output_dim,
        "use_bias": ex.use_bias,
        "standardize": ex.standardize,
        "assignment": ex.assignment.to_json(),
        "models": [f"models/model_{k:04d}.svm" for k in range(ex.output_dim)],
    }
    if T.mode == "explicit_orbits":
        write_matrix(d / "orbits.gram", fmap._orbit_rows)
        manifest["orbit_sizes"] = [int(o.shape[0]) for o in T.orbits]
    if fmap.group is not None:
        spec = getattr(fmap.group, "spec", None)
        manifest["group"] = {"name": fmap.group.name,
                             "spec": None if spec is None else spec.to_config()}
        write_matrix(d / "group_elements.gram", fmap.group.matrices().reshape(fmap.group.order, -1))
    if ex.standardize:
        write_matrix(d / "standardize.gram", np.stack([ex.feature_mean, ex.feature_scale]))
    write_matrix(d / "train_features.gram", ex.train_features)
    for k, m in enumerate(ex.models):
        save_model(m, d / manifest["models"][k])
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    prov = dict(ex.provenance)
    prov.update(extra_provenance or {})
    prov["templates_sha256"] = sha256_array(T.templates)
    prov["train_features_sha256"] = sha256_array(ex.train_features)
    (d / "provenance.json").write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")


def load_extractor(directory: str | Path) -> MmifExtractor:
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read extractor manifest in {d}: {exc}") from None
    if manifest.get("format") != "invkern-mmif-extractor" or manifest.get("version") != EXTRACTOR_FORMAT_VERSION:
        raise FormatError(f"{d}: unsupported extractor format/version")
    fm = manifest["feature_map"]
    base = BaseKernel.from_descriptor(fm["base"])
    bases = read_matrix(d / "templates.gram")
    group = None
    if fm["mode"] == "explicit_orbits":
        rows = read_matrix(d / "orbits.gram")
        bounds = np.cumsum([0] + manifest["orbit_sizes"])
        T = TemplateSet(bases, mode="explicit_orbits",
                        orbits=[rows[bounds[i]:bounds[i + 1]] for i in range(len(bounds) - 1)])
    else:
        T = TemplateSet(bases, mode="base_plus_group")
    if manifest.get("group") is not None:
        mats = read_matrix(d / "group_elements.gram")
        dim = bases.shape[1]
        group = _group_from_matrices(mats.reshape(-1, dim, dim), manifest["group"]["name"])
    fmap = InvariantFeatureMap(base, T, group=group, pooling=fm["pooling"], check_unitarity=False)
    models = [load_model(d / rel) for rel in manifest["models"]]
    mean = scale = None
    if manifest["standardize"]:
        mean, scale = read_matrix(d / "standardize.gram")
    prov = json.loads((d / "provenance.json").read_text()) if (d / "provenance.json").exists() else {}
    return MmifExtractor(fmap, models, read_matrix(d / "train_features.gram"),
                         TaskAssignment.from_json(manifest["assignment"]), use_bias=manifest["use_bias"],
                         standardize=manifest["standardize"], feature_mean=mean, feature_scale=scale,
                         provenance=prov)


def _group_from_matrices(mats: np.ndarray, name: str) -> FiniteUnitaryGroup:
    """Rebuild a group from stored element matrices, re-encoding signed permutations exactly."""
    n, d, _ = mats.shape
    nz = np.abs(mats) == 1.0
    if np.all(nz.sum(axis=2) == 1) and np.all(nz.sum(axis=1) == 1) and np.all((mats == 0) | nz):
        perms = np.argmax(nz, axis=2)
        signs = np.take_along_axis(mats, perms[:, :, None], axis=2)[:, :, 0]
        return FiniteUnitaryGroup(d, perms=perms, signs=signs, name=name)
    return FiniteUnitaryGroup(d, matrices=mats, name=name)


def identity_feature_map(base: BaseKernel, templates: TemplateSet) -> InvariantFeatureMap:
    """Non-invariant baseline: ``l(x)_i = k(x, t_i)`` on the base templates only."""
    T = TemplateSet(templates.templates, mode="base_plus_group")
    return InvariantFeatureMap(base, T, group=trivial_group(templates.dim), pooling="mean")


__all__ = [
    "TemplateSet", "InvariantFeatureMap", "build_feature_map", "extract_invariant", "Task",
    "TaskAssignment", "assign_tasks", "MmifExtractor", "train_mmif", "extract_mmif", "match_score",
    "save_extractor", "load_extractor", "identity_feature_map", "DegenerateFeatureWarning",
]
