"""Synthetic orbit datasets, dataset persistence and embedding ingestion.

A dataset has up to three splits:

``template_unlabeled``
    full (or observed) orbits; rows carry orbit ids but no class ids.
``labeled_train``
    class-labeled rows, by default one untransformed sample per class.
``test``
    class-labeled rows with random group elements applied.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChecksumError, ConfigError, FormatError
from .formats import crc32_file, load_any_matrix, write_matrix, read_matrix
from .group import GroupSpec, make_group
from .mmif import TemplateSet

log = logging.getLogger(__name__)

SPLITS = ("template_unlabeled", "labeled_train", "test")
DATASET_FORMAT = "invkern-dataset"
DATASET_FORMAT_VERSION = 1


@dataclass
class Split:
    name: str
    samples: np.ndarray
    class_ids: np.ndarray | None = None
    orbit_ids: np.ndarray | None = None
    element_ids: np.ndarray | None = None

    def __post_init__(self):
        if self.name not in SPLITS:
            raise ConfigError(f"unknown split {self.name!r}")
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        n = self.samples.shape[0]
        for attr in ("class_ids", "orbit_ids", "element_ids"):
            v = getattr(self, attr)
            if v is not None:
                v = np.asarray(v, dtype=np.int64)
                if v.shape != (n,):
                    raise ConfigError(f"{self.name}.{attr} has {v.size} entries for {n} rows")
                setattr(self, attr, v)
        if self.name != "template_unlabeled" and self.class_ids is None:
            raise ConfigError(f"split {self.name} requires class ids")

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass
class Dataset:
    dim: int
    splits: dict[str, Split]
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Split:
        try:
            return self.splits[name]
        except KeyError:
            raise ConfigError(f"dataset has no split {name!r}") from None

    def template_set(self, mode: str = "explicit_orbits") -> TemplateSet:
        t = self["template_unlabeled"]
        ids = t.orbit_ids if t.orbit_ids is not None else np.arange(len(t))
        return TemplateSet.from_orbit_rows(t.samples, ids, mode=mode)

    def equals(self, other: "Dataset") -> bool:
        if self.dim != other.dim or set(self.splits) != set(other.splits):
            return False
        for name, s in self.splits.items():
            o = other.splits[name]
            if not np.array_equal(s.samples, o.samples):
                return False
            for attr in ("class_ids", "orbit_ids", "element_ids"):
                a, b = getattr(s, attr), getattr(o, attr)
                if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                    return False
        return self.provenance == other.provenance


@dataclass
class GenConfig:
    num_classes: int
    dim: int
    group: GroupSpec
    samples_per_class_labeled: int = 1
    samples_per_class_test: int = 4
    noise_sigma: float = 0.0
    seed: int = 0
    split_fractions: tuple = (1 / 3, 1 / 3, 1 / 3)
    labeled_transformed: bool = False
    disjoint_classes: bool = True

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.group.dim != self.dim:
            raise ConfigError(f"group dim {self.group.dim} != dataset dim {self.dim}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.samples_per_class_labeled < 1 or self.samples_per_class_test < 1:
            raise ConfigError("samples per class must be >= 1")
        fr = tuple(float(f) for f in self.split_fractions)
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be three non-negative numbers summing to 1, got {fr}")
        self.split_fractions = fr

    def class_counts(self) -> tuple[int, int, int]:
        n = self.num_classes
        if not self.disjoint_classes:
            return n, n, n
        n_t = int(np.floor(self.split_fractions[0] * n + 1e-9))
        n_l = int(np.floor(self.split_fractions[1] * n + 1e-9))
        return n_t, n_l, n - n_t - n_l

    def to_json(self) -> dict:
        return {"num_classes": self.num_classes, "dim": self.dim, "group": self.group.to_config(),
                "samples_per_class_labeled": self.samples_per_class_labeled,
                "samples_per_class_test": self.samples_per_class_test,
                "noise_sigma": self.noise_sigma, "seed": self.seed,
                "split_fractions": list(self.split_fractions),
                "labeled_transformed": self.labeled_transformed,
                "disjoint_classes": self.disjoint_classes}


def _noisy(rng, rows: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return rows
    rows = rows + sigma * rng.standard_normal(rows.shape)
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def base_separability(G, bases: np.ndarray) -> dict:
    """Largest cosine between distinct class bases, raw and after any group transform."""
    cos = bases @ bases.T
    np.fill_diagonal(cos, -np.inf)
    orbit = -np.inf
    for i in range(G.order):
        c = bases @ G.apply(i, bases).T
        np.fill_diagonal(c, -np.inf)
        orbit = max(orbit, float(np.max(c)))
    return {"max_base_cosine": float(np.max(cos)), "max_orbit_cross_cosine": orbit}


def gen_orbit_dataset(cfg: GenConfig) -> Dataset:
    G = make_group(cfg.group)
    rng = np.random.default_rng(cfg.seed)
    bases = rng.standard_normal((cfg.num_classes, cfg.dim))
    bases /= np.linalg.norm(bases, axis=1, keepdims=True)
    n_t, n_l, n_x = cfg.class_counts()
    if cfg.disjoint_classes:
        t_cls = np.arange(n_t)
        l_cls = np.arange(n_t, n_t + n_l)
        x_cls = np.arange(n_t + n_l, cfg.num_classes)
    else:
        t_cls = l_cls = x_cls = np.arange(cfg.num_classes)
    if min(len(t_cls), len(l_cls), len(x_cls)) < 1:
        raise ConfigError(f"split sizes {len(t_cls)}/{len(l_cls)}/{len(x_cls)} classes are too small")
    ident = G.identity_index

    rows, orbit_ids, elems = [], [], []
    for c in t_cls:
        rows.append(_noisy(rng, G.orbit(bases[c]), cfg.noise_sigma))
        orbit_ids += [int(c)] * G.order
        elems += list(range(G.order))
    splits = {"template_unlabeled": Split("template_unlabeled", np.vstack(rows),
                                          orbit_ids=orbit_ids, element_ids=elems)}

    def labeled_split(name, classes, per_class, random_elements):
        rows, cls, orb, el = [], [], [], []
        for c in classes:
            for s in range(per_class):
                g = int(rng.integers(G.order)) if random_elements(s) else ident
                rows.append(G.apply(g, bases[c]))
                cls.append(int(c))
                orb.append(int(c))
                el.append(g)
        X = _noisy(rng, np.vstack(rows), cfg.noise_sigma)
        return Split(name, X, class_ids=cls, orbit_ids=orb, element_ids=el)

    splits["labeled_train"] = labeled_split("labeled_train", l_cls, cfg.samples_per_class_labeled,
                                            lambda s: cfg.labeled_transformed and s > 0)
    splits["test"] = labeled_split("test", x_cls, cfg.samples_per_class_test, lambda s: True)
    prov = {"generator": "gen_orbit_dataset", "config": cfg.to_json(), "group_order": G.order,
            "separability": base_separability(G, bases)}
    return Dataset(cfg.dim, splits, prov)


# ----------------------------------------------------------------------
# persistence

def _write_ids(path: Path, split: Split) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "class_id", "orbit_id", "element_id"])
        cols = [split.class_ids, split.orbit_ids, split.element_ids]
        for r in range(len(split)):
            w.writerow([r] + ["" if c is None else int(c[r]) for c in cols])


def _read_ids(path: Path, n: int):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["row", "class_id", "orbit_id", "element_id"]:
        raise FormatError(f"{path}: bad id table header")
    body = rows[1:]
    if len(body) != n:
        raise FormatError(f"{path}: {len(body)} id rows for {n} samples")
    out = []
    for col in range(1, 4):
        vals = [r[col] for r in body]
        out.append(None if all(v == "" for v in vals) else np.array([int(v) for v in vals], dtype=np.int64))
    return out


def save_dataset(ds: Dataset, path: str | Path) -> None:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {"format": DATASET_FORMAT, "version": DATASET_FORMAT_VERSION, "dim": ds.dim,
                "splits": {}, "provenance": ds.provenance}
    for name, split in ds.splits.items():
        mfile, ifile = f"{name}.gram", f"{name}.ids.csv"
        write_matrix(d / mfile, split.samples)
        _write_ids(d / ifile, split)
        manifest["splits"][name] = {"rows": len(split), "matrix": mfile, "ids": ifile,
                                    "crc32_matrix": crc32_file(d / mfile), "crc32_ids": crc32_file(d / ifile)}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    d = Path(path)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except OSError as exc:
        raise FormatError(f"cannot read dataset manifest in {d}: {exc}") from None
    except ValueError as exc:
        raise FormatError(f"{d}/manifest.json is not valid JSON: {exc}") from None
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{d}: not a dataset directory")
    if manifest.get("version") != DATASET_FORMAT_VERSION:
        raise FormatError(f"{d}: dataset format version {manifest.get('version')} is not supported "
                          f"(expected {DATASET_FORMAT_VERSION})")
    splits = {}
    for name, info in manifest["splits"].items():
        for key in ("matrix", "ids"):
            f = d / info[key]
            if not f.exists():
                raise FormatError(f"missing dataset file {f}")
            if crc32_file(f) != info[f"crc32_{key}"]:
                raise ChecksumError(f"checksum mismatch for {f}")
        X = read_matrix(d / info["matrix"])
        if X.shape != (info["rows"], manifest["dim"]):
            raise FormatError(f"{name}: matrix shape {X.shape} disagrees with manifest")
        cls, orb, el = _read_ids(d / info["ids"], X.shape[0])
        splits[name] = Split(name, X, class_ids=cls, orbit_ids=orb, element_ids=el)
    return Dataset(manifest["dim"], splits, manifest.get("provenance", {}))


# ----------------------------------------------------------------------
# ingestion of externally computed embeddings

MANIFEST_KEYS = ("dim", "split", "orbit_group_by")


def ingest_embeddings(matrix_path: str | Path, labels_path: str | Path, manifest) -> Dataset:
    """Wrap a precomputed embedding matrix (CSV or binary) as a Dataset.

    ``manifest`` (a dict or a JSON file path) has keys:

    * ``dim`` -- expected embedding width, or ``"auto"``;
    * ``split`` -- maps each split name to the list of labels it contains
      (an optional ``"*"`` entry names the split for unlisted labels);
    * ``orbit_group_by`` -- ``"label"`` (all template rows of one label form
      one orbit) or ``"row"`` (every template row is its own orbit).
    """
    if not isinstance(manifest, dict):
        try:
            manifest = json.loads(Path(manifest).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read ingest manifest: {exc}") from None
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise ConfigError(f"ingest manifest missing keys: {', '.join(missing)}")
    X = load_any_matrix(matrix_path)
    if not np.all(np.isfinite(X)):
        raise FormatError(f"{matrix_path}: embedding matrix has non-finite values")
    labels = [ln.strip() for ln in Path(labels_path).read_text().splitlines() if ln.strip()]
    if len(labels) != X.shape[0]:
        raise FormatError(f"{X.shape[0]} embedding rows but {len(labels)} labels")
    if manifest["dim"] != "auto" and int(manifest["dim"]) != X.shape[1]:
        raise FormatError(f"manifest dim {manifest['dim']} but embeddings have width {X.shape[1]}")
    group_by = manifest["orbit_group_by"]
    if group_by not in ("label", "row"):
        raise ConfigError(f"orbit_group_by must be 'label' or 'row', got {group_by!r}")

    split_of = {}
    fallback = None
    for name, members in manifest["split"].items():
        if name == "*":
            fallback = members
            continue
        if name not in SPLITS:
            raise ConfigError(f"unknown split {name!r} in manifest")
        for lab in members:
            split_of[str(lab)] = name
    if fallback is not None and fallback not in SPLITS:
        raise ConfigError(f"unknown fallback split {fallback!r}")
    names = sorted(set(labels))
    class_index = {lab: i for i, lab in enumerate(names)}
    assignment = []
    for lab in labels:
        s = split_of.get(lab, fallback)
        if s is None:
            raise ConfigError(f"label {lab!r} is not assigned to any split")
        assignment.append(s)
    assignment = np.array(assignment)
    cls = np.array([class_index[lab] for lab in labels], dtype=np.int64)

    splits = {}
    for name in SPLITS:
        rows = np.flatnonzero(assignment == name)
        if rows.size == 0:
            continue
        if name == "template_unlabeled":
            orbit = cls[rows] if group_by == "label" else np.arange(rows.size)
            splits[name] = Split(name, X[rows], orbit_ids=orbit)
        else:
            splits[name] = Split(name, X[rows], class_ids=cls[rows], orbit_ids=cls[rows])
    prov = {"generator": "ingest_embeddings", "matrix": str(matrix_path), "labels": str(labels_path),
            "class_names": names, "orbit_group_by": group_by}
    return Dataset(int(X.shape[1]), splits, prov)
