"""End-to-end MMIF pipeline: data -> l-features -> K task SVMs -> MMIF -> verification report.

Every step writes its artifacts plus a ``provenance.json`` into its own
directory.  Nothing time- or host-dependent is recorded, so identical configs
give byte-identical directories whatever ``threads`` is.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .data import (Dataset, GenConfig, Split, _read_ids, _write_ids, gen_orbit_dataset, ingest_embeddings,
                   load_dataset, save_dataset)
from .errors import ConfigError, FormatError
from .evaluation import all_pairs_verify, roc, summarize, write_report, write_roc_csv
from .formats import read_matrix, sha256_array, sha256_file, write_matrix
from .group import make_group
from .kernels import BaseKernel
from .mmif import (InvariantFeatureMap, MmifExtractor, TemplateSet, assign_tasks, identity_feature_map,
                   save_extractor, train_mmif)

log = logging.getLogger(__name__)

EXTRACT_BLOCK_ROWS = 256


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _dir_hashes(d: Path) -> dict:
    return {str(p.relative_to(d)): sha256_file(p) for p in sorted(d.rglob("*"))
            if p.is_file() and p.name != "provenance.json"}


def gen_config(cfg: PipelineConfig) -> GenConfig:
    d = cfg.data
    return GenConfig(num_classes=d.num_classes, dim=cfg.group.dim, group=cfg.group.spec(cfg.base_dir),
                     samples_per_class_labeled=d.samples_per_class_labeled,
                     samples_per_class_test=d.samples_per_class_test, noise_sigma=d.noise_sigma,
                     seed=d.seed, split_fractions=d.split_fractions,
                     labeled_transformed=d.labeled_transformed)


def load_source(cfg: PipelineConfig) -> tuple[Dataset, dict]:
    """The dataset named by ``[data]`` plus a record of where it came from."""
    d = cfg.data
    if d.source == "generate":
        ds = gen_orbit_dataset(gen_config(cfg))
        return ds, {"source": "generate", "seed": d.seed}
    if d.source == "load":
        path = cfg.resolve(d.path)
        ds = load_dataset(path)
        return ds, {"source": "load", "path": d.path,
                    "manifest_sha256": sha256_file(Path(path) / "manifest.json")}
    paths = {k: cfg.resolve(getattr(d, k)) for k in ("matrix", "labels", "manifest")}
    ds = ingest_embeddings(paths["matrix"], paths["labels"], paths["manifest"])
    return ds, {"source": "ingest", **{k: getattr(d, k) for k in paths},
                **{f"{k}_sha256": sha256_file(p) for k, p in paths.items()}}


def base_kernel(cfg: PipelineConfig, ds: Dataset) -> BaseKernel:
    k = BaseKernel(cfg.kernel.kind, gamma=cfg.kernel.gamma, degree=cfg.kernel.degree)
    return k.fitted(ds["labeled_train"].samples)


def feature_map_for(cfg: PipelineConfig, ds: Dataset) -> InvariantFeatureMap:
    kc = cfg.kernel
    tpl = ds["template_unlabeled"]
    k = base_kernel(cfg, ds)
    T = TemplateSet.from_orbit_rows(tpl.samples, tpl.orbit_ids, mode=kc.template_mode)
    if kc.features == "baseline":
        return identity_feature_map(k, T)
    group = make_group(cfg.group.spec(cfg.base_dir)) if kc.template_mode == "base_plus_group" else None
    return InvariantFeatureMap(k, T, group=group, pooling=kc.pooling)


def _blocks(fn, X: np.ndarray, threads: int, block_rows: int = EXTRACT_BLOCK_ROWS) -> np.ndarray:
    starts = list(range(0, X.shape[0], block_rows))
    work = [X[s:s + block_rows] for s in starts]
    if threads > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, work))
    else:
        parts = [fn(w) for w in work]
    return np.vstack(parts) if parts else np.zeros((0, 0))


def train(cfg: PipelineConfig, ds: Dataset, threads: int = 1) -> MmifExtractor:
    fmap = feature_map_for(cfg, ds)
    lab = ds["labeled_train"]
    F = _blocks(fmap.transform, lab.samples, threads)
    t = cfg.tasks
    assignment = assign_tasks(lab.class_ids, t.K, t.subjects_per_task, t.positives_per_task, seed=t.seed)
    s = cfg.solver
    ex = train_mmif(F, lab.class_ids, assignment, C=s.C, stop_tol=s.stop_tol, feature_map=fmap,
                    use_bias=s.use_bias, standardize=s.standardize, threads=threads,
                    max_iterations=s.max_iterations)
    log.info("trained %d task SVMs on %d labeled rows (%d l-features)", len(ex.models), F.shape[0], F.shape[1])
    return ex


def extract(ex: MmifExtractor, X: np.ndarray, threads: int = 1) -> np.ndarray:
    return _blocks(ex.transform, np.atleast_2d(np.asarray(X, dtype=np.float64)), threads)


@dataclass
class FeatureSet:
    features: np.ndarray
    split: Split


def save_features(fs: FeatureSet, directory: str | Path, provenance: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "features.gram", fs.features)
    _write_ids(d / "features.ids.csv", fs.split)
    prov = dict(provenance or {})
    prov["features_sha256"] = sha256_array(fs.features)
    _dump(prov, d / "provenance.json")


def load_features(directory: str | Path) -> FeatureSet:
    d = Path(directory)
    if not (d / "features.gram").exists():
        raise FormatError(f"no features.gram in {d}")
    F = read_matrix(d / "features.gram")
    cls, orb, el = _read_ids(d / "features.ids.csv", F.shape[0])
    if cls is None:
        raise FormatError(f"{d}: feature rows carry no class ids")
    return FeatureSet(F, Split("test", np.zeros((F.shape[0], 0)), class_ids=cls, orbit_ids=orb, element_ids=el))


def evaluate(F: np.ndarray, class_ids, cfg: PipelineConfig, out_dir: str | Path | None = None,
             threads: int = 1, provenance: dict | None = None) -> dict:
    scores = all_pairs_verify(F, class_ids, pair_cap=cfg.eval.pair_cap, threads=threads)
    summary = summarize(scores, cfg.eval.far_targets)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_roc_csv(roc(scores), d / "roc.csv")
        write_report(summary, d / "summary.json")
        prov = dict(provenance or {})
        prov["outputs"] = _dir_hashes(d)
        _dump(prov, d / "provenance.json")
    return summary


def base_provenance(cfg: PipelineConfig) -> dict:
    return {"invkern_version": __version__, "config": cfg.snapshot()}


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path | None = None, threads: int = 1) -> dict:
    """Run every stage, writing ``dataset/``, ``extractor/``, ``features/`` and ``report/``."""
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = base_provenance(cfg)
    ds, source = load_source(cfg)
    prov["input"] = source
    if source["source"] != "load":
        save_dataset(ds, out / "dataset")
    prov["dataset_provenance"] = ds.provenance
    ex = train(cfg, ds, threads)
    save_extractor(ex, out / "extractor", extra_provenance=prov)
    test = ds["test"]
    if test.class_ids is None or len(test) < 2:
        raise ConfigError("test split needs at least two labeled rows")
    F = extract(ex, test.samples, threads)
    save_features(FeatureSet(F, test), out / "features", prov)
    summary = evaluate(F, test.class_ids, cfg, out / "report", threads, prov)
    summary["features"] = cfg.kernel.features
    summary["pooling"] = cfg.kernel.pooling
    top = dict(prov)
    top["outputs"] = {sub: _dir_hashes(out / sub) for sub in ("dataset", "extractor", "features", "report")
                      if (out / sub).exists()}
    top["summary"] = summary
    _dump(top, out / "provenance.json")
    (out / "config.ini").write_text(cfg.to_ini(include_output=False))
    log.info("AUC %.6f, VR@FAR %s", summary["auc"], summary["vr_at_far"])
    return summary
