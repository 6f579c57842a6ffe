"""Desk-scale experiment drivers shared by ``scripts/`` and the acceptance tests."""
from __future__ import annotations

import time

import numpy as np

from .config import PipelineConfig
from .evaluation import all_pairs_verify, summarize
from .group import BUILTIN_KINDS, GroupSpec, make_group
from .kernels import BaseKernel, InvariantKernel, gram
from .linalg import min_eigenvalue
from .pipeline import extract, load_source, train


def desk_config(noise_sigma: float = 0.0, pooling: str = "mean", features: str = "invariant",
                seed: int = 0, K: int = 32, dim: int = 64, num_classes: int = 60,
                group: str = "cyclic_shift") -> PipelineConfig:
    """60 classes split 20/20/20 into unlabeled orbits, one labeled sample each, and held-out test classes."""
    cfg = PipelineConfig()
    for key, val in {"group.kind": group, "group.dim": dim, "kernel.pooling": pooling,
                     "kernel.features": features, "data.noise_sigma": noise_sigma, "data.seed": seed,
                     "data.num_classes": num_classes, "tasks.K": K, "tasks.seed": seed}.items():
        cfg.override(key, val)
    return cfg


def run_in_memory(cfg: PipelineConfig, threads: int = 1) -> dict:
    """The pipeline without writing artifacts; adds timing and generator separability."""
    t0 = time.perf_counter()
    cfg.validate()
    ds, _ = load_source(cfg)
    ex = train(cfg, ds, threads)
    test = ds["test"]
    F = extract(ex, test.samples, threads)
    summary = summarize(all_pairs_verify(F, test.class_ids, threads=threads), cfg.eval.far_targets)
    summary["separability"] = ds.provenance.get("separability")
    summary["seconds"] = time.perf_counter() - t0
    return summary


def ut_desk_experiment(noise_sigma: float = 0.0, seed: int = 0, pooling: str = "mean", threads: int = 1) -> dict:
    """Invariant MMIF and the plain kernel-feature baseline under the same protocol."""
    inv = run_in_memory(desk_config(noise_sigma, pooling, "invariant", seed), threads)
    base = run_in_memory(desk_config(noise_sigma, pooling, "baseline", seed), threads)
    return {"noise_sigma": noise_sigma, "seed": seed, "pooling": pooling, "invariant": inv, "baseline": base}


def pooling_ablation(noise_levels=(0.0, 0.05, 0.1), seeds=(0, 1, 2), threads: int = 1) -> list[dict]:
    rows = []
    for sigma in noise_levels:
        for seed in seeds:
            for pooling in ("mean", "max"):
                s = run_in_memory(desk_config(sigma, pooling, "invariant", seed), threads)
                rows.append({"noise_sigma": sigma, "seed": seed, "pooling": pooling, "auc": s["auc"],
                             "vr_at_far": s["vr_at_far"]})
    return rows


def psd_check(kind: str, datasets: int = 20, dim: int = 16, seed: int = 0,
              sizes: tuple[int, int] = (50, 200)) -> list[dict]:
    """Smallest eigenvalue of mean-pooled invariant Grams on random data, relative to max |entry|.

    Base kernels alternate rbf / linear; linear Grams are rank-deficient, which
    puts the smallest eigenvalue right at zero.
    """
    G = make_group(GroupSpec(kind, dim))
    rng = np.random.default_rng(seed)
    out = []
    for i in range(datasets):
        n = int(rng.integers(sizes[0], sizes[1] + 1))
        X = rng.standard_normal((n, dim))
        base = BaseKernel("rbf").fitted(X) if i % 2 == 0 else BaseKernel("linear")
        K = gram(InvariantKernel(base, G), X).values
        scale = float(np.max(np.abs(K)))
        lam = min_eigenvalue(K)
        out.append({"kind": kind, "n": n, "kernel": base.kind, "min_eigenvalue": lam, "max_abs": scale,
                    "ratio": lam / scale})
    return out


def psd_sweep(datasets: int = 20, dim: int = 16, seed: int = 0) -> list[dict]:
    rows = []
    for kind in BUILTIN_KINDS:
        rows += psd_check(kind, datasets, dim, seed)
    return rows
