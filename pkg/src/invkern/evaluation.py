"""Verification-protocol evaluation: all-pairs cosine matching, ROC, VR@FAR, AUC."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

DEFAULT_PAIR_CAP = 10_000_000
PAIR_BLOCK_ROWS = 512


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray
    degenerate_pairs: int = 0

    @property
    def n_genuine(self) -> int:
        return int(self.genuine.size)

    @property
    def n_impostor(self) -> int:
        return int(self.impostor.size)


def _normalized(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(F, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return F / safe[:, None], zero


def all_pairs_verify(features, class_ids, pair_cap: int = DEFAULT_PAIR_CAP, threads: int = 1,
                     block_rows: int = PAIR_BLOCK_ROWS) -> ScoreSet:
    """Score every unordered pair (i < j) once by cosine similarity; self-pairs are excluded.

    Pairs involving a zero feature vector score 0 and are counted in
    ``degenerate_pairs``. Row blocks are fixed-size regardless of ``threads``.
    """
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    cls = np.asarray(class_ids)
    n = F.shape[0]
    if cls.shape != (n,):
        raise ConfigError(f"{n} feature rows but {cls.size} class ids")
    if n < 2:
        raise ConfigError("need at least two samples for pairwise verification")
    if np.unique(cls).size < 2:
        raise ConfigError("need at least two classes (no impostor pairs otherwise)")
    total = n * (n - 1) // 2
    if total > pair_cap:
        raise ConfigError(f"{total} pairs exceed the pair cap {pair_cap}")
    U, zero = _normalized(F)

    def block(start: int):
        stop = min(start + block_rows, n)
        S = U[start:stop] @ U.T
        np.clip(S, -1.0, 1.0, out=S)
        gen, imp, degen = [], [], 0
        for r in range(start, stop):
            s = S[r - start, r + 1:]
            z = zero[r + 1:] | zero[r]
            if z.any():
                s = np.where(z, 0.0, s)
                degen += int(z.sum())
            same = cls[r + 1:] == cls[r]
            gen.append(s[same])
            imp.append(s[~same])
        return np.concatenate(gen), np.concatenate(imp), degen

    starts = list(range(0, n, block_rows))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    return ScoreSet(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                    sum(p[2] for p in parts))


@dataclass
class RocCurve:
    far: np.ndarray
    vr: np.ndarray
    thresholds: np.ndarray

    def auc(self) -> float:
        return auc(self)


def roc(s: ScoreSet) -> RocCurve:
    """Sweep thresholds over all observed scores (descending); accept when score >= t.

    A leading point at threshold +inf gives the (0, 0) endpoint; the lowest
    observed score gives (1, 1).
    """
    if s.genuine.size == 0 or s.impostor.size == 0:
        raise ConfigError("ROC needs both genuine and impostor scores")
    g = np.sort(s.genuine)
    i = np.sort(s.impostor)
    thr = np.unique(np.concatenate([g, i]))[::-1]
    vr = (g.size - np.searchsorted(g, thr, side="left")) / g.size
    far = (i.size - np.searchsorted(i, thr, side="left")) / i.size
    return RocCurve(far=np.concatenate([[0.0], far]), vr=np.concatenate([[0.0], vr]),
                    thresholds=np.concatenate([[np.inf], thr]))


def auc(c: RocCurve) -> float:
    """Trapezoidal area under the operating points (FAR on x)."""
    return float(np.sum(np.diff(c.far) * (c.vr[1:] + c.vr[:-1]) * 0.5))


def vr_at_far(c: RocCurve, far_target: float) -> float:
    """VR at the largest operating point whose FAR does not exceed the target; no interpolation."""
    if not 0.0 <= far_target <= 1.0:
        raise ConfigError(f"far_target must lie in [0, 1], got {far_target}")
    ok = c.far <= far_target
    if not ok.any():
        return 0.0
    return float(np.max(c.vr[ok]))


def summarize(s: ScoreSet, far_targets=(0.001, 0.01, 0.1)) -> dict:
    c = roc(s)
    return {
        "auc": auc(c),
        "vr_at_far": {f"{t:g}": vr_at_far(c, t) for t in far_targets},
        "n_genuine": s.n_genuine,
        "n_impostor": s.n_impostor,
        "degenerate_pairs": s.degenerate_pairs,
    }


def write_roc_csv(c: RocCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "far", "vr"])
        for t, f, v in zip(c.thresholds, c.far, c.vr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(v))])


def write_report(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
