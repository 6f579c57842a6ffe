"""Numerical checks of the invariance results relied on by the pipeline.

Each check draws seeded random unit vectors and reports the worst deviation
from an identity that holds exactly for a finite unitary group:

group_average_invariance
    ``g(avg x) = avg x`` and ``avg(g x) = avg x``.
psi_symmetric
    the averaging matrix equals its transpose.
psi_projection
    the averaging matrix is idempotent, self-adjoint and matches ``avg``.
rkhs_unitary_action
    the kernel is unitary (``k(gx, gy) = k(x, y)``) and the induced action
    composes like the group (``k(g(h x), y) = k((gh) x, y)``).
one_shot_margin
    an invariant-kernel SVM trained on untransformed separable data
    classifies every transformed sample correctly with the same minimum
    margin.
invariant_projection
    ``<avg x, avg w> = <g x, avg w>`` for every g.
mmif_invariance
    ``MMIF(g x) = MMIF(x)`` for mean and max pooling.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvkernError
from .group import FiniteUnitaryGroup, group_average, psi_matrix
from .kernels import BaseKernel, InvariantKernel, gram, unitarity_check
from .mmif import InvariantFeatureMap, TemplateSet, assign_tasks, train_mmif
from .svm import DualProblem, solve_dual

STATEMENTS = (
    "group_average_invariance",
    "psi_symmetric",
    "psi_projection",
    "rkhs_unitary_action",
    "one_shot_margin",
    "invariant_projection",
    "mmif_invariance",
)
ONE_SHOT_C = 1e4


@dataclass
class StatementResult:
    name: str
    deviation: float
    passed: bool
    detail: str = ""


@dataclass
class TheoryReport:
    group: str
    kernel: dict
    tol: float
    seed: int
    results: list[StatementResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> StatementResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"group": self.group, "kernel": self.kernel, "tol": self.tol, "seed": self.seed,
                "passed": self.passed,
                "results": [{"name": r.name, "deviation": r.deviation, "passed": r.passed, "detail": r.detail}
                            for r in self.results]}

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            out.append(f"{status} {r.name:<26} deviation={r.deviation:.3e}" + (f"  {r.detail}" if r.detail else ""))
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _unit_rows(rng, n, d):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def _max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _check_average(G, X):
    A = group_average(G, X)
    dev = 0.0
    for i in range(G.order):
        dev = max(dev, _max_abs(G.apply(i, A) - A), _max_abs(group_average(G, G.apply(i, X)) - A))
    return dev


def _check_rkhs(G, k, X):
    dev = unitarity_check(k, G, X).deviation
    Xs, Ys = X[:3], X[3:6]
    ref = [k.pairwise(G.apply(c, Xs), Ys) for c in range(G.order)]
    missing = 0
    for a in range(G.order):
        for b in range(G.order):
            c = G.cayley_table[a, b]
            if c < 0:
                missing += 1
                continue
            dev = max(dev, _max_abs(k.pairwise(G.apply(a, G.apply(b, Xs)), Ys) - ref[c]))
    return (np.inf if missing else dev), (f"{missing} products outside the set" if missing else "")


def _separable_labels(ik, X, Z, rng):
    """Labels from a random invariant-kernel teacher, thresholded at the widest central gap."""
    h = ik.pairwise(X, Z) @ rng.standard_normal(Z.shape[0])
    srt = np.sort(h)
    n = srt.size
    lo, hi = max(1, n // 4), max(2, n - n // 4)
    gaps = np.diff(srt)[lo - 1:hi - 1]
    cut = lo - 1 + int(np.argmax(gaps))
    theta = 0.5 * (srt[cut] + srt[cut + 1])
    return np.where(h > theta, 1.0, -1.0)


def _check_one_shot(G, k, X, W, rng):
    ik = InvariantKernel(k, G, "mean")
    y = _separable_labels(ik, X, W[:3], rng)
    if np.all(y == y[0]):
        return np.inf, "teacher produced a single class"
    model = solve_dual(DualProblem(gram(ik, X), y, box_C=ONE_SHOT_C))
    train_margin = float(np.min(y * model.decision_many(ik.pairwise(X, X))))
    if train_margin <= 0:
        return np.inf, f"training set not separated (min margin {train_margin:.3e})"
    orbit_margin = np.inf
    wrong = 0
    for i in range(G.order):
        f = model.decision_many(ik.pairwise(G.apply(i, X), X))
        wrong += int(np.sum(np.sign(f) != y))
        orbit_margin = min(orbit_margin, float(np.min(y * f)))
    dev = abs(orbit_margin - train_margin)
    if wrong:
        return max(dev, np.inf), f"{wrong} transformed samples misclassified"
    return dev, f"train margin {train_margin:.6g}"


def _check_mmif(G, k, X, T, seed):
    dev = 0.0
    cls = np.arange(X.shape[0])
    tasks = assign_tasks(cls, 3, seed=seed)
    for pooling in ("mean", "max"):
        fmap = InvariantFeatureMap(k, TemplateSet(T), group=G, pooling=pooling, check_unitarity=False)
        ex = train_mmif(fmap.transform(X), cls, tasks, feature_map=fmap)
        ref = ex.transform(X)
        for i in range(G.order):
            dev = max(dev, _max_abs(ex.transform(G.apply(i, X)) - ref))
    return dev


def theory_check(G: FiniteUnitaryGroup, base_kernel: BaseKernel, sample_count: int = 8,
                 seed: int = 0, tol: float = 1e-9) -> TheoryReport:
    """Run every check; failures are recorded in the report, never raised."""
    if sample_count < 4:
        raise ValueError("sample_count must be at least 4")
    rng = np.random.default_rng(seed)
    d = G.dim
    X = _unit_rows(rng, sample_count, d)
    W = _unit_rows(rng, sample_count, d)
    T = _unit_rows(rng, 4, d)
    k = base_kernel.fitted(X)
    report = TheoryReport(group=G.name, kernel=k.descriptor(), tol=tol, seed=seed)

    def add(name, check):
        try:
            out = check()
        except InvkernError as exc:  # e.g. a non-group set yields an asymmetric Gram
            out = (np.inf, f"{type(exc).__name__}: {exc}")
        dev, detail = out if isinstance(out, tuple) else (out, "")
        dev = float(dev)
        report.results.append(StatementResult(name, dev, bool(dev <= tol), detail))

    P = psi_matrix(G)
    PX, PW = group_average(G, X), group_average(G, W)

    def projection():
        self_adj = _max_abs(X @ P @ W.T - (X @ P.T) @ W.T)
        return max(_max_abs(P @ P - P), self_adj, _max_abs(X @ P.T - PX))

    add("group_average_invariance", lambda: _check_average(G, X))
    add("psi_symmetric", lambda: _max_abs(P - P.T))
    add("psi_projection", projection)
    add("rkhs_unitary_action", lambda: _check_rkhs(G, k, X))
    add("one_shot_margin", lambda: _check_one_shot(G, k, X, W, rng))
    add("invariant_projection",
        lambda: max(_max_abs(G.apply(i, X) @ PW.T - PX @ PW.T) for i in range(G.order)))
    add("mmif_invariance", lambda: _check_mmif(G, k, X, T, seed))
    return report
