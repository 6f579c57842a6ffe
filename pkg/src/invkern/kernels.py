"""Unitary base kernels and their group-pooled invariant versions."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .formats import read_matrix, write_matrix, write_matrix_csv
from .group import FiniteUnitaryGroup
from .linalg import min_eigenvalue

KERNEL_KINDS = ("linear", "rbf", "polynomial_homogeneous")
POOLING_MODES = ("mean", "max")
GRAM_BLOCK_ROWS = 256


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


@dataclass(frozen=True)
class BaseKernel:
    """``linear``, ``rbf`` (``exp(-gamma |x-y|^2)``) or ``polynomial_homogeneous`` (``<x,y>^degree``).

    ``gamma=None`` means "resolve from training data" via :meth:`fitted`.
    """

    kind: str = "rbf"
    gamma: float | None = None
    degree: int = 2

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"rbf gamma must be > 0, got {self.gamma}")
        if self.kind == "polynomial_homogeneous" and (int(self.degree) != self.degree or self.degree < 1):
            raise ConfigError(f"polynomial degree must be an integer >= 1, got {self.degree}")

    def fitted(self, X) -> "BaseKernel":
        """Resolve a missing rbf gamma as ``1 / (d * var(X))``."""
        if self.kind != "rbf" or self.gamma is not None:
            return self
        X = _rows(X)
        var = float(np.var(X))
        if not var > 0:
            raise ConfigError("cannot infer rbf gamma from constant data")
        return replace(self, gamma=1.0 / (X.shape[1] * var))

    def pairwise(self, X, Y) -> np.ndarray:
        X, Y = _rows(X), _rows(Y)
        if X.shape[1] != Y.shape[1]:
            raise ConfigError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
        dots = X @ Y.T
        if self.kind == "linear":
            return dots
        if self.kind == "polynomial_homogeneous":
            return dots ** int(self.degree)
        if self.gamma is None:
            raise ConfigError("rbf gamma unresolved; call fitted(X) or set gamma")
        sq = np.einsum("ij,ij->i", X, X)[:, None] + np.einsum("ij,ij->i", Y, Y)[None, :] - 2.0 * dots
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-self.gamma * sq)

    def descriptor(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "rbf":
            out["gamma"] = None if self.gamma is None else float(self.gamma).hex()
        if self.kind == "polynomial_homogeneous":
            out["degree"] = int(self.degree)
        return out

    @classmethod
    def from_descriptor(cls, desc: dict) -> "BaseKernel":
        gamma = desc.get("gamma")
        if isinstance(gamma, str):
            gamma = float.fromhex(gamma)
        return cls(kind=desc["kind"], gamma=gamma, degree=int(desc.get("degree", 2)))


def kernel_eval(k: BaseKernel, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigError(f"kernel_eval needs two vectors of equal length, got {x.shape} and {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ConfigError("kernel_eval input contains non-finite values")
    return float(k.pairwise(x, y)[0, 0])


@dataclass
class UnitarityReport:
    deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tol


def unitarity_check(k: BaseKernel, G: FiniteUnitaryGroup, samples, tol: float = 1e-10) -> UnitarityReport:
    """Worst ``|k(gx, gy) - k(x, y)|`` over all sample pairs and group elements."""
    S = _rows(samples)
    if S.shape[0] < 2:
        raise ConfigError("unitarity_check needs at least two samples")
    ref = k.pairwise(S, S)
    worst = 0.0
    for i in range(G.order):
        gS = G.apply(i, S)
        worst = max(worst, float(np.max(np.abs(k.pairwise(gS, gS) - ref))))
    return UnitarityReport(deviation=worst, tol=tol)


@dataclass(frozen=True)
class InvariantKernel:
    base: BaseKernel
    group: FiniteUnitaryGroup
    pooling: str = "mean"

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"unknown pooling {self.pooling!r}; expected one of {POOLING_MODES}")

    def pairwise(self, X, Y) -> np.ndarray:
        """``pool_g k(x_i, g y_j)``, pooled sequentially in canonical element order."""
        X, Y = _rows(X), _rows(Y)
        if X.shape[1] != self.group.dim or Y.shape[1] != self.group.dim:
            raise ConfigError(f"inputs must have dimension {self.group.dim}")
        acc = self.base.pairwise(X, self.group.apply(0, Y))
        for i in range(1, self.group.order):
            term = self.base.pairwise(X, self.group.apply(i, Y))
            if self.pooling == "mean":
                acc += term
            else:
                np.maximum(acc, term, out=acc)
        if self.pooling == "mean":
            acc /= self.group.order
        return acc

    def descriptor(self) -> dict:
        return {"base": self.base.descriptor(), "group": self.group.name,
                "group_order": self.group.order, "pooling": self.pooling}


def invariant_kernel_eval(ik: InvariantKernel, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ConfigError("invariant_kernel_eval takes two vectors")
    return float(ik.pairwise(x, y)[0, 0])


def doubly_integrated_eval(ik: InvariantKernel, x, y) -> float:
    """``<Psi phi(x), Psi phi(y)>`` with both arguments averaged; mean pooling only.

    Equal to :func:`invariant_kernel_eval` for a true group, at |G| times the cost.
    """
    if ik.pooling != "mean":
        raise ConfigError("double integration is defined for mean pooling only")
    orbit_x = ik.group.orbit(np.asarray(x, dtype=np.float64))
    orbit_y = ik.group.orbit(np.asarray(y, dtype=np.float64))
    total = 0.0
    for row in ik.base.pairwise(orbit_x, orbit_y):
        total += float(np.sum(row))
    return total / (ik.group.order ** 2)


@dataclass
class GramMatrix:
    values: np.ndarray
    row_ids: list = field(default_factory=list)
    col_ids: list = field(default_factory=list)
    descriptor: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def pooling(self) -> str:
        return self.descriptor.get("pooling", "mean")

    def save_binary(self, path: str | Path) -> None:
        write_matrix(path, self.values)

    def save_csv(self, path: str | Path) -> None:
        write_matrix_csv(path, self.values)

    @classmethod
    def load_binary(cls, path: str | Path, descriptor: dict | None = None) -> "GramMatrix":
        values = read_matrix(path)
        return cls(values, list(range(values.shape[0])), list(range(values.shape[1])), descriptor or {})


def gram(ik: InvariantKernel | BaseKernel, X, Y=None, threads: int = 1,
         block_rows: int = GRAM_BLOCK_ROWS) -> GramMatrix:
    """Kernel matrix between the rows of X and Y (Y defaults to X).

    Rows are processed in fixed-size blocks, optionally on several threads;
    the block partition does not depend on ``threads`` so the result is
    bit-identical for any thread count.
    """
    X = _rows(X)
    Y = X if Y is None else _rows(Y)
    row_starts = list(range(0, X.shape[0], block_rows)) or [0]

    def block(start: int) -> np.ndarray:
        return ik.pairwise(X[start:start + block_rows], Y)

    if threads > 1 and len(row_starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, row_starts))
    else:
        parts = [block(s) for s in row_starts]
    values = np.vstack(parts) if X.shape[0] else np.zeros((0, Y.shape[0]))
    desc = ik.descriptor() if isinstance(ik, InvariantKernel) else {"base": ik.descriptor(), "pooling": "none"}
    return GramMatrix(values, list(range(X.shape[0])), list(range(Y.shape[0])), desc)


def psd_margin(G: GramMatrix) -> float:
    """``min_eigenvalue / max|entry|``; non-negative up to rounding for a PSD Gram."""
    scale = float(np.max(np.abs(G.values)))
    if scale == 0.0:
        return 0.0
    return min_eigenvalue(G.values) / scale
