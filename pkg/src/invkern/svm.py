"""Binary SVM dual solved by sequential minimal optimization on a precomputed Gram.

Solves::

    min_a  1/2 sum_ij y_i y_j a_i a_j K_ij - sum_i a_i
    s.t.   sum_i a_i y_i = 0,   0 <= a_i <= C

with C defaulting to 1/N. The working pair is the maximal violating pair
(first-order selection) with ties going to the lowest index.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConvergenceError, FormatError, ValidationError
from .formats import floats_to_hex, hex_to_floats
from .kernels import GramMatrix
from .linalg import min_eigenvalue

SVM_FORMAT = "invkern-svm"
SVM_FORMAT_VERSION = 1
DEFAULT_STOP_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000_000
CURVATURE_FLOOR = 1e-12
JITTER_PAD = 1e-10


@dataclass
class DualProblem:
    gram: np.ndarray | GramMatrix
    labels: np.ndarray
    box_C: float | None = None
    stop_tol: float = DEFAULT_STOP_TOL
    max_iterations: int = DEFAULT_MAX_ITER
    allow_non_psd: bool = False
    sample_ids: list | None = None

    def __post_init__(self):
        if isinstance(self.gram, GramMatrix):
            self.kernel = dict(self.gram.descriptor)
            K = self.gram.values
        else:
            self.kernel = {}
            K = self.gram
        K = np.asarray(K, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64).ravel()
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ConfigError(f"Gram must be square, got shape {K.shape}")
        if K.shape[0] != y.size:
            raise ConfigError(f"Gram is {K.shape[0]}x{K.shape[0]} but there are {y.size} labels")
        if not np.all(np.isfinite(K)):
            raise ConfigError("Gram contains non-finite entries")
        if not np.all(np.abs(y) == 1.0):
            raise ConfigError("labels must be +1 or -1")
        if np.all(y == y[0]):
            raise ConfigError("all samples carry the same label; need both classes")
        asym = float(np.max(np.abs(K - K.T)))
        if asym > 1e-8 * max(1.0, float(np.max(np.abs(K)))):
            raise ValidationError(f"Gram is not symmetric (max |K - K^T| = {asym:.3e})")
        if self.box_C is None:
            self.box_C = 1.0 / y.size
        if not self.box_C > 0:
            raise ConfigError(f"box_C must be positive, got {self.box_C}")
        if not self.stop_tol > 0:
            raise ConfigError(f"stop_tol must be positive, got {self.stop_tol}")
        self.K = 0.5 * (K + K.T)
        self.y = y
        if self.sample_ids is None:
            self.sample_ids = list(range(y.size))

    @property
    def n(self) -> int:
        return self.y.size


@dataclass
class SvmModel:
    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    box_C: float
    sample_ids: list = field(default_factory=list)
    kernel: dict = field(default_factory=dict)
    jitter: float = 0.0
    iterations: int = 0
    gap: float = 0.0

    @property
    def support_threshold(self) -> float:
        return 1e-8 * self.box_C

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > self.support_threshold)

    @property
    def coef(self) -> np.ndarray:
        """``y_i * alpha_i`` per training sample."""
        return self.labels * self.alphas

    def decision(self, kernel_row) -> float:
        return decision(self, kernel_row)

    def decision_many(self, kernel_rows: np.ndarray) -> np.ndarray:
        """Decision values for a (queries x n_train) block of kernel values."""
        return np.asarray(kernel_rows, dtype=np.float64) @ self.coef + self.bias


def dual_objective(K: np.ndarray, y: np.ndarray, alphas: np.ndarray) -> float:
    ya = y * alphas
    return float(0.5 * ya @ K @ ya - np.sum(alphas))


def _bias(grad: np.ndarray, y: np.ndarray, a: np.ndarray, C: float) -> float:
    # y_i f(x_i) - 1 = grad_i + y_i b; KKT pins b for free vectors and bounds it otherwise
    thr = 1e-8 * C
    free = (a > thr) & (a < C - thr)
    if free.any():
        return float(np.mean(-y[free] * grad[free]))
    at_lo = a <= thr
    at_hi = ~at_lo
    lower = np.concatenate([-grad[at_lo & (y > 0)], grad[at_hi & (y < 0)]])
    upper = np.concatenate([-grad[at_hi & (y > 0)], grad[at_lo & (y < 0)]])
    if lower.size and upper.size:
        return 0.5 * (float(np.max(lower)) + float(np.min(upper)))
    if lower.size:
        return float(np.max(lower))
    if upper.size:
        return float(np.min(upper))
    return 0.0


def solve_dual(p: DualProblem) -> SvmModel:
    K = p.K
    jitter = 0.0
    if p.kernel.get("pooling") == "max":
        if not p.allow_non_psd:
            raise ValidationError("max-pooled Gram is not guaranteed PSD; set allow_non_psd to train on it")
        jitter = max(0.0, -min_eigenvalue(K)) + JITTER_PAD
        K = K + jitter * np.eye(p.n)
    y, C, n = p.y, float(p.box_C), p.n
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(K).copy()
    a = np.zeros(n)
    grad = -np.ones(n)
    pos = y > 0
    gap = np.inf
    it = 0
    while True:
        v = -y * grad
        up = np.where(pos, a < C, a > 0.0)
        low = np.where(pos, a > 0.0, a < C)
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gap = float(vu[i] - vl[j])
        if gap <= p.stop_tol:
            break
        if it >= p.max_iterations:
            raise ConvergenceError("SMO did not converge", residual=gap, iterations=it)
        curv = max(diag[i] + diag[j] - 2.0 * K[i, j], CURVATURE_FLOOR)
        t = gap / curv
        cap_i = C - a[i] if y[i] > 0 else a[i]
        cap_j = a[j] if y[j] > 0 else C - a[j]
        # direction: a_i += y_i t, a_j -= y_j t keeps sum(a * y) fixed
        old_i, old_j = a[i], a[j]
        if t >= cap_i and cap_i <= cap_j:
            t = cap_i
            a[i] = C if y[i] > 0 else 0.0
            a[j] = old_j - y[j] * t
        elif t >= cap_j:
            t = cap_j
            a[j] = 0.0 if y[j] > 0 else C
            a[i] = old_i + y[i] * t
        else:
            a[i] = old_i + y[i] * t
            a[j] = old_j - y[j] * t
        a[i] = min(max(a[i], 0.0), C)
        a[j] = min(max(a[j], 0.0), C)
        grad += Q[:, i] * (a[i] - old_i) + Q[:, j] * (a[j] - old_j)
        it += 1
    kernel = dict(p.kernel)
    if jitter:
        kernel["jitter"] = float(jitter).hex()
    return SvmModel(alphas=a, bias=_bias(grad, y, a, C), labels=y.copy(), box_C=C,
                    sample_ids=list(p.sample_ids), kernel=kernel, jitter=jitter,
                    iterations=it, gap=gap)


def decision(model: SvmModel, kernel_row) -> float:
    row = np.asarray(kernel_row, dtype=np.float64).ravel()
    if row.size != model.alphas.size:
        raise ConfigError(f"kernel row has length {row.size}, model has {model.alphas.size} training samples")
    return float(row @ model.coef + model.bias)


@dataclass
class KktReport:
    per_sample: np.ndarray
    equality_violation: float
    box_violation: float
    kkt_tol: float

    @property
    def max_violation(self) -> float:
        worst = float(np.max(self.per_sample)) if self.per_sample.size else 0.0
        return max(worst, self.equality_violation, self.box_violation)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.kkt_tol


def kkt_report(model: SvmModel, p: DualProblem, kkt_tol: float = 1e-8) -> KktReport:
    """Per-sample complementary-slackness residuals plus constraint violations.

    The model's alphas and bias are taken as given, so a perturbed model
    reports violations of the size of the perturbation.
    """
    a, y, C = model.alphas, p.y, p.box_C
    K = p.K + model.jitter * np.eye(p.n)
    margins = y * (K @ (y * a) + model.bias)
    thr = 1e-8 * C
    viol = np.where(a <= thr, np.maximum(0.0, 1.0 - margins),
                    np.where(a >= C - thr, np.maximum(0.0, margins - 1.0), np.abs(margins - 1.0)))
    box = float(np.max(np.maximum(np.maximum(-a, a - C), 0.0)))
    return KktReport(per_sample=viol, equality_violation=abs(float(np.sum(a * y))),
                     box_violation=box, kkt_tol=kkt_tol)


# ----------------------------------------------------------------------
# text format: one ``key = value`` per line, floats as C99 hex literals

def save_model(model: SvmModel, path: str | Path) -> None:
    lines = [
        f"format = {SVM_FORMAT}",
        f"version = {SVM_FORMAT_VERSION}",
        f"n = {model.alphas.size}",
        f"box_C = {float(model.box_C).hex()}",
        f"bias = {float(model.bias).hex()}",
        f"jitter = {float(model.jitter).hex()}",
        f"gap = {float(model.gap).hex()}",
        f"iterations = {model.iterations}",
        f"kernel = {json.dumps(model.kernel, sort_keys=True)}",
        f"sample_ids = {json.dumps(list(model.sample_ids))}",
        "labels = " + " ".join("+1" if v > 0 else "-1" for v in model.labels),
        f"alphas = {floats_to_hex(model.alphas)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> SvmModel:
    fields = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise FormatError(f"{path}: malformed line {line!r}")
        fields[key.strip()] = value
    if fields.get("format") != SVM_FORMAT:
        raise FormatError(f"{path}: not an svm model file")
    if int(fields.get("version", -1)) != SVM_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported svm format version {fields.get('version')}")
    n = int(fields["n"])
    labels = np.array([float(t) for t in fields["labels"].split()])
    alphas = hex_to_floats(fields["alphas"])
    if labels.size != n or alphas.size != n:
        raise FormatError(f"{path}: expected {n} labels and alphas")
    return SvmModel(alphas=alphas, bias=float.fromhex(fields["bias"]), labels=labels,
                    box_C=float.fromhex(fields["box_C"]), sample_ids=json.loads(fields["sample_ids"]),
                    kernel=json.loads(fields["kernel"]), jitter=float.fromhex(fields["jitter"]),
                    iterations=int(fields["iterations"]), gap=float.fromhex(fields["gap"]))
