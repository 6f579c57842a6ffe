"""Finite unitary groups acting on R^d and the group-averaging operator.

Two element encodings are supported:

* permutation-coded -- ``(g x)[k] = sign[k] * x[perm[k]]``; every built-in
  kind uses this and group axioms are checked exactly;
* matrix-coded -- arbitrary orthogonal d x d matrices, checked within a
  tolerance.

Haar integration over a finite group is the uniform average with weight
1/|G|, accumulated sequentially in canonical element order.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, GroupError

GROUP_KINDS = (
    "cyclic_shift",
    "toroidal_translation_2d",
    "rot90_reflect_2d",
    "signed_permutation",
    "explicit_matrices",
)
BUILTIN_KINDS = GROUP_KINDS[:4]
DEFAULT_TOL = 1e-9
PSI_CAP = 4096


def default_image_shape(dim: int) -> tuple[int, int]:
    """Most-square factorisation ``h * w = dim`` with ``h <= w``."""
    h = int(math.isqrt(dim))
    while dim % h:
        h -= 1
    return h, dim // h


@dataclass
class GroupSpec:
    kind: str
    dim: int
    params: dict = field(default_factory=dict)
    matrices: list | None = None

    def __post_init__(self):
        if self.kind not in GROUP_KINDS:
            raise ConfigError(f"unknown group kind {self.kind!r}; expected one of {GROUP_KINDS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"group dim must be a positive integer, got {self.dim!r}")
        self.dim = int(self.dim)
        if self.kind in ("toroidal_translation_2d", "rot90_reflect_2d"):
            h, w = self.image_shape()
            if h * w != self.dim:
                raise ConfigError(f"height*width = {h}*{w} != dim {self.dim}")
        if self.kind == "explicit_matrices":
            if not self.matrices:
                raise ConfigError("explicit_matrices requires at least one matrix")
            mats = [np.asarray(m, dtype=np.float64) for m in self.matrices]
            for m in mats:
                if m.shape != (self.dim, self.dim):
                    raise ConfigError(f"explicit matrix has shape {m.shape}, expected {(self.dim, self.dim)}")
            self.matrices = mats

    def image_shape(self) -> tuple[int, int]:
        if "height" in self.params or "width" in self.params:
            h = int(self.params.get("height", self.dim // int(self.params.get("width", 1))))
            w = int(self.params.get("width", self.dim // max(h, 1)))
            return h, w
        return default_image_shape(self.dim)

    def to_config(self) -> dict[str, str]:
        out = {"kind": self.kind, "dim": str(self.dim)}
        for key, value in sorted(self.params.items()):
            if key == "generators":
                continue
            out[key] = str(value)
        return out

    @classmethod
    def from_config(cls, section: Mapping[str, str], base_dir: str | Path | None = None) -> "GroupSpec":
        """Build a spec from a flat ``key = value`` block.

        ``matrix_file`` (explicit_matrices only) names a whitespace-separated
        text file, resolved relative to ``base_dir``.
        """
        try:
            kind = section["kind"]
            dim = int(section["dim"])
        except KeyError as exc:
            raise ConfigError(f"group config missing key {exc.args[0]!r}") from None
        except ValueError:
            raise ConfigError(f"group dim must be an integer, got {section['dim']!r}") from None
        params = {}
        for key in ("height", "width", "max_order"):
            if key in section and str(section[key]).strip():
                params[key] = int(section[key])
        matrices = None
        if kind == "explicit_matrices":
            path = section.get("matrix_file")
            if not path:
                raise ConfigError("explicit_matrices requires matrix_file")
            path = Path(path)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            params["matrix_file"] = str(section["matrix_file"])
            matrices = read_matrix_file(path)
        return cls(kind=kind, dim=dim, params=params, matrices=matrices)


def read_matrix_file(path: str | Path) -> list[np.ndarray]:
    """One row per line, space separated; blank lines separate matrices."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read matrix file {path}: {exc}") from None
    blocks, current = [], []
    for line in text.splitlines():
        if line.strip():
            current.append([float(t) for t in line.split()])
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return [np.array(b, dtype=np.float64) for b in blocks]


def write_matrix_file(path: str | Path, matrices: Sequence[np.ndarray]) -> None:
    chunks = []
    for m in matrices:
        chunks.append("\n".join(" ".join(repr(float(v)) for v in row) for row in np.asarray(m)))
    Path(path).write_text("\n\n".join(chunks) + "\n")


@dataclass
class AxiomResult:
    name: str
    passed: bool
    deviation: float


@dataclass
class ValidationReport:
    tol: float
    axioms: list[AxiomResult]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.axioms)

    def __getitem__(self, name: str) -> AxiomResult:
        for a in self.axioms:
            if a.name == name:
                return a
        raise KeyError(name)


class FiniteUnitaryGroup:
    """An ordered finite set of orthogonal transforms of R^d.

    Construct through :func:`make_group`. Passing ``validate=False`` keeps
    sets that are not actually groups (missing products are recorded as -1
    in the Cayley table); this exists for negative testing.
    """

    def __init__(self, dim: int, *, perms=None, signs=None, matrices=None,
                 name: str = "", validate: bool = True, tol: float = DEFAULT_TOL):
        self.dim = int(dim)
        self.name = name
        self.tol = tol
        self.spec = None
        if perms is not None:
            perms = np.asarray(perms, dtype=np.intp).reshape(-1, self.dim)
            signs = (np.ones(perms.shape, dtype=np.float64) if signs is None
                     else np.asarray(signs, dtype=np.float64).reshape(perms.shape))
            self._perms, self._signs, self._mats = perms, signs, None
            n = perms.shape[0]
        elif matrices is not None:
            mats = np.asarray(matrices, dtype=np.float64)
            if mats.ndim != 3 or mats.shape[1:] != (self.dim, self.dim):
                raise GroupError(f"matrices must have shape (n, {self.dim}, {self.dim}), got {mats.shape}")
            self._perms = self._signs = None
            self._mats = mats
            n = mats.shape[0]
        else:
            raise GroupError("group needs permutation or matrix elements")
        if n == 0:
            raise GroupError("group must contain at least one element")
        for arr in (self._perms, self._signs, self._mats):
            if arr is not None:
                arr.setflags(write=False)
        self._build_tables()
        if validate:
            report = validate_group(self, tol)
            if not report.passed:
                failed = ", ".join(f"{a.name} (deviation {a.deviation:.3g})" for a in report.axioms if not a.passed)
                raise GroupError(f"not a finite unitary group: {failed}")

    # ------------------------------------------------------------------
    @property
    def order(self) -> int:
        return (self._perms if self._mats is None else self._mats).shape[0]

    def __len__(self) -> int:
        return self.order

    def __repr__(self) -> str:
        return f"FiniteUnitaryGroup({self.name or 'anonymous'}, dim={self.dim}, order={self.order})"

    @property
    def permutation_coded(self) -> bool:
        return self._mats is None

    def matrix(self, index: int) -> np.ndarray:
        self._check_index(index)
        if self._mats is not None:
            return self._mats[index].copy()
        m = np.zeros((self.dim, self.dim))
        m[np.arange(self.dim), self._perms[index]] = self._signs[index]
        return m

    def matrices(self) -> np.ndarray:
        return np.stack([self.matrix(i) for i in range(self.order)])

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.order:
            raise IndexError(f"group element index {index} out of range [0, {self.order})")

    def apply(self, index: int, x: np.ndarray) -> np.ndarray:
        """Act with element ``index`` on a vector or on each row of a matrix."""
        self._check_index(index)
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ConfigError(f"vector length {x.shape[-1]} does not match group dim {self.dim}")
        if self._mats is not None:
            return x @ self._mats[index].T
        # take() keeps C order, so downstream reductions see the same memory layout as x
        return np.take(x, self._perms[index], axis=-1) * self._signs[index]

    def orbit(self, x: np.ndarray) -> np.ndarray:
        """All transforms of a single vector, one row per element."""
        return np.stack([self.apply(i, x) for i in range(self.order)])

    def without(self, index: int) -> "FiniteUnitaryGroup":
        """Copy with one element removed, bypassing validation."""
        keep = [i for i in range(self.order) if i != index]
        if self._mats is not None:
            return FiniteUnitaryGroup(self.dim, matrices=self._mats[keep], name=self.name + "-corrupted",
                                      validate=False, tol=self.tol)
        return FiniteUnitaryGroup(self.dim, perms=self._perms[keep], signs=self._signs[keep],
                                  name=self.name + "-corrupted", validate=False, tol=self.tol)

    # ------------------------------------------------------------------
    def _find(self, perm=None, sign=None, mat=None) -> tuple[int, float]:
        """Index of the element equal to the given one and the distance to it."""
        if self._mats is None:
            key = (perm.tobytes(), sign.tobytes())
            idx = self._index.get(key)
            if idx is not None:
                return idx, 0.0
            # distinct signed permutation matrices differ by at least 1 in some entry
            return -1, 1.0
        dev = np.max(np.abs(self._mats - mat), axis=(1, 2))
        k = int(np.argmin(dev))
        return (k if dev[k] <= self.tol else -1), float(dev[k])

    def _build_tables(self) -> None:
        n = self.order
        if self._mats is None:
            self._index = {}
            for i in range(n):
                self._index.setdefault((self._perms[i].tobytes(), self._signs[i].tobytes()), i)
        cayley = np.full((n, n), -1, dtype=np.intp)
        closure_dev = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                if self._mats is None:
                    pa, sa, pb, sb = self._perms[a], self._signs[a], self._perms[b], self._signs[b]
                    # (g_a g_b)(x)[k] = sa[k] * sb[pa[k]] * x[pb[pa[k]]]
                    idx, dev = self._find(perm=pb[pa], sign=sa * sb[pa])
                else:
                    idx, dev = self._find(mat=self._mats[a] @ self._mats[b])
                cayley[a, b] = idx
                closure_dev[a, b] = dev
        self.cayley_table = cayley
        self._closure_dev = closure_dev
        eye = np.eye(self.dim)
        if self._mats is None:
            ident, dev = self._find(perm=np.arange(self.dim, dtype=np.intp), sign=np.ones(self.dim))
        else:
            ident, dev = self._find(mat=eye)
        self.identity_index = ident
        self._identity_dev = dev
        inverse = np.full(n, -1, dtype=np.intp)
        if ident >= 0:
            for a in range(n):
                hits = np.flatnonzero(cayley[a] == ident)
                if hits.size:
                    inverse[a] = hits[0]
        self.inverse_table = inverse
        for arr in (self.cayley_table, self.inverse_table):
            arr.setflags(write=False)


# ----------------------------------------------------------------------
# validation

def _unitarity_deviation(G: FiniteUnitaryGroup) -> float:
    if G.permutation_coded:
        worst = 0.0
        for i in range(G.order):
            p, s = G._perms[i], G._signs[i]
            if sorted(p.tolist()) != list(range(G.dim)):
                return math.inf
            worst = max(worst, float(np.max(np.abs(np.abs(s) - 1.0))))
        return worst
    eye = np.eye(G.dim)
    return float(max(np.max(np.abs(m.T @ m - eye)) for m in G._mats))


def validate_group(G: FiniteUnitaryGroup, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check unitarity, closure, identity and inverses; never raises."""
    unit = _unitarity_deviation(G)
    closure = float(np.max(G._closure_dev))
    ident = G._identity_dev if G.identity_index >= 0 else max(G._identity_dev, 1.0)
    if G.identity_index < 0:
        inv = math.inf
    else:
        # distance of the best candidate product g_a g_b to the identity
        inv = 0.0
        eye = np.eye(G.dim)
        for a in range(G.order):
            if G.inverse_table[a] >= 0:
                continue
            if G.permutation_coded:
                inv = max(inv, 1.0)
            else:
                inv = max(inv, float(min(np.max(np.abs(G._mats[a] @ m - eye)) for m in G._mats)))
    axioms = [
        AxiomResult("unitarity", unit <= tol, unit),
        AxiomResult("closure", bool(np.all(G.cayley_table >= 0)) and closure <= tol, closure),
        AxiomResult("identity", G.identity_index >= 0, ident),
        AxiomResult("inverses", bool(np.all(G.inverse_table >= 0)), inv),
    ]
    return ValidationReport(tol=tol, axioms=axioms)


# ----------------------------------------------------------------------
# constructors

def _cyclic(d: int):
    idx = np.arange(d)
    return np.stack([(idx - s) % d for s in range(d)])


def _toroidal(h: int, w: int):
    r, c = np.divmod(np.arange(h * w), w)
    perms = []
    for a in range(h):
        for b in range(w):
            perms.append(((r - a) % h) * w + (c - b) % w)
    return np.stack(perms)


def _rot_reflect(h: int, w: int):
    grid = np.arange(h * w).reshape(h, w)
    if h == w:
        images = [np.rot90(grid, k) for k in range(4)]
        images += [np.rot90(np.fliplr(grid), k) for k in range(4)]
    else:
        images = [grid, np.rot90(grid, 2), np.flipud(grid), np.fliplr(grid)]
    return np.stack([im.ravel() for im in images])


def _close_generators(d: int, generators, max_order: int):
    ident = (np.arange(d, dtype=np.intp), np.ones(d))
    seen = {(ident[0].tobytes(), ident[1].tobytes())}
    elements = [ident]
    queue = deque([ident])
    gens = [(np.asarray(p, dtype=np.intp), np.asarray(s, dtype=np.float64)) for p, s in generators]
    for p, s in gens:
        if p.shape != (d,) or s.shape != (d,) or sorted(p.tolist()) != list(range(d)):
            raise GroupError("signed permutation generator must be a permutation of range(dim) with dim signs")
        if not np.all(np.abs(s) == 1.0):
            raise GroupError("signed permutation signs must be +1 or -1")
    while queue:
        pa, sa = queue.popleft()
        for pb, sb in gens:
            pc, sc = pb[pa], sa * sb[pa]
            key = (pc.tobytes(), sc.tobytes())
            if key in seen:
                continue
            seen.add(key)
            elements.append((pc, sc))
            queue.append((pc, sc))
            if len(elements) > max_order:
                raise GroupError(f"generated group exceeds max_order={max_order}")
    return np.stack([e[0] for e in elements]), np.stack([e[1] for e in elements])


def _default_signed(d: int):
    """Cyclic shifts on the first ceil(d/2) coordinates times negation of the rest."""
    m = (d + 1) // 2
    perms, signs = [], []
    for negate in ((False, True) if d > m else (False,)):
        for s in range(m):
            p = np.arange(d)
            p[:m] = (np.arange(m) - s) % m
            sg = np.ones(d)
            if negate:
                sg[m:] = -1.0
            perms.append(p)
            signs.append(sg)
    return np.stack(perms), np.stack(signs)


def _dedupe(perms, signs=None):
    """Drop repeated elements (degenerate image shapes), keeping first occurrences."""
    if signs is None:
        signs = np.ones(perms.shape)
    seen, keep = set(), []
    for i in range(perms.shape[0]):
        key = (perms[i].tobytes(), signs[i].tobytes())
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return perms[keep], signs[keep]


def make_group(spec: GroupSpec, tol: float = DEFAULT_TOL) -> FiniteUnitaryGroup:
    """Instantiate a spec; element order is canonical for each kind."""
    G = _make_group(spec, tol)
    G.spec = spec
    return G


def _make_group(spec: GroupSpec, tol: float) -> FiniteUnitaryGroup:
    d = spec.dim
    if spec.kind == "cyclic_shift":
        return FiniteUnitaryGroup(d, perms=_cyclic(d), name=f"cyclic_shift[{d}]", tol=tol)
    if spec.kind == "toroidal_translation_2d":
        h, w = spec.image_shape()
        return FiniteUnitaryGroup(d, perms=_toroidal(h, w), name=f"toroidal[{h}x{w}]", tol=tol)
    if spec.kind == "rot90_reflect_2d":
        h, w = spec.image_shape()
        perms, signs = _dedupe(_rot_reflect(h, w))
        return FiniteUnitaryGroup(d, perms=perms, signs=signs, name=f"rot90_reflect[{h}x{w}]", tol=tol)
    if spec.kind == "signed_permutation":
        gens = spec.params.get("generators")
        if gens:
            pairs = [(g["perm"], g.get("signs", [1.0] * d)) if isinstance(g, Mapping) else g for g in gens]
            perms, signs = _close_generators(d, pairs, int(spec.params.get("max_order", 100_000)))
        else:
            perms, signs = _default_signed(d)
        return FiniteUnitaryGroup(d, perms=perms, signs=signs, name=f"signed_permutation[{d}]", tol=tol)
    mats = np.stack(spec.matrices)
    return FiniteUnitaryGroup(d, matrices=mats, name=f"explicit[{len(mats)}x{d}]", tol=tol)


def trivial_group(dim: int) -> FiniteUnitaryGroup:
    return FiniteUnitaryGroup(dim, perms=np.arange(dim)[None, :], name=f"identity[{dim}]")


def apply(G: FiniteUnitaryGroup, element_index: int, x) -> np.ndarray:
    return G.apply(element_index, x)


def group_average(G: FiniteUnitaryGroup, x) -> np.ndarray:
    """Uniform average of g(x) over the group, accumulated in element order."""
    x = np.asarray(x, dtype=np.float64)
    acc = G.apply(0, x).copy()
    for i in range(1, G.order):
        acc += G.apply(i, x)
    return acc / G.order


def psi_matrix(G: FiniteUnitaryGroup, cap: int = PSI_CAP) -> np.ndarray:
    if G.dim > cap:
        raise ConfigError(f"dim {G.dim} exceeds the psi materialisation cap {cap}")
    acc = np.zeros((G.dim, G.dim))
    rows = np.arange(G.dim)
    for i in range(G.order):
        if G.permutation_coded:
            acc[rows, G._perms[i]] += G._signs[i]
        else:
            acc += G._mats[i]
    return acc / G.order


class PsiOperator:
    """Group-averaging projector, with the d x d matrix built lazily and capped."""

    def __init__(self, group: FiniteUnitaryGroup, cap: int = PSI_CAP):
        self.group = group
        self.cap = cap
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = psi_matrix(self.group, self.cap)
            self._matrix.setflags(write=False)
        return self._matrix

    def __call__(self, x) -> np.ndarray:
        return group_average(self.group, x)
