"""Symmetric eigenvalues by cyclic Jacobi rotation.

Rotations are applied in round-robin (tournament) order so that each step
touches n/2 disjoint index pairs at once; a sweep is n-1 such steps, and
every off-diagonal pair is annihilated once per sweep.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError

EIG_CAP = 2048
SYMMETRY_TOL = 1e-8


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigenvalues(M: np.ndarray, rtol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    A = np.array(M, dtype=np.float64)
    n = A.shape[0]
    if n == 1:
        return A.diagonal().copy()
    A = 0.5 * (A + A.T)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n)
    rounds = _round_robin(n)
    prev_off = np.inf
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(A.diagonal() ** 2), 0.0))
        if off <= rtol * scale or off >= prev_off:
            break
        prev_off = off
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            active = apq != 0.0
            c = np.ones_like(apq)
            s = np.zeros_like(apq)
            if active.any():
                tau = (aqq[active] - app[active]) / (2.0 * apq[active])
                sgn = np.where(tau >= 0.0, 1.0, -1.0)
                t = sgn / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                c[active] = 1.0 / np.sqrt(1.0 + t * t)
                s[active] = t * c[active]
            # J^T A J as two row passes: B = J^T A, then J^T B^T = (B J)^T = B J
            c2, s2 = c[:, None], s[:, None]
            for _ in range(2):
                rp, rq = A[p], A[q]
                A[p], A[q] = c2 * rp - s2 * rq, s2 * rp + c2 * rq
                A = A.T.copy()
            A[p, q] = 0.0
            A[q, p] = 0.0
    return np.sort(A.diagonal())


def min_eigenvalue(M: np.ndarray, cap: int = EIG_CAP) -> float:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] > cap:
        raise ValidationError(f"matrix size {M.shape[0]} exceeds eigensolver cap {cap}")
    if M.shape[0] == 0:
        raise ValidationError("empty matrix")
    asym = float(np.max(np.abs(M - M.T)))
    if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(M)))):
        raise ValidationError(f"matrix is not symmetric (max |M - M^T| = {asym:.3e})")
    return float(jacobi_eigenvalues(M)[0])
