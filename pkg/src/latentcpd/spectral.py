"""Graph Laplacians, singular-value signatures and cosine anomaly scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .graphseq import GraphSnapshot

TELEPORT = 0.05
PERRON_TOL = 1e-10
PERRON_MAX_ITER = 10_000


class PerronError(RuntimeError):
    """Power iteration failed even on the teleported chain."""


@dataclass(frozen=True)
class PerronResult:
    phi: np.ndarray
    perturbed: bool
    iterations: int


def _weights(g) -> np.ndarray:
    if isinstance(g, GraphSnapshot):
        return g.weights
    return np.asarray(g, dtype=float)


def laplacian_undirected(g) -> np.ndarray:
    """Normalised Laplacian ``I - D^-1/2 W D^-1/2``.

    Rows and columns of zero-degree nodes are zero, so an empty graph maps to
    the zero matrix.
    """
    W = _weights(g)
    d = W.sum(axis=1)
    live = d > 0
    inv = np.zeros_like(d)
    inv[live] = 1.0 / np.sqrt(d[live])
    L = -(inv[:, None] * W * inv[None, :])
    L[np.diag_indices_from(L)] += live.astype(float)
    return 0.5 * (L + L.T)


def transition_matrix(g) -> np.ndarray:
    """Row-normalised weights; rows without out-weight become uniform."""
    W = _weights(g)
    n = W.shape[0]
    out = W.sum(axis=1)
    P = np.empty_like(W)
    live = out > 0
    P[live] = W[live] / out[live, None]
    P[~live] = 1.0 / n
    return P


def _power(P: np.ndarray, tol: float, max_iter: int):
    n = P.shape[0]
    # lazy chain: same stationary vector, aperiodic whenever P is irreducible
    Q = 0.5 * (P + np.eye(n))
    phi = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        nxt = phi @ Q
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - phi)) < tol:
            return nxt, it, True
        phi = nxt
    return phi, max_iter, False


def perron_vector(P: np.ndarray, tol: float = PERRON_TOL, max_iter: int = PERRON_MAX_ITER,
                  teleport: float = TELEPORT) -> PerronResult:
    """Stationary distribution ``phi`` of a row-stochastic ``P`` (``phi P = phi``).

    Reducible chains, and chains where power iteration does not settle, are
    replaced by ``(1 - teleport) P + teleport / n`` and flagged as perturbed.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
    if ncomp == 1:
        phi, it, ok = _power(P, tol, max_iter)
        if ok and np.all(phi > 0):
            return PerronResult(phi, False, it)
    Pg = (1.0 - teleport) * P + teleport / n
    phi, it, ok = _power(Pg, tol, max_iter)
    if not ok:
        raise PerronError(f"power iteration did not converge in {max_iter} steps")
    return PerronResult(phi, True, it)


def laplacian_directed(g, return_info: bool = False):
    """Directed Laplacian ``I - (S P S^-1 + S^-1 P^T S) / 2`` with ``S = diag(phi)^1/2``.

    With ``return_info=True`` a ``(L, PerronResult)`` pair is returned.
    """
    P = transition_matrix(g)
    res = perron_vector(P)
    s = np.sqrt(res.phi)
    M = s[:, None] * P / s[None, :]
    L = np.eye(P.shape[0]) - 0.5 * (M + M.T)
    return (L, res) if return_info else L


def spectrum(L: np.ndarray) -> np.ndarray:
    """Singular values of a symmetric matrix, i.e. ``|eigenvalues|``, descending."""
    L = np.asarray(L, dtype=float)
    if not np.all(np.isfinite(L)):
        raise np.linalg.LinAlgError("non-finite Laplacian")
    ev = np.linalg.eigvalsh(0.5 * (L + L.T))
    return np.sort(np.abs(ev))[::-1]


def normal_pattern(signatures) -> np.ndarray:
    """Element-wise mean of equal-length signatures."""
    sigs = [np.asarray(s, dtype=float) for s in signatures]
    if not sigs:
        raise ValueError("need at least one signature")
    if len({s.shape for s in sigs}) != 1:
        raise ValueError("signature length mismatch")
    return np.mean(sigs, axis=0)


def cosine_score(a, b) -> float:
    """``1 - cos(a, b)`` clipped to [0, 1]; zero vectors: 0 if both, else 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("signature length mismatch")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0 if na == nb else 1.0
    return float(min(1.0, max(0.0, 1.0 - np.dot(a, b) / (na * nb))))


def score_z1(sigma_p, sigma_a) -> float:
    """Deviation of the actual snapshot from the prediction."""
    return cosine_score(sigma_p, sigma_a)


def score_z2(sigma_nor, sigma_a) -> float:
    """Deviation of the actual snapshot from the window's normal pattern."""
    return cosine_score(sigma_nor, sigma_a)


def combine_score(z1: float, z2: float, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * z1 + (1.0 - alpha) * z2


def signature(g, mode: str = "undirected") -> tuple[np.ndarray, bool]:
    """Laplacian signature of a snapshot and whether teleportation was needed."""
    if mode == "undirected":
        return spectrum(laplacian_undirected(g)), False
    if mode == "directed":
        L, info = laplacian_directed(g, return_info=True)
        return spectrum(L), info.perturbed
    raise ValueError(f"unknown laplacian mode {mode!r}")
