"""Graph containers, normalized/scaled Laplacians and Chebyshev bases."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

MAX_CHEB_ORDER = 8


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray
    degree: np.ndarray
    laplacian_norm: np.ndarray
    laplacian_scaled: np.ndarray
    lambda_max: float

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


def largest_eigenvalue(L: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue magnitude by power iteration.

    Falls back to a dense eigensolver for N <= 64 when the iteration does not
    converge within ``max_iter``.
    """
    n = L.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = L @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        lam = float(v @ w)
        # residual bounds the eigenvalue error for symmetric L
        if np.linalg.norm(w - lam * v) <= tol * max(1.0, abs(lam)):
            return abs(lam)
        v = w / norm
    if n <= 64:
        return float(np.max(np.abs(np.linalg.eigvals(L))))
    logger.warning("power iteration did not converge; using last estimate %.6g", lam)
    return abs(lam)


def build_laplacians(adjacency) -> Graph:
    """``L = I - D^-1/2 A D^-1/2`` and ``L_hat = (2 / lambda_max) L - I``.

    Nodes of zero degree get 0 in place of the undefined inverse root, so
    their row of ``L`` is the identity row.
    """
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"adjacency must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("adjacency contains non-finite weights")
    if np.any(A < 0):
        raise InvalidInputError("adjacency contains negative weights")
    n = A.shape[0]
    deg = A.sum(axis=1)
    inv_sqrt = np.zeros(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    L = np.eye(n) - inv_sqrt[:, None] * A * inv_sqrt[None, :]
    lam = largest_eigenvalue(L)
    L_hat = (2.0 / lam) * L - np.eye(n)
    return Graph(A, deg, L, L_hat, lam)


def chebyshev_basis(L_hat: np.ndarray, order: int) -> np.ndarray:
    """Stack ``T_0 .. T_{order-1}`` of ``L_hat`` via ``T_m = 2 L_hat T_{m-1} - T_{m-2}``."""
    if order < 1:
        raise ConfigError(f"must be >= 1, got {order}", "cheb_order")
    if order > MAX_CHEB_ORDER:
        raise ConfigError(f"must be <= {MAX_CHEB_ORDER}, got {order}", "cheb_order")
    n = L_hat.shape[0]
    polys = [np.eye(n)]
    if order > 1:
        polys.append(L_hat.copy())
    for _ in range(2, order):
        polys.append(2.0 * L_hat @ polys[-1] - polys[-2])
    return np.stack(polys)


def read_edge_list(path, n_nodes: int | None = None, node_ids=None) -> np.ndarray:
    """Read ``src,dst,weight`` rows into a dense adjacency matrix.

    Node references are integer indices unless ``node_ids`` maps names to rows.
    """
    index = {str(name): i for i, name in enumerate(node_ids)} if node_ids is not None else None
    edges = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InvalidInputError(f"{path}: empty edge list")
        if [h.strip() for h in header] != ["src", "dst", "weight"]:
            raise InvalidInputError(f"{path}: expected header src,dst,weight, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                src, dst, w = row
                if index is not None:
                    i, j = index[src.strip()], index[dst.strip()]
                else:
                    i, j = int(src), int(dst)
                edges.append((i, j, float(w)))
            except (ValueError, KeyError) as exc:
                raise InvalidInputError(f"{path}: row {lineno}: cannot parse {row} ({exc})") from None
    if n_nodes is None:
        n_nodes = len(index) if index is not None else 1 + max(max(i, j) for i, j, _ in edges)
    A = np.zeros((n_nodes, n_nodes))
    for i, j, w in edges:
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise InvalidInputError(f"{path}: edge ({i}, {j}) outside {n_nodes} nodes")
        A[i, j] = w
    return A


def write_edge_list(path, adjacency: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "weight"])
        for i, j in zip(*np.nonzero(adjacency)):
            writer.writerow([int(i), int(j), repr(float(adjacency[i, j]))])
