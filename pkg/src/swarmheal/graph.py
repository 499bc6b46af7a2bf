"""Swarm topologies and their communication graphs.

A topology is an ordered list of (uav index, 3-D position). Graphs are
built from a distance predicate, and connectivity can be answered two
ways: by traversal of the adjacency matrix (fast path) or by the zero
eigenvalue multiplicity of the graph Laplacian (spectral oracle, via a
hand-rolled cyclic Jacobi solver).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

LinkPredicate = Callable[[np.ndarray], np.ndarray]


@dataclass
class TopologyMatrix:
    """Positions of the live swarm, one row per UAV, indices strictly ascending."""

    indices: np.ndarray  # (n,) int
    positions: np.ndarray  # (n, 3) float, meters

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.indices.ndim != 1 or len(self.indices) < 1:
            raise ValueError("topology needs at least one row")
        if self.positions.shape != (len(self.indices), 3):
            raise ValueError("positions must be (n, 3)")
        if np.any(self.indices[1:] <= self.indices[:-1]):
            raise ValueError("uav indices must be strictly ascending")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")

    @property
    def n(self) -> int:
        return len(self.indices)

    def row_of(self, uav_index: int) -> int:
        j = int(np.searchsorted(self.indices, uav_index))
        if j >= self.n or self.indices[j] != uav_index:
            raise KeyError(f"uav index {uav_index} not in topology")
        return j

    def with_positions(self, positions: np.ndarray) -> "TopologyMatrix":
        return TopologyMatrix(self.indices.copy(), np.asarray(positions, dtype=np.float64))

    def subset(self, keep: Sequence[int]) -> "TopologyMatrix":
        """Restrict to the given uav indices (any order; output stays ascending)."""
        keep = np.unique(np.asarray(list(keep), dtype=np.int64))
        rows = np.searchsorted(self.indices, keep)
        if np.any(rows >= self.n) or np.any(self.indices[rows] != keep):
            raise KeyError("subset contains indices not in topology")
        return TopologyMatrix(keep, self.positions[rows])

    def translate(self, offset: np.ndarray) -> "TopologyMatrix":
        return self.with_positions(self.positions + np.asarray(offset, dtype=np.float64))

    def distance_matrix(self) -> np.ndarray:
        d = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", d, d))


def centroid(topology: TopologyMatrix) -> np.ndarray:
    """Arithmetic mean of the positions."""
    return topology.positions.mean(axis=0)


@dataclass
class RuavGraph:
    """A topology plus the symmetric 0/1 adjacency induced by a link predicate."""

    topology: TopologyMatrix
    adjacency: np.ndarray  # (n, n) int, zero diagonal

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        n = self.topology.n
        if a.shape != (n, n):
            raise ValueError("adjacency shape must match topology")
        if np.any(a != a.T) or np.any(np.diag(a) != 0):
            raise ValueError("adjacency must be symmetric with zero diagonal")
        self.adjacency = a.astype(np.int64)

    @property
    def n(self) -> int:
        return self.topology.n

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


def build_graph(topology: TopologyMatrix, link_predicate: LinkPredicate) -> RuavGraph:
    """Connect every pair whose distance satisfies the predicate.

    The predicate must accept a numpy array of distances and return a
    boolean array (plain comparisons like ``lambda d: d <= 120`` work).
    """
    dist = topology.distance_matrix()
    adj = np.asarray(link_predicate(dist), dtype=bool)
    np.fill_diagonal(adj, False)
    adj = adj & adj.T  # predicate is distance-only, so this is a no-op guard
    return RuavGraph(topology, adj.astype(np.int64))


def laplacian(graph: RuavGraph) -> np.ndarray:
    """L = D - A with exact integer entries; rows sum to zero."""
    a = graph.adjacency
    return np.diag(a.sum(axis=1)) - a


def clusters(graph: RuavGraph) -> list[set[int]]:
    """Partition of uav indices into connected components (BFS over rows)."""
    comps = []
    for comp in _component_masks(graph.adjacency):
        comps.append(set(int(i) for i in graph.topology.indices[comp]))
    return comps


def cluster_count(graph: RuavGraph) -> int:
    """Number of connected components; 1 means the swarm forms a CCN."""
    return sum(1 for _ in _component_masks(graph.adjacency))


def is_connected(adjacency: np.ndarray) -> bool:
    """Single-source reachability check; True for a 1-node graph."""
    n = adjacency.shape[0]
    if n == 1:
        return True
    adj = adjacency.astype(bool)
    visited = np.zeros(n, dtype=bool)
    visited[0] = True
    frontier = visited.copy()
    while frontier.any():
        reach = adj[frontier].any(axis=0) & ~visited
        if not reach.any():
            break
        visited |= reach
        frontier = reach
    return bool(visited.all())


def _component_masks(adjacency: np.ndarray):
    adj = adjacency.astype(bool)
    n = adj.shape[0]
    visited = np.zeros(n, dtype=bool)
    while not visited.all():
        start = int(np.argmin(visited))
        comp = np.zeros(n, dtype=bool)
        comp[start] = True
        frontier = comp.copy()
        while frontier.any():
            reach = adj[frontier].any(axis=0) & ~comp
            if not reach.any():
                break
            comp |= reach
            frontier = reach
        visited |= comp
        yield comp


def jacobi_eigenvalues(matrix: np.ndarray, rel_tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate away every off-diagonal pair until the off-diagonal
    Frobenius norm falls below ``rel_tol`` times the matrix norm.
    Returns the eigenvalues in ascending order.
    """
    a = np.array(matrix, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("jacobi_eigenvalues requires a symmetric matrix")
    if n == 1:
        return a.diagonal().copy()
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, np.linalg.norm(a) ** 2 - np.linalg.norm(np.diag(a)) ** 2))
        if off < rel_tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
    return np.sort(a.diagonal())


def zero_eig_multiplicity(lap: np.ndarray, tol: float) -> int:
    """Count of eigenvalues with |lambda| < tol (algebraic multiplicity of zero)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    eig = jacobi_eigenvalues(lap)
    return int(np.count_nonzero(np.abs(eig) < tol))


def spectral_cluster_count(graph: RuavGraph) -> int:
    """Cluster count via the Laplacian spectrum; the traversal count's oracle."""
    lap = laplacian(graph).astype(np.float64)
    scale = max(1.0, np.abs(lap).sum(axis=1).max())
    return zero_eig_multiplicity(lap, 1e-8 * scale)


# --- import / export -------------------------------------------------------

CSV_HEADER = ["index", "x", "y", "z"]


def topology_to_csv(topology: TopologyMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for idx, pos in zip(topology.indices, topology.positions):
            writer.writerow([int(idx), repr(float(pos[0])), repr(float(pos[1])), repr(float(pos[2]))])


def topology_from_csv(path: str | Path) -> TopologyMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != CSV_HEADER:
            raise ValueError(f"expected header {CSV_HEADER}, got {header}")
        indices, rows = [], []
        for rec in reader:
            if not rec:
                continue
            indices.append(int(rec[0]))
            rows.append([float(rec[1]), float(rec[2]), float(rec[3])])
    return TopologyMatrix(np.array(indices), np.array(rows))


def topology_to_json(topology: TopologyMatrix) -> dict:
    return {
        "rows": [
            {"index": int(i), "position": [float(c) for c in p]}
            for i, p in zip(topology.indices, topology.positions)
        ]
    }


def topology_from_json(payload: dict) -> TopologyMatrix:
    rows = payload["rows"]
    return TopologyMatrix(
        np.array([r["index"] for r in rows]),
        np.array([r["position"] for r in rows], dtype=np.float64),
    )
