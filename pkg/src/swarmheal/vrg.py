"""Virtual communication relaxing.

After a destruction the real graph is disconnected, so healing operates
on a virtual graph whose edges use a relaxed distance d_v instead of the
link condition. d_v is blended between the smallest threshold that keeps
the virtual graph connected and the largest pairwise distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import RuavGraph, TopologyMatrix, build_graph, is_connected


class DisconnectedVrgError(ValueError):
    """Requested virtual distance cannot produce a connected virtual graph."""


@dataclass(frozen=True)
class VirtualDistance:
    d_min_m: float
    d_max_m: float
    eta: float
    d_v_m: float


def _pairwise_sorted(topology: TopologyMatrix) -> np.ndarray:
    if topology.n < 2:
        raise ValueError("need at least two rows for pairwise distances")
    dist = topology.distance_matrix()
    iu = np.triu_indices(topology.n, k=1)
    return np.sort(dist[iu])


def _connected_at(topology: TopologyMatrix, threshold: float) -> bool:
    adj = topology.distance_matrix() <= threshold
    np.fill_diagonal(adj, False)
    return is_connected(adj)


def min_virtual_distance(topology: TopologyMatrix) -> float:
    """Smallest pairwise distance whose threshold graph is connected.

    Binary search over the ascending multiset of pairwise distances;
    connectivity is monotone in the threshold, so this returns the same
    value as the linear scan in min_virtual_distance_scan.
    """
    dists = _pairwise_sorted(topology)
    lo, hi = 0, len(dists) - 1
    if not _connected_at(topology, dists[hi]):
        raise AssertionError("threshold at max pairwise distance must connect the graph")
    while lo < hi:
        mid = (lo + hi) // 2
        if _connected_at(topology, dists[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(dists[lo])


def min_virtual_distance_scan(topology: TopologyMatrix) -> float:
    """Reference linear scan: first sorted distance that yields one cluster."""
    dists = _pairwise_sorted(topology)
    for m in dists:
        if _connected_at(topology, m):
            return float(m)
    raise AssertionError("unreachable: the largest distance always connects")


def max_virtual_distance(topology: TopologyMatrix) -> float:
    """Largest pairwise distance; every pair links at this threshold."""
    return float(_pairwise_sorted(topology)[-1])


def virtual_distance(d_min: float, d_max: float, eta: float) -> VirtualDistance:
    """Blend d_v = eta * d_min + (1 - eta) * d_max."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if d_min > d_max:
        raise ValueError("d_min must not exceed d_max")
    return VirtualDistance(d_min, d_max, eta, eta * d_min + (1.0 - eta) * d_max)


def virtual_distance_for(topology: TopologyMatrix, eta: float) -> VirtualDistance:
    return virtual_distance(min_virtual_distance(topology), max_virtual_distance(topology), eta)


def build_vrg(topology: TopologyMatrix, d_v: float) -> RuavGraph:
    """Virtual graph with an edge wherever the pair distance is within d_v."""
    graph = build_graph(topology, lambda d: d <= d_v)
    if not is_connected(graph.adjacency):
        raise DisconnectedVrgError(f"virtual distance {d_v} m leaves the virtual graph disconnected")
    return graph
