"""Social community graph, degree centrality and popularity ranking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping


@dataclass(frozen=True)
class SocialGraph:
    """Undirected simple graph over the nodes of one social community."""

    node_ids: tuple
    edges: frozenset = field(default_factory=frozenset)
    _adjacency: Mapping = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def degree(self, k: Hashable) -> int:
        if k not in self._adjacency:
            raise KeyError(f"unknown node {k!r}")
        return len(self._adjacency[k])

    def neighbors(self, k: Hashable) -> frozenset:
        return self._adjacency[k]

    def __contains__(self, k) -> bool:
        return k in self._adjacency


def build_graph(edge_list: Iterable, nodes: Iterable = ()) -> SocialGraph:
    """Build a graph from ``(u, v)`` pairs.

    Nodes named in ``nodes`` are included even when isolated; every endpoint
    of an edge is added implicitly. Reversed duplicates collapse into one
    undirected edge.

    Raises:
        ValueError: on a self-loop or a malformed pair.
    """
    order = list(dict.fromkeys(nodes))
    seen = set(order)
    adjacency: dict = {k: set() for k in order}
    edges = set()
    for pair in edge_list:
        try:
            u, v = pair
        except (TypeError, ValueError):
            raise ValueError(f"edge {pair!r} is not a pair of node ids") from None
        if u == v:
            raise ValueError(f"self-loop on node {u!r}")
        for x in (u, v):
            if x not in seen:
                seen.add(x)
                order.append(x)
                adjacency[x] = set()
        adjacency[u].add(v)
        adjacency[v].add(u)
        edges.add(frozenset((u, v)))
    frozen = {k: frozenset(s) for k, s in adjacency.items()}
    return SocialGraph(tuple(order), frozenset(edges), frozen)


def degree_centrality(g: SocialGraph, k) -> float:
    """Fraction of the other community members directly connected to ``k``."""
    if k not in g:
        raise KeyError(f"unknown node {k!r}")
    if g.n < 2:
        raise ValueError("degree centrality needs a community of at least 2 nodes")
    return g.degree(k) / (g.n - 1)


@dataclass(frozen=True)
class PopularityProfile:
    """Per-flow centrality, popularity rank and the most-popular flag."""

    centrality: Mapping
    rank: tuple

    @property
    def top(self):
        return self.rank[0]

    def is_top(self, flow) -> bool:
        return flow == self.rank[0]

    def shares(self) -> dict:
        """Centrality normalised to sum to one, equal split when all are zero."""
        total = sum(self.centrality[f] for f in self.rank)
        if total <= 0.0:
            return {f: 1.0 / len(self.rank) for f in self.rank}
        return {f: self.centrality[f] / total for f in self.rank}


def popularity_profile(g: SocialGraph, flows: Mapping) -> PopularityProfile:
    """Rank flows by the centrality of their sender node.

    Ties go to the lower flow id so the ranking is reproducible.
    """
    if not flows:
        raise ValueError("popularity profile needs at least one flow")
    centrality = {f: degree_centrality(g, node) for f, node in flows.items()}
    rank = tuple(sorted(centrality, key=lambda f: (-centrality[f], f)))
    return PopularityProfile(centrality, rank)
