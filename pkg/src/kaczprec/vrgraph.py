"""User partitioning from visibility-region overlap.

Two users whose visibility regions share no subarray have exactly orthogonal
channel columns (disjoint supports), so their rows of the normal-equation
system never interact.  Building the overlap graph and peeling off a large
independent set splits the users into an "orthogonal" group, which admits
exact simultaneous projections, and a remainder handled by aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OverlapGraph:
    """Undirected graph on users; edge (i, j) iff the visibility regions overlap."""

    adjacency: tuple  # tuple of frozensets, adjacency[i] excludes i itself

    @property
    def n_vertices(self) -> int:
        return len(self.adjacency)

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])


def build_overlap_graph(vrs) -> OverlapGraph:
    """Pairwise-overlap graph of a sequence of visibility regions."""
    n = len(vrs)
    adj = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if vrs[i].visible_subarrays & vrs[j].visible_subarrays:
                adj[i].add(j)
                adj[j].add(i)
    return OverlapGraph(adjacency=tuple(frozenset(a) for a in adj))


def greedy_independent_set(graph: OverlapGraph) -> frozenset:
    """Maximal independent set by repeated minimum-degree removal.

    Deterministic: among the remaining vertices the one with the smallest
    residual degree is taken, ties broken by lowest index; the vertex and its
    neighbours are removed and degrees recomputed on what is left.
    """
    alive = set(range(graph.n_vertices))
    chosen = set()
    while alive:
        best = min(alive, key=lambda v: (len(graph.adjacency[v] & alive), v))
        chosen.add(best)
        alive -= graph.adjacency[best] | {best}
    return frozenset(chosen)


@dataclass(frozen=True)
class UserPartition:
    """Orthogonal / non-orthogonal split plus the index sets solvers consume.

    orthogonal        users forming an independent set of the overlap graph
    non_orthogonal    everyone else, in ascending order
    coupled           coupled[k] = neighbours of k plus k itself: the rows whose
                      residuals a projection on row k can change
    subarray_users    subarray_users[s] = users whose region includes subarray s
    """

    orthogonal: frozenset
    non_orthogonal: tuple
    coupled: tuple  # tuple of frozensets
    subarray_users: tuple  # tuple of tuples, one per subarray

    @property
    def n_users(self) -> int:
        return len(self.coupled)

    @property
    def orthogonal_sorted(self) -> tuple:
        return tuple(sorted(self.orthogonal))


def build_partition(vrs, graph: OverlapGraph | None = None) -> UserPartition:
    """Derive the full user partition for a list of visibility regions."""
    if graph is None:
        graph = build_overlap_graph(vrs)
    if graph.n_vertices != len(vrs):
        raise ValueError("graph order does not match the number of users")
    chosen = greedy_independent_set(graph)

    # Sanity: independence and maximality are structural guarantees here, and
    # cheap enough to verify on every build.
    for v in chosen:
        if graph.adjacency[v] & chosen:
            raise AssertionError("independent set contains an edge")
    for v in range(graph.n_vertices):
        if v not in chosen and not (graph.adjacency[v] & chosen):
            raise AssertionError("independent set is not maximal")

    coupled = tuple(frozenset(graph.adjacency[k]) | {k} for k in range(len(vrs)))
    n_sub = vrs[0].n_subarrays if vrs else 0
    per_sub = [[] for _ in range(n_sub)]
    for k, vr in enumerate(vrs):
        if vr.n_subarrays != n_sub:
            raise ValueError("all visibility regions must share the subarray grid")
        for s in vr.visible_subarrays:
            per_sub[s].append(k)
    return UserPartition(
        orthogonal=chosen,
        non_orthogonal=tuple(k for k in range(len(vrs)) if k not in chosen),
        coupled=coupled,
        subarray_users=tuple(tuple(sorted(users)) for users in per_sub),
    )


def format_partition(partition: UserPartition) -> str:
    """Human-readable dump of the partition (one line per set)."""
    lines = []
    lines.append("orthogonal: " + " ".join(str(k) for k in partition.orthogonal_sorted))
    lines.append("non_orthogonal: " + " ".join(str(k) for k in partition.non_orthogonal))
    for k, x in enumerate(partition.coupled):
        lines.append(f"coupled {k}: " + " ".join(str(j) for j in sorted(x)))
    for s, users in enumerate(partition.subarray_users):
        lines.append(f"subarray {s}: " + " ".join(str(k) for k in users))
    return "\n".join(lines)
