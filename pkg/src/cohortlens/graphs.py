"""Directed social graphs over forum participants and their centrality metrics.

Two constructions are supported.  Method "a" assumes every contributor read
the whole thread before posting, so each reply or comment links its author
to every earlier contributor of the same thread.  Method "b" only keeps
explicit targets: a reply links to the thread-head author, a comment to the
author of the reply it annotates.  By construction the arc set of "b" is
contained in that of "a" with weights bounded above by it.

Parallel links between one ordered pair of users aggregate into a single
arc weighted by the link count.  Self-links are never created.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .ingest import Post, Reply, Role, Thread, ThreadSet, TimeSlice

log = logging.getLogger(__name__)


class GraphMethod(str, Enum):
    A = "a"
    B = "b"


@dataclass(frozen=True)
class SocialGraph:
    """Weighted digraph over course participants, tagged with its construction."""

    method: GraphMethod
    slice_name: str
    roles: dict[str, Role]
    arcs: dict[tuple[str, str], int]

    @property
    def nodes(self) -> list[str]:
        return sorted(self.roles)

    @property
    def total_weight(self) -> int:
        return sum(self.arcs.values())

    def successors(self) -> dict[str, list[str]]:
        """Unweighted out-adjacency, deterministically ordered."""
        out: dict[str, list[str]] = {v: [] for v in self.roles}
        for (u, v) in sorted(self.arcs):
            out[u].append(v)
        return out

    def weighted_degrees(self) -> tuple[dict[str, int], dict[str, int]]:
        """(in_degree, out_degree) as sums of incident arc weights."""
        indeg = {v: 0 for v in self.roles}
        outdeg = {v: 0 for v in self.roles}
        for (u, v), w in self.arcs.items():
            outdeg[u] += w
            indeg[v] += w
        return indeg, outdeg


def slice_threads(ts: ThreadSet, window: TimeSlice | None) -> ThreadSet:
    """Restrict a thread set to posts inside the window.

    A head outside the window drops the whole thread; a dropped reply drops
    its comments.
    """
    if window is None:
        return ts
    threads = []
    for t in ts.threads:
        if not window.contains(t.head.timestamp):
            continue
        replies = []
        for r in t.replies:
            if not window.contains(r.post.timestamp):
                continue
            comments = tuple(c for c in r.comments if window.contains(c.timestamp))
            replies.append(Reply(post=r.post, comments=comments))
        threads.append(Thread(head=t.head, replies=tuple(replies)))
    return ThreadSet(threads=tuple(threads))


def _ordered_posts(t: Thread) -> list[Post]:
    """Thread posts sorted by time; same-instant ties keep document order
    (head, then each reply followed by its comments)."""
    doc = list(t.posts())
    order = sorted(range(len(doc)), key=lambda i: (doc[i].timestamp, i))
    return [doc[i] for i in order]


def _add_arc(arcs: dict[tuple[str, str], int], u: str | None, v: str | None) -> None:
    if u is None or v is None or u == v:
        return
    arcs[(u, v)] = arcs.get((u, v), 0) + 1


def _collect_roles(ts: ThreadSet) -> dict[str, Role]:
    return ts.participants()


def build_graph_a(ts: ThreadSet, window: TimeSlice | None = None) -> SocialGraph:
    """Link each reply/comment author to every earlier contributor of its thread."""
    ts = slice_threads(ts, window)
    arcs: dict[tuple[str, str], int] = {}
    for t in ts.threads:
        ordered = _ordered_posts(t)
        for j in range(1, len(ordered)):
            for i in range(j):
                _add_arc(arcs, ordered[j].author_id, ordered[i].author_id)
    return SocialGraph(
        method=GraphMethod.A,
        slice_name=window.name if window else "full",
        roles=_collect_roles(ts),
        arcs=arcs,
    )


def build_graph_b(ts: ThreadSet, window: TimeSlice | None = None) -> SocialGraph:
    """Link each reply to the thread-head author and each comment to its reply's author."""
    ts = slice_threads(ts, window)
    arcs: dict[tuple[str, str], int] = {}
    for t in ts.threads:
        for r in t.replies:
            _add_arc(arcs, r.post.author_id, t.head.author_id)
            for c in r.comments:
                _add_arc(arcs, c.author_id, r.post.author_id)
    return SocialGraph(
        method=GraphMethod.B,
        slice_name=window.name if window else "full",
        roles=_collect_roles(ts),
        arcs=arcs,
    )


def build_graph(
    ts: ThreadSet, method: GraphMethod, window: TimeSlice | None = None
) -> SocialGraph:
    if method is GraphMethod.A:
        return build_graph_a(ts, window)
    return build_graph_b(ts, window)


def betweenness(g: SocialGraph) -> dict[str, float]:
    """Exact unnormalized betweenness centrality on the unweighted arc structure.

    Brandes' accumulation: one BFS per source, then pair dependencies pushed
    back along shortest-path predecessor links, summed over all ordered
    source-target pairs.  Arc weights are communication counts, not
    distances, so they play no role here.  Nodes are mapped to integers so
    the inner loops run on flat lists.
    """
    nodes = g.nodes
    n = len(nodes)
    index = {v: i for i, v in enumerate(nodes)}
    succ: list[list[int]] = [[] for _ in range(n)]
    for (u, v) in sorted(g.arcs):
        succ[index[u]].append(index[v])

    bc = [0.0] * n
    for source in range(n):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0.0] * n
        dist = [-1] * n
        sigma[source] = 1.0
        dist[source] = 0
        queue = deque([source])
        while queue:
            v = queue.popleft()
            stack.append(v)
            dv = dist[v]
            sv = sigma[v]
            for w in succ[v]:
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue.append(w)
                if dist[w] == dv + 1:
                    sigma[w] += sv
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != source:
                bc[w] += delta[w]
    return {v: bc[index[v]] for v in nodes}


@dataclass(frozen=True)
class HitsScores:
    hub: dict[str, float]
    authority: dict[str, float]
    converged: bool
    iterations: int
    warning: str | None = None


def hits(g: SocialGraph, tol: float = 1e-8, max_iter: int = 200) -> HitsScores:
    """Hub/authority scores by mutually reinforcing iteration on the weighted arcs.

    Both vectors are Euclidean-normalized after every half-step; iteration
    stops when the largest per-node change of either vector drops below
    ``tol``.  A graph without arcs yields all-zero scores and a warning.
    """
    nodes = g.nodes
    if not g.arcs:
        zero = {v: 0.0 for v in nodes}
        return HitsScores(
            hub=dict(zero),
            authority=dict(zero),
            converged=True,
            iterations=0,
            warning="graph has no arcs; hub/authority scores undefined, set to zero",
        )
    index = {v: i for i, v in enumerate(nodes)}
    src = np.array([index[u] for (u, v) in sorted(g.arcs)], dtype=np.intp)
    dst = np.array([index[v] for (u, v) in sorted(g.arcs)], dtype=np.intp)
    wgt = np.array([g.arcs[k] for k in sorted(g.arcs)], dtype=float)

    n = len(nodes)
    h = np.full(n, 1.0 / np.sqrt(n))
    a = np.full(n, 1.0 / np.sqrt(n))
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        a_new = np.zeros(n)
        np.add.at(a_new, dst, wgt * h[src])
        a_new /= np.linalg.norm(a_new)
        h_new = np.zeros(n)
        np.add.at(h_new, src, wgt * a_new[dst])
        h_new /= np.linalg.norm(h_new)
        change = max(np.max(np.abs(h_new - h)), np.max(np.abs(a_new - a)))
        h, a = h_new, a_new
        if change < tol:
            converged = True
            break
    warning = None
    if not converged:
        warning = f"hits did not converge within {max_iter} iterations"
        log.warning(warning)
    return HitsScores(
        hub={v: float(h[index[v]]) for v in nodes},
        authority={v: float(a[index[v]]) for v in nodes},
        converged=converged,
        iterations=iterations,
    )


GRAPH_FEATURE_NAMES = (
    "in_degree",
    "out_degree",
    "betweenness",
    "hub_score",
    "authority_score",
)


@dataclass(frozen=True)
class GraphFeatureRow:
    in_degree: float
    out_degree: float
    betweenness: float
    hub_score: float
    authority_score: float

    def values(self) -> tuple[float, ...]:
        return (
            self.in_degree,
            self.out_degree,
            self.betweenness,
            self.hub_score,
            self.authority_score,
        )


def graph_features(
    g: SocialGraph, students: Iterable[str]
) -> dict[str, GraphFeatureRow]:
    """All five metrics for each requested student; absentees get zero rows."""
    indeg, outdeg = g.weighted_degrees()
    bc = betweenness(g)
    scores = hits(g)
    rows: dict[str, GraphFeatureRow] = {}
    for student in sorted(set(students)):
        present = student in g.roles
        rows[student] = GraphFeatureRow(
            in_degree=float(indeg.get(student, 0)),
            out_degree=float(outdeg.get(student, 0)),
            betweenness=bc.get(student, 0.0) if present else 0.0,
            hub_score=scores.hub.get(student, 0.0) if present else 0.0,
            authority_score=scores.authority.get(student, 0.0) if present else 0.0,
        )
    return rows


ARC_CSV_HEADER = ["src", "dst", "weight", "method", "slice"]


def write_arcs_csv(g: SocialGraph, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ARC_CSV_HEADER)
        for (u, v) in sorted(g.arcs):
            writer.writerow([u, v, g.arcs[(u, v)], g.method.value, g.slice_name])


def graph_summary(g: SocialGraph) -> dict:
    role_counts: dict[str, int] = {}
    for role in g.roles.values():
        role_counts[role.value] = role_counts.get(role.value, 0) + 1
    return {
        "method": g.method.value,
        "slice": g.slice_name,
        "n_nodes": len(g.roles),
        "n_arcs": len(g.arcs),
        "total_weight": g.total_weight,
        "role_counts": dict(sorted(role_counts.items())),
    }


def write_graph_summary(g: SocialGraph, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(graph_summary(g), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
