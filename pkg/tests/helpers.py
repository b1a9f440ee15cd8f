"""Shared builders and independent oracles used across the test modules.

The oracles here are deliberately naive re-implementations: pairwise arc
counting for the forum graphs, literal shortest-path enumeration for
betweenness, a dense eigensolve for hub/authority scores, and double-loop
midranks for Spearman.  They trade speed for obvious correctness.
"""

from __future__ import annotations

from collections import defaultdict
from datetime import datetime, timedelta, timezone
from itertools import count

import numpy as np

from cohortlens.features import FeatureMatrix
from cohortlens.graphs import GraphMethod, SocialGraph
from cohortlens.ingest import (
    Anonymity,
    Platform,
    Post,
    Reply,
    Role,
    Thread,
    ThreadSet,
    UnifiedAction,
)

T0 = datetime(2021, 9, 1, 12, 0, 0, tzinfo=timezone.utc)

# Reference chi-square score column with a pronounced drop after the 15th
# entry; a 30-entry ranking whose elbow the selector must find at exactly 15.
REFERENCE_CHI2_COLUMN = (
    1426.973, 256.560, 220.393, 206.330, 162.064, 123.205, 112.543, 92.468,
    78.795, 65.326, 35.667, 31.152, 30.508, 30.375, 27.201, 7.323, 6.582,
    4.478, 3.840, 3.117, 2.239, 2.171, 1.637, 0.932, 0.912, 0.784, 0.488,
    0.101, 0.091, 0.001,
)


def act(
    student: str,
    minutes: float,
    platform: Platform = Platform.LMS,
    kind: str = "page_view",
    detail: str | None = None,
    base: datetime = T0,
) -> UnifiedAction:
    """One clickstream action ``minutes`` after the base instant."""
    return UnifiedAction(
        student_id=student,
        timestamp=base + timedelta(minutes=minutes),
        platform=platform,
        action_kind=kind,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# Random forum structures


def random_thread_set(
    rng: np.random.Generator,
    n_users: int = 12,
    max_threads: int = 10,
    max_posts: int = 8,
    anon_prob: float = 0.1,
) -> ThreadSet:
    """A random thread set within the given size bounds.

    Posts occasionally share timestamps (exercising document-order ties) and
    are occasionally completely anonymous (author withheld).
    """
    users = [f"u{i:02d}" for i in range(n_users)]
    pid = count()

    def post(when: datetime) -> Post:
        if rng.random() < anon_prob:
            return Post(
                post_id=f"p{next(pid)}",
                author_id=None,
                role=Role.STUDENT,
                timestamp=when,
                anonymity=Anonymity.COMPLETE,
            )
        return Post(
            post_id=f"p{next(pid)}",
            author_id=users[int(rng.integers(0, n_users))],
            role=Role.STUDENT,
            timestamp=when,
            anonymity=Anonymity.NONE,
        )

    threads = []
    for _ in range(int(rng.integers(1, max_threads + 1))):
        when = T0 + timedelta(minutes=int(rng.integers(0, 10_000)))
        head = post(when)
        replies = []
        budget = int(rng.integers(0, max_posts))  # posts beyond the head
        while budget > 0:
            when = when + timedelta(minutes=int(rng.integers(0, 120)))
            reply = post(when)
            budget -= 1
            comments = []
            cwhen = when
            for _ in range(int(rng.integers(0, min(3, budget) + 1))):
                cwhen = cwhen + timedelta(minutes=int(rng.integers(0, 60)))
                comments.append(post(cwhen))
                budget -= 1
            replies.append(Reply(post=reply, comments=tuple(comments)))
        threads.append(Thread(head=head, replies=tuple(replies)))
    return ThreadSet(threads=tuple(threads))


def naive_arcs_a(ts: ThreadSet) -> dict[tuple[str, str], int]:
    """Pairwise oracle for method "a" arcs.

    For every ordered pair of posts in a thread, one link is added from the
    later author to the earlier one; a post precedes another if its
    (timestamp, document position) pair is smaller.  No sorting involved.
    """
    arcs: dict[tuple[str, str], int] = defaultdict(int)
    for t in ts.threads:
        posts = list(t.posts())
        for j, later in enumerate(posts):
            for i, earlier in enumerate(posts):
                if (earlier.timestamp, i) >= (later.timestamp, j):
                    continue
                u, v = later.author_id, earlier.author_id
                if u is None or v is None or u == v:
                    continue
                arcs[(u, v)] += 1
    return dict(arcs)


def naive_arcs_b(ts: ThreadSet) -> dict[tuple[str, str], int]:
    """Structural oracle for method "b": reply->head, comment->its reply."""
    arcs: dict[tuple[str, str], int] = defaultdict(int)

    def add(u: str | None, v: str | None) -> None:
        if u is not None and v is not None and u != v:
            arcs[(u, v)] += 1

    for t in ts.threads:
        for r in t.replies:
            add(r.post.author_id, t.head.author_id)
            for c in r.comments:
                add(c.author_id, r.post.author_id)
    return dict(arcs)


# ---------------------------------------------------------------------------
# Random digraphs and centrality oracles


def random_digraph(
    rng: np.random.Generator,
    n: int,
    arc_prob: float,
    max_weight: int = 5,
) -> SocialGraph:
    nodes = [f"n{i:02d}" for i in range(n)]
    arcs = {
        (u, v): int(rng.integers(1, max_weight + 1))
        for u in nodes
        for v in nodes
        if u != v and rng.random() < arc_prob
    }
    return SocialGraph(
        method=GraphMethod.A,
        slice_name="full",
        roles={v: Role.STUDENT for v in nodes},
        arcs=arcs,
    )


def brute_betweenness(g: SocialGraph) -> dict[str, float]:
    """Betweenness by literally enumerating every shortest path.

    For each source, BFS gives distances; all shortest paths to each target
    are then walked backwards through the predecessor DAG, and every interior
    node of every path is credited its 1/sigma share.
    """
    succ = g.successors()
    nodes = g.nodes
    bc = {v: 0.0 for v in nodes}
    for s in nodes:
        dist = {s: 0}
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for w in succ[u]:
                    if w not in dist:
                        dist[w] = dist[u] + 1
                        nxt.append(w)
            frontier = nxt
        preds: dict[str, list[str]] = defaultdict(list)
        for u in dist:
            for w in succ[u]:
                if w in dist and dist[w] == dist[u] + 1:
                    preds[w].append(u)

        def paths_to(t: str) -> list[list[str]]:
            if t == s:
                return [[s]]
            return [p + [t] for u in preds[t] for p in paths_to(u)]

        for t in nodes:
            if t == s or t not in dist:
                continue
            paths = paths_to(t)
            for path in paths:
                for v in path[1:-1]:
                    bc[v] += 1.0 / len(paths)
    return bc


def eig_hits(g: SocialGraph) -> tuple[np.ndarray, np.ndarray, float]:
    """Hub/authority via dense eigensolve of W W^T and W^T W.

    Returns (hub, authority, eigengap ratio) over g.nodes order; vectors are
    unit-norm with non-negative orientation.
    """
    nodes = g.nodes
    index = {v: i for i, v in enumerate(nodes)}
    W = np.zeros((len(nodes), len(nodes)))
    for (u, v), w in g.arcs.items():
        W[index[u], index[v]] = w

    def principal(M: np.ndarray) -> tuple[np.ndarray, float]:
        vals, vecs = np.linalg.eigh(M)
        vec = vecs[:, -1]
        if vec.sum() < 0:
            vec = -vec
        gap = vals[-2] / vals[-1] if len(vals) > 1 and vals[-1] > 0 else 0.0
        return vec, gap

    authority, gap_a = principal(W.T @ W)
    hub, gap_h = principal(W @ W.T)
    return hub, authority, max(gap_a, gap_h)


# ---------------------------------------------------------------------------
# Rank statistics oracles


def brute_ranks(v) -> list[float]:
    """Midranks by double loop: 1 + #smaller + (#equal excluding self)/2."""
    return [
        1.0
        + sum(1 for b in v if b < a)
        + 0.5 * sum(1 for j, b in enumerate(v) if b == a and j != i)
        for i, a in enumerate(v)
    ]


def brute_spearman_rho(x, y) -> float:
    """Pearson product-moment formula applied to brute-force midranks."""
    rx = brute_ranks(list(x))
    ry = brute_ranks(list(y))
    n = len(rx)
    sx, sy = sum(rx), sum(ry)
    sxy = sum(a * b for a, b in zip(rx, ry))
    sxx = sum(a * a for a in rx)
    syy = sum(b * b for b in ry)
    num = n * sxy - sx * sy
    den = ((n * sxx - sx * sx) * (n * syy - sy * sy)) ** 0.5
    return num / den


def permutation_pvalue(
    x, y, n_shuffles: int = 100_000, seed: int = 0
) -> float:
    """Two-sided permutation estimate of the Spearman p-value.

    Permuting y permutes its ranks, so the statistic is recomputed as a
    centered dot product of fixed x-ranks with shuffled y-ranks.
    """
    rng = np.random.default_rng(seed)
    rx = np.array(brute_ranks(list(x)))
    ry = np.array(brute_ranks(list(y)))
    rx -= rx.mean()
    ry -= ry.mean()
    scale = np.sqrt((rx @ rx) * (ry @ ry))
    observed = abs(rx @ ry / scale)
    perms = rng.permuted(np.tile(ry, (n_shuffles, 1)), axis=1)
    rhos = np.abs(perms @ rx / scale)
    return float(np.mean(rhos >= observed - 1e-12))


# ---------------------------------------------------------------------------
# Feature matrices from raw arrays


def make_matrix(
    X: np.ndarray,
    grades,
    names=None,
    course_id: str = "toy",
    slice_name: str = "full",
    method: str = "a",
) -> FeatureMatrix:
    n, p = X.shape
    return FeatureMatrix(
        course_id=course_id,
        slice_name=slice_name,
        graph_method=method,
        feature_names=tuple(names) if names else tuple(f"f{i:02d}" for i in range(p)),
        student_ids=tuple(f"s{i:03d}" for i in range(n)),
        values=np.asarray(X, dtype=float),
        grades=tuple(grades),
    )
