"""Hierarchical density-based clustering with leaf cluster selection.

The pipeline is the classic construction: core distances from brute-force
Euclidean k-NN, a minimum spanning tree of the mutual-reachability graph
(Prim), a single-linkage dendrogram condensed by minimum cluster size, and
flat labels from the condensed tree's leaf clusters. Noise rows get label -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import ari


class HdbscanError(Exception):
    pass


@dataclass(frozen=True)
class HdbscanConfig:
    min_samples: int = 5
    min_cluster_size: int = 5
    cluster_selection_epsilon: float = 0.0  # distance threshold for cluster selection

    def __post_init__(self):
        if self.min_samples < 1:
            raise HdbscanError("min_samples must be >= 1")
        if self.min_cluster_size < 2:
            raise HdbscanError("min_cluster_size must be >= 2")
        if self.cluster_selection_epsilon < 0:
            raise HdbscanError("cluster_selection_epsilon must be >= 0")


@dataclass(frozen=True)
class CondensedTree:
    """Edges (parent, child, lambda, size); child < n means a point departing."""

    n: int
    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    size: np.ndarray

    @property
    def root(self) -> int:
        return self.n

    def cluster_ids(self) -> list[int]:
        ids = {self.root}
        ids.update(int(c) for c in self.child if c >= self.n)
        return sorted(ids)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # -1 noise, else 0..k-1
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        found = sorted(set(labels[labels >= 0].tolist()))
        if found != list(range(self.k)):
            raise HdbscanError(f"labels not contiguous 0..k-1 for k={self.k}: {found}")


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix (brute force, fine at desk scale)."""
    points = np.asarray(points, dtype=np.float64)
    sq = (points**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.clip(d2, 0.0, None, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def core_distances(points: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbor, excluding the point itself."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n <= min_samples:
        raise HdbscanError(f"need n > min_samples ({n} <= {min_samples})")
    dist = pairwise_distances(points)
    # row-wise sort includes the self-distance 0 at the front, so index
    # min_samples (not min_samples-1) is the k-th neighbor excluding self
    return np.sort(dist, axis=1)[:, min_samples]


class MutualReachability:
    """d_mreach(a,b) = max(core(a), core(b), d(a,b)), row-accessible."""

    def __init__(self, points: np.ndarray, cores: np.ndarray):
        self.dist = pairwise_distances(points)
        self.cores = np.asarray(cores, dtype=np.float64)

    def row(self, i: int) -> np.ndarray:
        return np.maximum(np.maximum(self.cores[i], self.cores), self.dist[i])

    def value(self, i: int, j: int) -> float:
        return float(max(self.cores[i], self.cores[j], self.dist[i, j]))


def build_mst(points: np.ndarray, cores: np.ndarray) -> np.ndarray:
    """Prim's MST over the implicit mutual-reachability graph.

    Returns (n-1, 3) rows [u, v, weight]; equal-weight alternatives resolve
    toward the lower vertex-index pair.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        raise HdbscanError("MST needs at least 2 points")
    mr = MutualReachability(points, cores)
    in_tree = np.zeros(n, dtype=bool)
    key = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    in_tree[0] = True
    row = mr.row(0)
    key = row.copy()
    key[0] = np.inf
    parent[:] = 0
    parent[0] = -1
    edges = np.empty((n - 1, 3))
    for e in range(n - 1):
        u = int(np.argmin(np.where(in_tree, np.inf, key)))
        edges[e] = (parent[u], u, key[u])
        in_tree[u] = True
        row = mr.row(u)
        better = ~in_tree & (
            (row < key) | ((row == key) & (u < parent))
        )
        key[better] = row[better]
        parent[better] = u
    return edges


def mst_total_weight(edges: np.ndarray) -> float:
    return float(edges[:, 2].sum())


def _single_linkage(edges: np.ndarray, n: int):
    """Union-find dendrogram. Returns (children, dist, size) indexed by node id;
    points are 0..n-1, internal nodes n..2n-2, root is 2n-2."""
    order = np.argsort(edges[:, 2], kind="stable")
    parent_uf = list(range(2 * n - 1))

    def find(x: int) -> int:
        root = x
        while parent_uf[root] != root:
            root = parent_uf[root]
        while parent_uf[x] != root:
            parent_uf[x], x = root, parent_uf[x]
        return root

    node_of = list(range(n)) + [-1] * (n - 1)
    children: list[tuple[int, int]] = [(-1, -1)] * (2 * n - 1)
    dist = np.zeros(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)
    next_node = n
    for ei in order:
        u, v, w = int(edges[ei, 0]), int(edges[ei, 1]), edges[ei, 2]
        ru, rv = find(u), find(v)
        left, right = node_of[ru], node_of[rv]
        children[next_node] = (left, right)
        dist[next_node] = w
        size[next_node] = size[left] + size[right]
        parent_uf[ru] = next_node
        parent_uf[rv] = next_node
        node_of[next_node] = next_node
        next_node += 1
    return children, dist, size


def _points_under(node: int, children, n: int):
    stack = [node]
    while stack:
        x = stack.pop()
        if x < n:
            yield x
        else:
            stack.extend(children[x])


def condense_tree(mst_edges: np.ndarray, n: int, min_cluster_size: int) -> CondensedTree:
    """Prune the single-linkage dendrogram by minimum cluster size.

    Splits where one side is smaller than min_cluster_size dump that side's
    points out of the parent cluster at lambda = 1/distance; splits where both
    sides are large enough create two child clusters at that lambda.
    """
    children, dist, _size = _single_linkage(mst_edges, n)
    root_node = 2 * n - 2
    parents: list[int] = []
    childs: list[int] = []
    lams: list[float] = []
    sizes: list[int] = []

    def emit(parent: int, child: int, lam: float, size: int):
        parents.append(parent)
        childs.append(child)
        lams.append(lam)
        sizes.append(size)

    next_cluster = n + 1
    # stack holds (dendrogram node, condensed cluster id it belongs to)
    stack = [(root_node, n)]
    while stack:
        node, cluster = stack.pop()
        left, right = children[node]
        d = dist[node]
        lam = 1.0 / d if d > 0 else np.inf
        ls = _size[left] if left >= 0 else 0
        rs = _size[right] if right >= 0 else 0
        big_left = ls >= min_cluster_size
        big_right = rs >= min_cluster_size
        if big_left and big_right:
            for side, s in ((left, ls), (right, rs)):
                cid = next_cluster
                next_cluster += 1
                emit(cluster, cid, lam, int(s))
                stack.append((side, cid))
        elif not big_left and not big_right:
            for side in (left, right):
                for pt in _points_under(side, children, n):
                    emit(cluster, pt, lam, 1)
        else:
            small, big = (left, right) if big_right else (right, left)
            for pt in _points_under(small, children, n):
                emit(cluster, pt, lam, 1)
            stack.append((big, cluster))
    return CondensedTree(
        n=n,
        parent=np.array(parents, dtype=np.int64),
        child=np.array(childs, dtype=np.int64),
        lam=np.array(lams, dtype=np.float64),
        size=np.array(sizes, dtype=np.int64),
    )


def select_leaves(tree: CondensedTree, cluster_selection_epsilon: float = 0.0) -> ClusterAssignment:
    """Flat labels from the condensed tree's leaf clusters.

    With epsilon > 0, leaves born at distance < epsilon are merged upward into
    the first ancestor born at distance >= epsilon. Points keep their leaf
    cluster if they departed its subtree at lambda >= the cluster's birth
    lambda; everything else is noise.
    """
    n = tree.n
    is_cluster_edge = tree.child >= n
    cluster_children: dict[int, list[int]] = {}
    cluster_parent: dict[int, int] = {}
    birth: dict[int, float] = {tree.root: 0.0}
    for p, c, lam in zip(
        tree.parent[is_cluster_edge], tree.child[is_cluster_edge], tree.lam[is_cluster_edge]
    ):
        cluster_children.setdefault(int(p), []).append(int(c))
        cluster_parent[int(c)] = int(p)
        birth[int(c)] = float(lam)

    leaves = [c for c in cluster_parent if not cluster_children.get(c)]
    if not leaves:
        return ClusterAssignment(np.full(n, -1, dtype=np.int64), 0)
    leaves.sort()

    eps = cluster_selection_epsilon
    if eps > 0:
        chosen = []
        for leaf in leaves:
            birth_dist = 1.0 / birth[leaf] if birth[leaf] > 0 else np.inf
            node = leaf
            while birth_dist < eps and node in cluster_parent:
                up = cluster_parent[node]
                if up == tree.root:
                    break  # never select the root; keep the topmost real cluster
                node = up
                birth_dist = 1.0 / birth[node] if birth[node] > 0 else np.inf
            chosen.append(node)
        # drop any selection nested inside another selected cluster
        chosen_set = set(chosen)
        selected = []
        for node in dict.fromkeys(chosen):
            anc = cluster_parent.get(node)
            nested = False
            while anc is not None:
                if anc in chosen_set:
                    nested = True
                    break
                anc = cluster_parent.get(anc)
            if not nested:
                selected.append(node)
    else:
        selected = leaves

    # map every cluster to the selected cluster whose subtree contains it
    owner: dict[int, int] = {}
    for s in selected:
        stack = [s]
        while stack:
            c = stack.pop()
            owner[c] = s
            stack.extend(cluster_children.get(c, []))

    labels = np.full(n, -1, dtype=np.int64)
    point_edges = ~is_cluster_edge
    raw = {}
    for p, c, lam in zip(
        tree.parent[point_edges], tree.child[point_edges], tree.lam[point_edges]
    ):
        s = owner.get(int(p))
        if s is not None and lam >= birth[s]:
            raw[int(c)] = s
    remap: dict[int, int] = {}
    for pt in range(n):
        s = raw.get(pt)
        if s is None:
            continue
        if s not in remap:
            remap[s] = len(remap)
        labels[pt] = remap[s]
    return ClusterAssignment(labels, len(remap))


def fit_predict(points: np.ndarray, cfg: HdbscanConfig) -> ClusterAssignment:
    """core distances -> mutual-reachability MST -> condense -> leaf selection."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise HdbscanError("need at least 2 points")
    cores = core_distances(points, cfg.min_samples)
    mst = build_mst(points, cores)
    tree = condense_tree(mst, points.shape[0], cfg.min_cluster_size)
    return select_leaves(tree, cfg.cluster_selection_epsilon)


def default_grid() -> list[HdbscanConfig]:
    return [
        HdbscanConfig(min_samples=ms, min_cluster_size=mcs, cluster_selection_epsilon=eps)
        for mcs in (5, 10, 15, 25)
        for ms in (1, 5, 10)
        for eps in (0.0, 0.01, 0.05, 0.1)
    ]


def _noise_as_singletons(labels: np.ndarray) -> np.ndarray:
    out = labels.copy()
    fresh = out.max(initial=0) + 1
    for i in np.flatnonzero(out == -1):
        out[i] = fresh
        fresh += 1
    return out


def tune_hyperparams(
    points: np.ndarray,
    labels: list[str] | np.ndarray,
    grid: list[HdbscanConfig] | None = None,
) -> tuple[HdbscanConfig, list[tuple[HdbscanConfig, float]]]:
    """Grid search scored by ARI against known labels, noise as singletons.

    Configs that are invalid for the data size score -inf. Ties break toward
    the earlier grid entry.
    """
    if grid is None:
        grid = default_grid()
    if not grid:
        raise HdbscanError("empty hyperparameter grid")
    gold = list(labels)
    table: list[tuple[HdbscanConfig, float]] = []
    best_cfg, best_score = None, -np.inf
    for cfg in grid:
        try:
            assignment = fit_predict(points, cfg)
            score = ari(gold, _noise_as_singletons(assignment.labels).tolist())
        except HdbscanError:
            score = -np.inf
        table.append((cfg, score))
        if score > best_score:
            best_cfg, best_score = cfg, score
    assert best_cfg is not None
    return best_cfg, table


def write_assignments(path: str | Path, assignment: ClusterAssignment) -> None:
    """CSV dump: row_index,cluster_label."""
    lines = ["row_index,cluster_label"]
    for i, lab in enumerate(assignment.labels):
        lines.append(f"{i},{int(lab)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_condensed_tree(path: str | Path, tree: CondensedTree) -> None:
    """CSV dump: parent,child,lambda,size."""
    lines = ["parent,child,lambda,size"]
    for p, c, lam, s in zip(tree.parent, tree.child, tree.lam, tree.size):
        lines.append(f"{int(p)},{int(c)},{lam:.9g},{int(s)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
