"""Bagged gradient-boosted regression trees scored pointwise on grades.

Each bag draws its candidate rows and then fits a MART-style chain of
squared-error regression trees on the integer relevance labels; every tree
sees a fresh random subset of the features.  The forest score is the bag
mean of the boosted sums.  All sampling derives from numpy SeedSequence
spawned on (seed, bag) and (seed, bag, tree), so a fixed seed reproduces
the model exactly.

Trees grow best-first on variance reduction up to max_leaves, with split
ties broken toward the lowest feature id, then the lowest threshold, then
the earliest-created leaf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, format_real

__all__ = [
    "TreeLeaf",
    "TreeNode",
    "ForestModel",
    "fit_regression_tree",
    "tree_predict",
    "tree_leaves",
    "train_forest",
    "score_forest",
    "save_forest_model",
    "load_forest_model",
]


@dataclass
class TreeLeaf:
    value: float


@dataclass
class TreeNode:
    """Internal split: rows go left when x[fid] <= threshold."""

    fid: int  # 1-based
    threshold: float
    left: "TreeNode | TreeLeaf"
    right: "TreeNode | TreeLeaf"


def tree_predict(tree, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    out = np.empty(len(x))

    def walk(node, idx):
        if isinstance(node, TreeLeaf):
            out[idx] = node.value
            return
        go_left = x[idx, node.fid - 1] <= node.threshold
        walk(node.left, idx[go_left])
        walk(node.right, idx[~go_left])

    walk(tree, np.arange(len(x)))
    return out


def tree_leaves(tree) -> list[TreeLeaf]:
    if isinstance(tree, TreeLeaf):
        return [tree]
    return tree_leaves(tree.left) + tree_leaves(tree.right)


def _best_split(x: np.ndarray, y: np.ndarray, rows: np.ndarray, fids, min_leaf: int):
    """Highest variance-reduction split of one leaf, or None.

    Returns (gain, fid, threshold, left_rows, right_rows); the scan order
    (fids ascending, thresholds ascending, strict improvement) implements
    the tie-break rules.
    """
    n = len(rows)
    if n < 2 * min_leaf:
        return None
    total = y[rows].sum()
    base = total * total / n
    best = None
    best_gain = 1e-12
    for fid in fids:
        col = x[rows, fid - 1]
        order = np.argsort(col, kind="stable")
        sorted_rows = rows[order]
        sorted_col = col[order]
        prefix = np.cumsum(y[sorted_rows])
        # split after position j keeps j+1 rows on the left
        cuts = np.flatnonzero(sorted_col[:-1] != sorted_col[1:])
        for j in cuts:
            nl = j + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sl = prefix[j]
            gain = sl * sl / nl + (total - sl) * (total - sl) / nr - base
            if gain > best_gain:
                best_gain = gain
                thr = (sorted_col[j] + sorted_col[j + 1]) / 2.0
                best = (gain, fid, float(thr), sorted_rows[:nl].copy(), sorted_rows[nl:].copy())
    return best


@dataclass(eq=False)
class _GrowingLeaf:
    """Book-keeping for best-first growth; not part of the final tree."""

    rows: np.ndarray
    leaf: TreeLeaf
    parent: TreeNode | None
    side: str  # "left" | "right" | "" for the root
    split: tuple | None
    order: int  # creation index, the last tie-break key


def fit_regression_tree(
    x: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    fids,
    min_leaf: int = 1,
    max_leaves: int = 10,
):
    """Best-first squared-error tree on the given rows and allowed features."""
    if len(rows) == 0:
        raise ValueError("no rows to fit")
    counter = 0

    def make(rows_, parent, side):
        nonlocal counter
        entry = _GrowingLeaf(
            rows_,
            TreeLeaf(float(y[rows_].mean())),
            parent,
            side,
            _best_split(x, y, rows_, fids, min_leaf),
            counter,
        )
        counter += 1
        return entry

    root_entry = make(rows, None, "")
    root: TreeNode | TreeLeaf = root_entry.leaf
    frontier = [root_entry]
    n_leaves = 1
    while n_leaves < max_leaves:
        candidates = [e for e in frontier if e.split is not None]
        if not candidates:
            break
        winner = min(candidates, key=lambda e: (-e.split[0], e.split[1], e.split[2], e.order))
        _, fid, thr, left_rows, right_rows = winner.split
        left = make(left_rows, None, "left")
        right = make(right_rows, None, "right")
        node = TreeNode(fid, thr, left.leaf, right.leaf)
        left.parent = right.parent = node
        if winner.parent is None:
            root = node
        else:
            setattr(winner.parent, winner.side, node)
        frontier.remove(winner)
        frontier += [left, right]
        n_leaves += 1
    return root


@dataclass
class ForestModel:
    """bags[b][t] holds the t-th boosted tree of bag b."""

    bags: list[list[TreeNode | TreeLeaf]]
    lr: float
    dim: int

    @property
    def n_bags(self) -> int:
        return len(self.bags)

    def score_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {x.shape[1]}")
        total = np.zeros(len(x))
        for trees in self.bags:
            for tree in trees:
                total += self.lr * tree_predict(tree, x)
        return total / self.n_bags

    def score(self, x) -> float:
        return float(self.score_matrix(np.asarray(x, dtype=float)[None, :])[0])


def score_forest(model: ForestModel, x) -> float:
    return model.score(x)


def train_forest(
    ds: Dataset,
    bags: int = 300,
    trees_per_bag: int = 100,
    lr: float = 0.1,
    feat_rate: float = 0.3,
    sub_rate: float = 1.0,
    min_leaf: int = 1,
    max_leaves: int = 10,
    seed: int = 42,
) -> ForestModel:
    """Bagging wrapper around gradient-boosted regression on the labels.

    sub_rate samples rows without replacement, so 1.0 keeps the full set and
    bag-to-bag variation comes from per-tree feature sampling alone.
    """
    if not 0.0 < feat_rate <= 1.0:
        raise ValueError(f"feat_rate must be in (0, 1], got {feat_rate}")
    if not 0.0 < sub_rate <= 1.0:
        raise ValueError(f"sub_rate must be in (0, 1], got {sub_rate}")
    if bags < 1 or trees_per_bag < 1:
        raise ValueError("bags and trees_per_bag must be >= 1")
    if min_leaf < 1:
        raise ValueError(f"min_leaf must be >= 1, got {min_leaf}")
    if ds.n_queries < 1:
        raise ValueError("empty dataset")

    x = ds.matrix()
    y = ds.labels.astype(float)
    n = len(x)
    n_rows = max(1, int(round(sub_rate * n)))
    n_feats = math.ceil(feat_rate * ds.dim)

    all_bags: list[list[TreeNode | TreeLeaf]] = []
    residual = np.zeros(n)  # full-length target buffer indexed by bag rows
    for b in range(bags):
        row_rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        rows = np.sort(row_rng.choice(n, size=n_rows, replace=False))
        pred = np.zeros(n_rows)
        y_bag = y[rows]
        trees: list[TreeNode | TreeLeaf] = []
        for t in range(trees_per_bag):
            feat_rng = np.random.default_rng(np.random.SeedSequence([seed, b, t]))
            fids = np.sort(feat_rng.choice(ds.dim, size=n_feats, replace=False)) + 1
            residual[rows] = y_bag - pred
            tree = fit_regression_tree(x, residual, rows, fids, min_leaf, max_leaves)
            trees.append(tree)
            pred = pred + lr * tree_predict(tree, x[rows])
        all_bags.append(trees)
    return ForestModel(all_bags, lr, ds.dim)


def _write_tree(fh, tree) -> None:
    if isinstance(tree, TreeLeaf):
        fh.write(f"leaf v={format_real(tree.value)}\n")
        return
    fh.write(f"node fid={tree.fid} thr={format_real(tree.threshold)}\n")
    _write_tree(fh, tree.left)
    _write_tree(fh, tree.right)


def save_forest_model(model: ForestModel, path) -> None:
    """Pre-order node/leaf lines per tree, trees delimited by `tree b/t`."""
    trees_per_bag = len(model.bags[0]) if model.bags else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"forest bags={model.n_bags} trees={trees_per_bag}"
            f" lr={format_real(model.lr)} dim={model.dim}\n"
        )
        for b, trees in enumerate(model.bags):
            for t, tree in enumerate(trees):
                fh.write(f"tree {b}/{t}\n")
                _write_tree(fh, tree)


def _read_tree(lines: list[str], pos: int, path):
    if pos >= len(lines):
        raise ValueError(f"{path}: truncated tree")
    tokens = lines[pos].split()
    kv = dict(part.split("=", 1) for part in tokens[1:])
    if tokens[0] == "leaf":
        return TreeLeaf(float(kv["v"])), pos + 1
    if tokens[0] == "node":
        left, nxt = _read_tree(lines, pos + 1, path)
        right, nxt = _read_tree(lines, nxt, path)
        return TreeNode(int(kv["fid"]), float(kv["thr"]), left, right), nxt
    raise ValueError(f"{path}: unexpected line {lines[pos]!r}")


def load_forest_model(path) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("forest "):
        raise ValueError(f"{path}: not a forest model file")
    fields = dict(part.split("=", 1) for part in lines[0].split()[1:])
    n_bags = int(fields["bags"])
    trees_per_bag = int(fields["trees"])
    lr = float(fields["lr"])
    dim = int(fields["dim"])
    bags: list[list[TreeNode | TreeLeaf]] = []
    pos = 1
    for b in range(n_bags):
        trees = []
        for t in range(trees_per_bag):
            if pos >= len(lines) or lines[pos] != f"tree {b}/{t}":
                raise ValueError(f"{path}: expected 'tree {b}/{t}' marker")
            tree, pos = _read_tree(lines, pos + 1, path)
            trees.append(tree)
        bags.append(trees)
    if pos != len(lines):
        raise ValueError(f"{path}: trailing content after last tree")
    return ForestModel(bags, lr, dim)
