"""From-scratch KNN (ensemble layer 1) and Random Forest (layer 3).

Both are deterministic functions of (data, config, seed). KNN tie rules:
equal distances break toward the lower reference row index, equal vote
counts toward the lowest class code. Forest trees vote their leaf's argmax
class; vote ties also break toward the lowest class code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, KTooLarge
from .preprocess import FeatureMatrix

N_CLASSES = 5

# Debug assertion that every accepted split does not increase weighted Gini.
_GINI_CHECKS = False


def set_gini_checks(enabled: bool) -> None:
    global _GINI_CHECKS
    _GINI_CHECKS = enabled


def _as_values(queries) -> np.ndarray:
    if isinstance(queries, FeatureMatrix):
        return queries.values
    return np.asarray(queries, dtype=np.float32)


class KnnClassifier:
    """Brute-force Euclidean k-nearest-neighbours majority vote.

    The reference set is capped (default 20,000 rows) by seeded stratified
    subsampling: full-file KNN is quadratic and the cap keeps desk-scale
    runs tractable. `reference_capped` reports whether the cap bound.
    """

    def __init__(self, k: int = 5, max_reference_rows: int | None = 20000,
                 seed: int = 0, n_classes: int = N_CLASSES):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = k
        self.max_reference_rows = max_reference_rows
        self.seed = seed
        self.n_classes = n_classes
        self.references: np.ndarray | None = None
        self.labels: np.ndarray | None = None
        self.reference_capped = False

    def fit(self, train: FeatureMatrix) -> "KnnClassifier":
        values, labels = train.values, train.labels
        if values.shape[0] == 0:
            raise EmptyTrainingSet("KNN needs at least one reference row")
        cap = self.max_reference_rows
        if cap is not None and values.shape[0] > cap:
            keep = _stratified_cap(labels, cap, self.seed)
            values, labels = values[keep], labels[keep]
            self.reference_capped = True
        if self.k > values.shape[0]:
            raise KTooLarge(f"k={self.k} exceeds {values.shape[0]} reference rows")
        self.references = np.ascontiguousarray(values, dtype=np.float32)
        self.labels = labels.astype(np.int64)
        return self

    def predict(self, queries, chunk: int = 2048) -> np.ndarray:
        if self.references is None or self.labels is None:
            raise EmptyTrainingSet("KNN predict before fit")
        q = _as_values(queries)
        if q.ndim != 2 or q.shape[1] != self.references.shape[1]:
            raise DimensionMismatch(
                f"queries have {q.shape[1] if q.ndim == 2 else '?'} columns, "
                f"references have {self.references.shape[1]}")
        refs = self.references
        ref_sq = (refs.astype(np.float64) ** 2).sum(axis=1)
        out = np.empty(q.shape[0], dtype=np.int64)
        k = self.k
        for start in range(0, q.shape[0], chunk):
            block = q[start:start + chunk].astype(np.float64)
            d2 = block @ refs.T.astype(np.float64)
            d2 *= -2.0
            d2 += ref_sq
            d2 += (block ** 2).sum(axis=1, keepdims=True)
            np.maximum(d2, 0.0, out=d2)
            for i in range(block.shape[0]):
                out[start + i] = self._vote(d2[i], k)
        return out

    def _vote(self, dists: np.ndarray, k: int) -> int:
        # exact k-nearest under (distance, reference index) ordering: the
        # KDD file is full of duplicate rows, so distance ties are common
        if k >= dists.shape[0]:
            nearest = np.lexsort((np.arange(dists.shape[0]), dists))[:k]
        else:
            part = np.argpartition(dists, k - 1)[:k]
            boundary = dists[part].max()
            cand = np.flatnonzero(dists <= boundary)
            order = np.lexsort((cand, dists[cand]))
            nearest = cand[order[:k]]
        votes = np.bincount(self.labels[nearest], minlength=self.n_classes)
        return int(votes.argmax())  # argmax takes the lowest code on ties


def _stratified_cap(labels: np.ndarray, cap: int, seed: int) -> np.ndarray:
    """Per-class proportional subsample down to `cap` rows, file order kept."""
    n = labels.shape[0]
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    quota = {}
    for c in classes:
        quota[c] = int(np.floor(cap * (labels == c).sum() / n))
    # distribute the rounding remainder to the largest classes, at least 1 each
    for c in classes:
        quota[c] = max(quota[c], 1)
    remainder = cap - sum(quota.values())
    if remainder > 0:
        by_size = sorted(classes, key=lambda c: -(labels == c).sum())
        for c in by_size:
            room = int((labels == c).sum()) - quota[c]
            grab = min(room, remainder)
            quota[c] += grab
            remainder -= grab
            if remainder == 0:
                break
    keep = []
    for c in classes:
        pos = np.flatnonzero(labels == c)
        take = min(quota[c], pos.size)
        perm = rng.permutation(pos.size)[:take]
        keep.append(pos[perm])
    return np.sort(np.concatenate(keep))


@dataclass
class ForestConfig:
    n_trees: int = 50
    max_depth: int = 16
    min_samples_split: int = 2
    features_per_split: int | None = None  # default ceil(sqrt(d))
    seed: int = 0
    n_classes: int = N_CLASSES


@dataclass
class Tree:
    """Flat node table: feature < 0 marks a leaf."""

    feature: np.ndarray    # (nodes,) int32
    threshold: np.ndarray  # (nodes,) float32
    left: np.ndarray       # (nodes,) int32
    right: np.ndarray      # (nodes,) int32
    hist: np.ndarray       # (nodes, n_classes) int64 class histogram

    def leaf_class(self, node: int) -> int:
        return int(self.hist[node].argmax())


class _TreeBuilder:
    def __init__(self, x: np.ndarray, y: np.ndarray, cfg: ForestConfig,
                 rng: np.random.Generator, n_features_split: int):
        self.x = x
        self.y = y
        self.cfg = cfg
        self.rng = rng
        self.mtry = n_features_split
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.hist: list[np.ndarray] = []

    def build(self) -> Tree:
        self._grow(np.arange(self.x.shape[0]), depth=0)
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float32),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            hist=np.stack(self.hist).astype(np.int64),
        )

    def _new_node(self, rows: np.ndarray) -> int:
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.hist.append(np.bincount(self.y[rows], minlength=self.cfg.n_classes))
        return idx

    def _grow(self, rows: np.ndarray, depth: int) -> int:
        node = self._new_node(rows)
        hist = self.hist[node]
        pure = (hist > 0).sum() <= 1
        if depth >= self.cfg.max_depth or pure or rows.size < self.cfg.min_samples_split:
            return node
        found = self._best_split(rows)
        if found is None:
            return node
        feat, thr = found
        go_left = self.x[rows, feat] <= thr
        left_rows, right_rows = rows[go_left], rows[~go_left]
        if left_rows.size == 0 or right_rows.size == 0:
            return node
        self.feature[node] = feat
        self.threshold[node] = thr
        self.left[node] = self._grow(left_rows, depth + 1)
        self.right[node] = self._grow(right_rows, depth + 1)
        return node

    def _best_split(self, rows: np.ndarray) -> tuple[int, float] | None:
        """Minimum weighted Gini over mtry sampled features; candidates are
        midpoints between consecutive sorted unique values."""
        m = rows.size
        n_feat = self.x.shape[1]
        feats = self.rng.choice(n_feat, size=min(self.mtry, n_feat), replace=False)
        y_onehot = np.zeros((m, self.cfg.n_classes), dtype=np.float64)
        y_onehot[np.arange(m), self.y[rows]] = 1.0
        parent_hist = y_onehot.sum(axis=0)
        parent_gini = 1.0 - ((parent_hist / m) ** 2).sum()

        best: tuple[float, int, float] | None = None
        for feat in feats:
            vals = self.x[rows, feat]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            cut = np.flatnonzero(sv[:-1] < sv[1:])  # last index of each left block
            if cut.size == 0:
                continue
            prefix = np.cumsum(y_onehot[order], axis=0)
            n_left = (cut + 1).astype(np.float64)
            n_right = m - n_left
            left_hist = prefix[cut]
            right_hist = parent_hist - left_hist
            gini_l = 1.0 - ((left_hist / n_left[:, None]) ** 2).sum(axis=1)
            gini_r = 1.0 - ((right_hist / n_right[:, None]) ** 2).sum(axis=1)
            weighted = (n_left * gini_l + n_right * gini_r) / m
            j = int(weighted.argmin())  # lowest threshold wins ties per feature
            score = float(weighted[j])
            # midpoint computed in f32 so serialized trees are exact
            thr = np.float32(sv[cut[j]] / 2.0 + sv[cut[j] + 1] / 2.0)
            if best is None or score < best[0]:
                best = (score, int(feat), float(thr))
        if best is None:
            return None
        if _GINI_CHECKS and best[0] > parent_gini + 1e-12:
            raise AssertionError("split increased weighted Gini impurity")
        return best[1], np.float32(best[2])


class ForestClassifier:
    """Bootstrap forest of Gini-split decision trees."""

    def __init__(self, config: ForestConfig | None = None, **overrides):
        cfg = config or ForestConfig()
        if overrides:
            cfg = ForestConfig(**{**cfg.__dict__, **overrides})
        self.config = cfg
        self.trees: list[Tree] = []

    def fit(self, train: FeatureMatrix) -> "ForestClassifier":
        x, y = train.values, train.labels.astype(np.int64)
        if x.shape[0] == 0:
            raise EmptyTrainingSet("random forest needs at least one row")
        cfg = self.config
        mtry = cfg.features_per_split or int(np.ceil(np.sqrt(x.shape[1])))
        self.trees = []
        n = x.shape[0]
        for t in range(cfg.n_trees):
            rng = np.random.default_rng([cfg.seed, t])
            sample = rng.integers(0, n, size=n)  # bootstrap, with replacement
            builder = _TreeBuilder(x[sample], y[sample], cfg, rng, mtry)
            self.trees.append(builder.build())
        return self

    def tree_votes(self, queries) -> np.ndarray:
        """(n_trees, n_queries) leaf-argmax class votes."""
        if not self.trees:
            raise EmptyTrainingSet("random forest predict before fit")
        q = _as_values(queries)
        votes = np.empty((len(self.trees), q.shape[0]), dtype=np.int64)
        for t, tree in enumerate(self.trees):
            node = np.zeros(q.shape[0], dtype=np.int64)
            active = tree.feature[node] >= 0
            while active.any():
                idx = np.flatnonzero(active)
                feats = tree.feature[node[idx]]
                thrs = tree.threshold[node[idx]]
                go_left = q[idx, feats] <= thrs
                node[idx[go_left]] = tree.left[node[idx[go_left]]]
                node[idx[~go_left]] = tree.right[node[idx[~go_left]]]
                active = tree.feature[node] >= 0
            votes[t] = tree.hist[node].argmax(axis=1)
        return votes

    def predict(self, queries) -> np.ndarray:
        votes = self.tree_votes(queries)
        counts = np.stack(
            [(votes == c).sum(axis=0) for c in range(self.config.n_classes)])
        return counts.argmax(axis=0).astype(np.int64)
