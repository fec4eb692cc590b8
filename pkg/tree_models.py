"""CART decision trees (Gini impurity), random forests and SAMME AdaBoost.

Sparse rows are read as dense features with absent indices meaning 0.0, so a
split threshold of e.g. 0.35 on a TF-IDF column separates documents that lack
the term from those that carry it.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field, field_validator

from errors import BoostError, FitError, ModelFormatError, ShapeError
from linear_models import N_CLASSES, MatrixLike, as_codes, as_matrix, one_hot

logger = logging.getLogger("EmoForge")

TIE_TOLERANCE = 1e-12
# Upper bound on the float cells materialized per split-search chunk.
_CHUNK_CELLS = 4_000_000

MaxFeatures = Union[int, Literal["sqrt", "all"]]


# --- Configuration ---

class TreeConfig(BaseModel):
    max_depth: Optional[int] = Field(default=None, ge=1)  # None = unbounded
    min_samples_leaf: int = Field(default=1, ge=1)
    max_features: MaxFeatures = "all"
    seed: int = Field(default=0, ge=0)

    @field_validator("max_features")
    @classmethod
    def check_max_features(cls, value):
        if isinstance(value, int) and value < 1:
            raise ValueError("max_features must be >= 1")
        return value


class ForestConfig(BaseModel):
    n_trees: int = Field(default=100, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)
    max_features: MaxFeatures = "sqrt"
    bootstrap: bool = True
    seed: int = Field(default=0, ge=0)
    n_jobs: int = Field(default=1, ge=1)

    def tree_config(self) -> TreeConfig:
        return TreeConfig(
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            max_features=self.max_features,
        )


class BoostConfig(BaseModel):
    n_stages: int = Field(default=50, ge=1)
    base_depth: int = Field(default=1, ge=1)


# --- Tree nodes ---

@dataclass(eq=False)
class Leaf:
    counts: np.ndarray  # weighted class counts of the training samples that reached the leaf

    @property
    def label(self) -> int:
        return int(np.argmax(self.counts))


@dataclass(eq=False)
class Split:
    feature: int
    threshold: float
    left: Optional["TreeNode"] = None  # value <= threshold
    right: Optional["TreeNode"] = None


TreeNode = Union[Leaf, Split]


def gini(counts: Sequence[float]) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _resolve_max_features(max_features: MaxFeatures, n_features: int) -> int:
    if max_features == "all":
        return n_features
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    return min(int(max_features), n_features)


def _column_lookup(Xc: sp.csc_matrix, feature: int, rows: np.ndarray) -> np.ndarray:
    """Values of one CSC column at the given rows (missing entries are 0)."""
    start, end = Xc.indptr[feature], Xc.indptr[feature + 1]
    col_rows = Xc.indices[start:end]
    col_data = Xc.data[start:end]
    values = np.zeros(len(rows))
    if len(col_rows) == 0:
        return values
    pos = np.searchsorted(col_rows, rows)
    clipped = np.minimum(pos, len(col_rows) - 1)
    hit = (pos < len(col_rows)) & (col_rows[clipped] == rows)
    values[hit] = col_data[clipped[hit]]
    return values


@dataclass(eq=False)
class DecisionTree:
    root: TreeNode
    n_features: int

    def _leaves_for(self, X: MatrixLike) -> List[Tuple[Leaf, np.ndarray]]:
        X = as_matrix(X, self.n_features)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[1]}")
        Xc = sp.csc_matrix(X, dtype=np.float64)
        Xc.sort_indices()
        reached = []
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if isinstance(node, Leaf):
                reached.append((node, rows))
                continue
            if len(rows) == 0:
                continue
            go_left = _column_lookup(Xc, node.feature, rows) <= node.threshold
            stack.append((node.right, rows[~go_left]))
            stack.append((node.left, rows[go_left]))
        return reached

    def predict(self, X: MatrixLike) -> np.ndarray:
        n = as_matrix(X, self.n_features).shape[0]
        out = np.zeros(n, dtype=np.int64)
        for leaf, rows in self._leaves_for(X):
            out[rows] = leaf.label
        return out

    @property
    def depth(self) -> int:
        deepest = 0
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            deepest = max(deepest, d)
            if isinstance(node, Split):
                stack.extend([(node.left, d + 1), (node.right, d + 1)])
        return deepest

    @property
    def leaf_count(self) -> int:
        return sum(1 for node in self._preorder() if isinstance(node, Leaf))

    def _preorder(self) -> Iterator[TreeNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, Split):
                stack.extend([node.right, node.left])

    def to_dict(self) -> Dict:
        # Flat preorder node list; children are referenced by position.
        nodes = list(self._preorder())
        position = {id(node): i for i, node in enumerate(nodes)}
        records = []
        for node in nodes:
            if isinstance(node, Leaf):
                records.append({"counts": node.counts.tolist()})
            else:
                records.append({
                    "feature": node.feature,
                    "threshold": node.threshold,
                    "left": position[id(node.left)],
                    "right": position[id(node.right)],
                })
        return {"n_features": self.n_features, "nodes": records}

    @classmethod
    def from_dict(cls, data: Dict) -> "DecisionTree":
        try:
            records = data["nodes"]
            nodes: List[TreeNode] = [
                Leaf(counts=np.asarray(r["counts"], dtype=np.float64)) if "counts" in r
                else Split(feature=int(r["feature"]), threshold=float(r["threshold"]))
                for r in records
            ]
            for node, r in zip(nodes, records):
                if isinstance(node, Split):
                    node.left = nodes[int(r["left"])]
                    node.right = nodes[int(r["right"])]
            return cls(root=nodes[0], n_features=int(data["n_features"]))
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed tree record: {e}")


# --- Split search ---

def _search(block_source: sp.csr_matrix, y: np.ndarray, weights: np.ndarray,
            features: np.ndarray, min_samples_leaf: int) -> Optional[Tuple[int, float, float]]:
    """
    Best (feature, threshold, weighted child impurity) over `features`
    (ascending). Impurity ties within TIE_TOLERANCE keep the lower feature and
    then the lower threshold.
    """
    n = block_source.shape[0]
    if n < 2 * min_samples_leaf or len(features) == 0:
        return None
    class_weights = one_hot(y) * weights[:, None]
    total_weight = weights.sum()
    left_sizes = np.arange(1, n)[:, None]
    size_ok = (left_sizes >= min_samples_leaf) & (n - left_sizes >= min_samples_leaf)

    chunk = max(1, min(128, _CHUNK_CELLS // (n * N_CLASSES)))
    best: Optional[Tuple[int, float, float]] = None
    for start in range(0, len(features), chunk):
        feats = features[start:start + chunk]
        block = block_source[:, feats].toarray()
        order = np.argsort(block, axis=0, kind="stable")
        values = np.take_along_axis(block, order, axis=0)
        cumulative = np.cumsum(class_weights[order], axis=0)
        left = cumulative[:-1]
        right = cumulative[-1][None, :, :] - left
        w_left = left.sum(axis=2)
        w_right = right.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            # w * gini = w - sum(counts^2) / w
            impurity = (
                np.where(w_left > 0, w_left - (left * left).sum(axis=2) / w_left, 0.0)
                + np.where(w_right > 0, w_right - (right * right).sum(axis=2) / w_right, 0.0)
            ) / total_weight
        valid = (values[:-1] < values[1:]) & size_ok
        impurity = np.where(valid, impurity, np.inf)

        column_best = impurity.min(axis=0)
        if not np.isfinite(column_best).any():
            continue
        chunk_min = column_best.min()
        j = int(np.argmax(column_best <= chunk_min + TIE_TOLERANCE))
        if best is not None and not column_best[j] < best[2] - TIE_TOLERANCE:
            continue
        pos = int(np.argmax(impurity[:, j] <= column_best[j] + TIE_TOLERANCE))
        threshold = float((values[pos, j] + values[pos + 1, j]) / 2.0)
        best = (int(feats[j]), threshold, float(column_best[j]))
    return best


def best_split(X: MatrixLike, y: Sequence, weights: Optional[np.ndarray] = None,
               min_samples_leaf: int = 1) -> Optional[Tuple[int, float, float]]:
    """Root split over every feature, or None when no valid split exists."""
    X = sp.csr_matrix(as_matrix(X), dtype=np.float64)
    codes = as_codes(y)
    weights = np.ones(len(codes)) if weights is None else np.asarray(weights, dtype=np.float64)
    return _search(X, codes, weights, np.arange(X.shape[1]), min_samples_leaf)


def _candidate_features(node_rows: sp.csr_matrix, n_features: int, max_features: MaxFeatures,
                        rng: np.random.Generator) -> np.ndarray:
    # Columns that are all-zero in the node cannot split it.
    active = np.unique(node_rows.indices)
    m = _resolve_max_features(max_features, n_features)
    if m < len(active):
        active = np.sort(rng.choice(active, size=m, replace=False))
    return active


def _grow(X: sp.csr_matrix, y: np.ndarray, weights: np.ndarray, config: TreeConfig,
          rng: np.random.Generator) -> TreeNode:
    root: Optional[TreeNode] = None
    stack = [(np.arange(X.shape[0]), 0, None, "")]
    while stack:
        rows, depth, parent, side = stack.pop()
        counts = np.bincount(y[rows], weights=weights[rows], minlength=N_CLASSES).astype(np.float64)
        node: Optional[TreeNode] = None
        can_split = (
            np.count_nonzero(counts) > 1
            and (config.max_depth is None or depth < config.max_depth)
            and len(rows) >= 2 * config.min_samples_leaf
        )
        if can_split:
            node_rows = X[rows]
            features = _candidate_features(node_rows, X.shape[1], config.max_features, rng)
            found = _search(node_rows, y[rows], weights[rows], features, config.min_samples_leaf)
            if found is not None:
                feature, threshold, _ = found
                go_left = node_rows[:, feature].toarray().ravel() <= threshold
                node = Split(feature=feature, threshold=threshold)
                stack.append((rows[~go_left], depth + 1, node, "right"))
                stack.append((rows[go_left], depth + 1, node, "left"))
        if node is None:
            node = Leaf(counts=counts)
        if parent is None:
            root = node
        else:
            setattr(parent, side, node)
    return root


def _training_inputs(X: MatrixLike, y: Sequence, n_features: Optional[int]) -> Tuple[sp.csr_matrix, np.ndarray]:
    X = sp.csr_matrix(as_matrix(X, n_features), dtype=np.float64)
    codes = as_codes(y)
    if X.shape[0] != len(codes) or len(codes) == 0:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {len(codes)} labels (need equal and > 0)")
    return X, codes


def _fit_tree(X: sp.csr_matrix, codes: np.ndarray, weights: np.ndarray, config: TreeConfig) -> DecisionTree:
    rng = np.random.default_rng(config.seed)
    return DecisionTree(root=_grow(X, codes, weights, config, rng), n_features=X.shape[1])


def train_decision_tree(X: MatrixLike, y: Sequence, config: Optional[TreeConfig] = None,
                        n_features: Optional[int] = None) -> DecisionTree:
    """
    Greedy CART. A node keeps splitting until it is pure, reaches max_depth,
    or has no threshold leaving min_samples_leaf samples on both sides.
    """
    config = config or TreeConfig()
    X, codes = _training_inputs(X, y, n_features)
    tree = _fit_tree(X, codes, np.ones(len(codes)), config)
    logger.debug(f"Decision tree: depth {tree.depth}, {tree.leaf_count} leaves")
    return tree


# --- Random forest ---

@dataclass(eq=False)
class Forest:
    trees: List[DecisionTree]
    seeds: Tuple[int, ...]
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X: MatrixLike) -> np.ndarray:
        X = as_matrix(X, self.n_features)
        tally = np.zeros((X.shape[0], N_CLASSES), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            np.add.at(tally, (rows, tree.predict(X)), 1)
        return tally

    def predict(self, X: MatrixLike) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def to_dict(self) -> Dict:
        return {
            "n_features": self.n_features,
            "seeds": list(self.seeds),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Forest":
        try:
            return cls(
                trees=[DecisionTree.from_dict(t) for t in data["trees"]],
                seeds=tuple(int(s) for s in data["seeds"]),
                n_features=int(data["n_features"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed forest record: {e}")


def train_random_forest(X: MatrixLike, y: Sequence, config: Optional[ForestConfig] = None,
                        n_features: Optional[int] = None) -> Forest:
    """
    Each tree draws its own seed from the forest seed, then uses it for the
    bootstrap sample and the per-split feature subsets. Trees are independent
    given their seeds, so `n_jobs > 1` trains them on a thread pool without
    changing the result.
    """
    config = config or ForestConfig()
    X, codes = _training_inputs(X, y, n_features)
    n = X.shape[0]
    seeds = tuple(int(s) for s in np.random.default_rng(config.seed).integers(0, 2**31 - 1, size=config.n_trees))
    tree_config = config.tree_config()

    def build(seed: int) -> DecisionTree:
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        root = _grow(X[rows], codes[rows], np.ones(n), tree_config, rng)
        return DecisionTree(root=root, n_features=X.shape[1])

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            trees = list(pool.map(build, seeds))
    else:
        trees = [build(seed) for seed in seeds]
    logger.info(f"Random forest: {len(trees)} trees over {n} samples")
    return Forest(trees=trees, seeds=seeds, n_features=X.shape[1])


# --- AdaBoost (SAMME) ---

def samme_alpha(error: float, n_classes: int) -> float:
    """Stage weight ln((1 - e) / e) + ln(C - 1)."""
    return float(math.log((1.0 - error) / error) + math.log(n_classes - 1))


@dataclass(eq=False)
class BoostEnsemble:
    stages: List[Tuple[DecisionTree, float]]
    n_classes: int
    n_features: int

    def staged_predict(self, X: MatrixLike) -> Iterator[np.ndarray]:
        """Ensemble predictions after each stage."""
        X = as_matrix(X, self.n_features)
        scores = np.zeros((X.shape[0], N_CLASSES))
        rows = np.arange(X.shape[0])
        for tree, alpha in self.stages:
            scores[rows, tree.predict(X)] += alpha
            yield np.argmax(scores, axis=1)

    def predict(self, X: MatrixLike) -> np.ndarray:
        prediction = None
        for prediction in self.staged_predict(X):
            pass
        return prediction

    def to_dict(self) -> Dict:
        return {
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "stages": [{"alpha": alpha, "tree": tree.to_dict()} for tree, alpha in self.stages],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "BoostEnsemble":
        try:
            stages = [(DecisionTree.from_dict(s["tree"]), float(s["alpha"])) for s in data["stages"]]
            return cls(stages=stages, n_classes=int(data["n_classes"]), n_features=int(data["n_features"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed boosting record: {e}")


def train_adaboost(X: MatrixLike, y: Sequence, config: Optional[BoostConfig] = None,
                   n_features: Optional[int] = None) -> BoostEnsemble:
    """
    Multiclass SAMME over depth-limited CART trees. C is the number of
    classes present in y. A stage no better than chance (error >= 1 - 1/C)
    ends training; a perfect stage is kept with its error clipped to 1e-10
    and also ends training.
    """
    config = config or BoostConfig()
    X, codes = _training_inputs(X, y, n_features)
    n_classes = len(np.unique(codes))
    if n_classes < 2:
        raise FitError("AdaBoost needs at least 2 classes in the training labels")

    base = TreeConfig(max_depth=config.base_depth)
    weights = np.full(len(codes), 1.0 / len(codes))
    chance = 1.0 - 1.0 / n_classes
    stages: List[Tuple[DecisionTree, float]] = []
    for stage in range(config.n_stages):
        tree = _fit_tree(X, codes, weights, base)
        missed = tree.predict(X) != codes
        error = float(weights[missed].sum() / weights.sum())
        if error >= chance:
            if not stages:
                raise BoostError(
                    f"first boosting stage has weighted error {error:.4f} >= {chance:.4f}; "
                    f"the base learner is no better than chance"
                )
            logger.warning(f"AdaBoost stopped at stage {stage}: weighted error {error:.4f} is at chance level")
            break
        if error <= 0.0:
            stages.append((tree, samme_alpha(1e-10, n_classes)))
            logger.debug(f"AdaBoost stage {stage} is perfect; stopping")
            break
        alpha = samme_alpha(error, n_classes)
        stages.append((tree, alpha))
        weights = weights * np.exp(alpha * missed)
        weights /= weights.sum()

    logger.info(f"AdaBoost: {len(stages)} stages over {len(codes)} samples")
    return BoostEnsemble(stages=stages, n_classes=n_classes, n_features=X.shape[1])
