"""Label trees over scene categories and the frame embedding they induce.

A binary tree with C-1 split nodes is grown by recursive 2-means over
per-category mean feature vectors. Each split node gets a logistic scorer
separating its left and right meta-classes; a frame's embedding collects,
for every node, the posterior of the two meta-classes (they sum to one).
Nodes are numbered breadth-first and node k owns embedding entries 2k
(left) and 2k+1 (right).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .features import CHANNELS, LowLevelVector
from .nn.ops import sigmoid

LLOYD_ITERS = 20
NODE_GD_ITERS = 200
NODE_GD_STEP = 0.1
NODE_GD_REG = 1e-3


@dataclass
class SplitNode:
    node_id: int
    left_meta: tuple[int, ...]
    right_meta: tuple[int, ...]
    left_child: int | None = None  # split-node id, None when the side is a leaf
    right_child: int | None = None

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(sorted(self.left_meta + self.right_meta))


@dataclass
class LabelTree:
    n_categories: int
    nodes: list[SplitNode] = field(default_factory=list)

    def __post_init__(self):
        if len(self.nodes) != self.n_categories - 1:
            raise DataError(
                f"tree over {self.n_categories} categories needs "
                f"{self.n_categories - 1} split nodes, has {len(self.nodes)}"
            )

    @property
    def n_meta_classes(self) -> int:
        return 2 * len(self.nodes)


def _two_means(points: np.ndarray) -> np.ndarray:
    """Partition points into two clusters; returns a boolean right-side mask.

    Seeded by the most distant pair (first such pair in row-major order on
    ties), then 20 Lloyd iterations. Assignment ties go to the first center.
    """
    m = points.shape[0]
    diff = points[:, None, :] - points[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    tri = np.triu(np.ones((m, m), dtype=bool), k=1)
    seed_flat = int(np.argmax(np.where(tri, dist, -np.inf)))
    i, j = np.unravel_index(seed_flat, (m, m))
    centers = points[[i, j]].astype(np.float64)

    assign = None
    for _ in range(LLOYD_ITERS):
        d0 = np.sum((points - centers[0]) ** 2, axis=1)
        d1 = np.sum((points - centers[1]) ** 2, axis=1)
        assign = d1 < d0  # ties stay with center 0
        # Degenerate cluster: move the point farthest from the occupied
        # center into the empty side.
        if assign.all():
            far = int(np.argmax(np.sum((points - centers[1]) ** 2, axis=1)))
            assign[far] = False
        elif not assign.any():
            far = int(np.argmax(np.sum((points - centers[0]) ** 2, axis=1)))
            assign[far] = True
        centers[0] = points[~assign].mean(axis=0)
        centers[1] = points[assign].mean(axis=0)
    return assign


def build_label_tree(class_means: np.ndarray, n_categories: int | None = None) -> LabelTree:
    """Grow the binary label tree from per-category mean vectors.

    class_means: (C, dim). Deterministic given inputs; the cluster holding
    the lowest category id becomes the left meta-class of each split.
    """
    class_means = np.asarray(class_means, dtype=np.float64)
    c = class_means.shape[0] if n_categories is None else n_categories
    if c < 2:
        raise DataError(f"need at least 2 categories, got {c}")
    if class_means.shape[0] != c:
        raise DataError("one mean vector required per category")
    if not np.all(np.isfinite(class_means)):
        raise DataError("category mean vectors must be finite")

    # Recursively split, then number nodes breadth-first.
    def split(members: tuple[int, ...]):
        if len(members) == 1:
            return None
        if len(members) == 2:
            right_mask = np.array([False, True])
        else:
            right_mask = _two_means(class_means[list(members)])
        left = tuple(m for m, r in zip(members, right_mask) if not r)
        right = tuple(m for m, r in zip(members, right_mask) if r)
        if min(right) < min(left):  # lowest category id goes left
            left, right = right, left
        return {"left": left, "right": right,
                "left_child": split(left), "right_child": split(right)}

    root = split(tuple(range(c)))
    nodes: list[SplitNode] = []
    queue = [root]
    pending_children: list[tuple[int, str, dict]] = []
    while queue:
        rec = queue.pop(0)
        node = SplitNode(node_id=len(nodes), left_meta=rec["left"], right_meta=rec["right"])
        nodes.append(node)
        for side in ("left", "right"):
            child = rec[f"{side}_child"]
            if child is not None:
                pending_children.append((node.node_id, side, child))
                queue.append(child)
    # Second pass: children were enqueued in BFS order, so their ids follow.
    next_id = 1
    for parent_id, side, _child in pending_children:
        setattr(nodes[parent_id], f"{side}_child", next_id)
        next_id += 1
    return LabelTree(n_categories=c, nodes=nodes)


@dataclass
class EmbeddingModel:
    """Label tree plus per-node logistic scorers for one feature channel."""

    tree: LabelTree
    channel: int
    node_weights: np.ndarray  # (C-1, dim)
    node_biases: np.ndarray  # (C-1,)
    feature_mean: np.ndarray  # (dim,), standardization fitted on training frames
    feature_std: np.ndarray  # (dim,)

    @property
    def feature_dim(self) -> int:
        return self.node_weights.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.tree.n_meta_classes


def category_mean_vectors(features: np.ndarray, labels: np.ndarray, n_categories: int) -> np.ndarray:
    """Per-category mean of the given frame features."""
    features = np.asarray(features, dtype=np.float64)
    means = np.empty((n_categories, features.shape[1]))
    for cat in range(n_categories):
        rows = features[labels == cat]
        if rows.shape[0] == 0:
            raise DataError(f"category {cat} has no frames")
        means[cat] = rows.mean(axis=0)
    return means


def _train_logistic(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Full-batch GD on L2-regularized logistic loss (bias unregularized)."""
    n, dim = x.shape
    w = np.zeros(dim)
    b = 0.0
    for _ in range(NODE_GD_ITERS):
        p = sigmoid(x @ w + b)
        err = p - y
        w -= NODE_GD_STEP * (x.T @ err / n + NODE_GD_REG * w)
        b -= NODE_GD_STEP * float(err.mean())
    return w, b


def train_node_classifiers(tree: LabelTree, features: np.ndarray, labels: np.ndarray,
                           channel: int) -> EmbeddingModel:
    """Fit one binary scorer per split node on that node's member frames.

    Frames are standardized with statistics of the full training set; the
    scorer for a node sees only frames whose category belongs to the node,
    with left-meta frames labeled 0 and right-meta frames labeled 1.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    present = set(np.unique(labels).tolist())
    missing = [c for c in range(tree.n_categories) if c not in present]
    if missing:
        raise DataError(f"no training frames for categories {missing}")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std < 1e-8] = 1.0
    x_all = (features - mean) / std

    n_nodes = len(tree.nodes)
    weights = np.zeros((n_nodes, features.shape[1]))
    biases = np.zeros(n_nodes)
    for node in tree.nodes:
        member_mask = np.isin(labels, node.members)
        if not member_mask.any():
            raise DataError(f"split node {node.node_id} has no training frames")
        x = x_all[member_mask]
        y = np.isin(labels[member_mask], node.right_meta).astype(np.float64)
        weights[node.node_id], biases[node.node_id] = _train_logistic(x, y)
    return EmbeddingModel(
        tree=tree,
        channel=channel,
        node_weights=weights,
        node_biases=biases,
        feature_mean=mean,
        feature_std=std,
    )


def embed_frames(model: EmbeddingModel, features: np.ndarray) -> np.ndarray:
    """Map frames (n, dim) to their embedding rows (n, 2(C-1)).

    Entry 2k holds the left meta-class posterior of node k, entry 2k+1 the
    right one; each pair sums to 1.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != model.feature_dim:
        raise DataError(
            f"frame dim {features.shape[1]} != model dim {model.feature_dim} "
            f"for channel {model.channel}"
        )
    x = (features - model.feature_mean) / model.feature_std
    p_right = sigmoid(x @ model.node_weights.T + model.node_biases)
    out = np.empty((features.shape[0], model.n_outputs))
    out[:, 1::2] = p_right
    out[:, 0::2] = 1.0 - p_right
    return out


def embed_frame(model: EmbeddingModel, v) -> np.ndarray:
    """Embed a single frame vector (or LowLevelVector) for one channel."""
    values = v.values if isinstance(v, LowLevelVector) else v
    return embed_frames(model, values)[0]


def save_embedding(path, model: EmbeddingModel) -> None:
    from .checkpoint import write_checkpoint

    meta = {
        "channel": model.channel,
        "n_categories": model.tree.n_categories,
        "nodes": [
            {
                "left_meta": list(node.left_meta),
                "right_meta": list(node.right_meta),
                "left_child": node.left_child,
                "right_child": node.right_child,
            }
            for node in model.tree.nodes
        ],
    }
    blocks = {
        "node_weights": model.node_weights,
        "node_biases": model.node_biases,
        "feature_mean": model.feature_mean,
        "feature_std": model.feature_std,
    }
    write_checkpoint(path, "embedding", meta, blocks)


def load_embedding(path) -> EmbeddingModel:
    from .checkpoint import read_checkpoint

    kind, meta, blocks = read_checkpoint(path)
    if kind != "embedding":
        raise DataError(f"{path}: expected an embedding checkpoint, got {kind!r}")
    nodes = [
        SplitNode(
            node_id=i,
            left_meta=tuple(rec["left_meta"]),
            right_meta=tuple(rec["right_meta"]),
            left_child=rec["left_child"],
            right_child=rec["right_child"],
        )
        for i, rec in enumerate(meta["nodes"])
    ]
    tree = LabelTree(n_categories=meta["n_categories"], nodes=nodes)
    return EmbeddingModel(
        tree=tree,
        channel=meta["channel"],
        node_weights=blocks["node_weights"].astype(np.float64),
        node_biases=blocks["node_biases"].astype(np.float64),
        feature_mean=blocks["feature_mean"].astype(np.float64),
        feature_std=blocks["feature_std"].astype(np.float64),
    )


def embed_segment(models: list[EmbeddingModel], channel_features: list[np.ndarray]) -> np.ndarray:
    """Assemble the multi-channel tensor X of shape (F, T, D).

    models: one EmbeddingModel per channel, in channel order;
    channel_features: per channel the (T, dim) frame features of one segment.
    """
    if len(models) != len(CHANNELS) or any(m is None for m in models):
        raise DataError(f"need one embedding model per channel ({len(CHANNELS)})")
    t = channel_features[0].shape[0]
    f = models[0].n_outputs
    x = np.empty((f, t, len(models)), dtype=np.float32)
    for c, (model, feats) in enumerate(zip(models, channel_features)):
        if model.channel != c:
            raise DataError(f"model at position {c} is for channel {model.channel}")
        x[:, :, c] = embed_frames(model, feats).T
    return x
