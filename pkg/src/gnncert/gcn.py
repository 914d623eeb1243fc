"""A minimal two-layer graph-convolutional node classifier.

The model exists to exercise the certification machinery end to end: it is a
faithful message-passing classifier (degree-normalized neighborhood
aggregation with a self-loop) whose predictions provably depend only on
nodes that can reach the target through surviving edges.  The ablation token
is a trained parameter.  Training is full-batch with hand-written
reverse-mode gradients and Adam updates; desk-scale dense matrices make an
autodiff dependency unnecessary.

External classifiers are supported through vote files instead of live
models, so certification is not tied to this architecture.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError, VoteFormatError
from .graph import Graph
from . import smoothing


@dataclass
class GnnModel:
    """Weights of the two-layer classifier plus the trained ablation token."""

    w1: np.ndarray      # (d, hidden)
    w2: np.ndarray      # (hidden, classes)
    token: np.ndarray   # (d,)
    skip: bool = False

    @property
    def dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[1])

    @property
    def classes(self) -> int:
        return int(self.w2.shape[1])


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 1000
    patience: int = 50
    dropout: float = 0.8
    p_del: float = 0.0      # training-time smoothing, tuned freely
    p_abl: float = 0.0
    hidden: int = 64
    skip: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_del <= 1.0 or not 0.0 <= self.p_abl <= 1.0:
            raise ValueError("training smoothing probabilities must be in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def normalized_adjacency(n: int, edges: np.ndarray) -> np.ndarray:
    """Symmetric degree-normalized aggregation matrix with self-loops.

    Built from the surviving edges of a sample, never the clean graph:
    using clean-graph degrees would leak which edges were deleted.
    """
    m = np.zeros((n, n), dtype=np.float64)
    if edges.shape[0]:
        m[edges[:, 1], edges[:, 0]] = 1.0   # row = receiver, col = sender
    np.fill_diagonal(m, 1.0)
    inv_sqrt = 1.0 / np.sqrt(m.sum(axis=1))
    return m * inv_sqrt[:, None] * inv_sqrt[None, :]


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def forward_all(model: GnnModel, g: Graph,
                clean_features: np.ndarray | None = None) -> np.ndarray:
    """Class scores for every node of (a possibly smoothed view of) a graph.

    With the skip connection, the clean (non-ablated) features are forwarded
    through the same weights with no edges and added to the output, so the
    target's own signal survives ablation.
    """
    if g.dim != model.dim:
        raise ValueError(
            f"graph features have {g.dim} columns, model expects {model.dim}"
        )
    a_hat = normalized_adjacency(g.n, g.edges)
    h1 = _relu(a_hat @ g.features @ model.w1)
    out = a_hat @ h1 @ model.w2
    if model.skip:
        xc = g.features if clean_features is None else clean_features
        out = out + _relu(xc @ model.w1) @ model.w2
    return out


def forward(model: GnnModel, g: Graph, v: int,
            clean_features: np.ndarray | None = None) -> np.ndarray:
    """Class scores for one node."""
    return forward_all(model, g, clean_features=clean_features)[v]


def predict_all(model: GnnModel, g: Graph,
                clean_features: np.ndarray | None = None) -> np.ndarray:
    """Argmax class per node; ties resolve to the lowest class index."""
    return np.argmax(forward_all(model, g, clean_features=clean_features), axis=1)


# ---------------------------------------------------------------------------
# training


def loss_and_grads(
    model: GnnModel,
    a_hat: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    idx: np.ndarray,
    ablated: np.ndarray,
    weight_decay: float,
    clean_x: np.ndarray | None = None,
    drop_mask: np.ndarray | None = None,
    drop_scale: float = 1.0,
):
    """Cross-entropy loss on ``idx`` plus L2, with gradients for w1, w2, token.

    ``x`` is the post-ablation feature matrix (token rows already written),
    so the token gradient is the sum of feature-row gradients over ablated
    nodes.  ``drop_mask`` (inverted-dropout, already including the 1/(1-p)
    scale via ``drop_scale``) applies to both the message path and the skip
    path.
    """
    xd = x * drop_mask * drop_scale if drop_mask is not None else x
    ax = a_hat @ xd
    z1 = ax @ model.w1
    h1 = _relu(z1)
    ah1 = a_hat @ h1
    out = ah1 @ model.w2

    if model.skip:
        xc = x if clean_x is None else clean_x
        xcd = xc * drop_mask * drop_scale if drop_mask is not None else xc
        s_pre = xcd @ model.w1
        s1 = _relu(s_pre)
        out = out + s1 @ model.w2

    shifted = out - out.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    eps = 1e-12
    loss = -np.mean(np.log(probs[idx, labels[idx]] + eps))
    loss += 0.5 * weight_decay * (
        float((model.w1 ** 2).sum())
        + float((model.w2 ** 2).sum())
        + float((model.token ** 2).sum())
    )

    grad_out = np.zeros_like(probs)
    grad_out[idx] = probs[idx]
    grad_out[idx, labels[idx]] -= 1.0
    grad_out /= len(idx)

    at_g = a_hat.T @ grad_out
    d_w2 = ah1.T @ grad_out
    d_h1 = at_g @ model.w2.T
    d_z1 = d_h1 * (z1 > 0)
    d_w1 = ax.T @ d_z1
    d_xd = a_hat.T @ d_z1 @ model.w1.T

    if model.skip:
        d_w2 += s1.T @ grad_out
        d_s_pre = (grad_out @ model.w2.T) * (s_pre > 0)
        d_w1 += xcd.T @ d_s_pre
        # skip path reads clean features, so no token gradient flows there

    d_x = d_xd * drop_mask * drop_scale if drop_mask is not None else d_xd
    d_token = d_x[ablated].sum(axis=0)

    d_w1 += weight_decay * model.w1
    d_w2 += weight_decay * model.w2
    d_token += weight_decay * model.token
    return loss, d_w1, d_w2, d_token


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def split_labeled(labeled, labels: np.ndarray, seed: int) -> tuple[list[int], list[int]]:
    """Deterministic per-class half/half split of the labeled set into train/val."""
    rng = np.random.default_rng((int(seed), 0xBEEF))
    by_class: dict[int, list[int]] = {}
    for v in sorted(int(x) for x in labeled):
        by_class.setdefault(int(labels[v]), []).append(v)
    train, val = [], []
    for c in sorted(by_class):
        nodes = by_class[c]
        perm = rng.permutation(len(nodes))
        half = max(1, len(nodes) // 2)
        train.extend(nodes[i] for i in perm[:half])
        val.extend(nodes[i] for i in perm[half:])
    return sorted(train), sorted(val)


def train(g: Graph, labeled, cfg: TrainConfig,
          history: list | None = None) -> GnnModel:
    """Train the classifier on the labeled nodes under training-time smoothing.

    Each epoch draws a fresh interception sample, writes the current token
    into ablated rows, and takes one full-batch Adam step; gradients flow
    into both weight matrices and the token.  Early stopping tracks clean
    validation accuracy with the configured patience and restores the best
    weights.  ``history``, when given, receives (epoch, loss, val_acc) rows.
    """
    labeled = sorted(int(x) for x in labeled)
    if not labeled:
        raise ConfigError("no labeled nodes to train on")
    if g.labels is None:
        raise ConfigError("graph has no labels")
    classes = int(g.labels[labeled].max()) + 1
    if classes < 2:
        raise ConfigError("training needs at least two classes")

    rng = np.random.default_rng(cfg.seed)
    d = g.dim
    h = cfg.hidden

    def glorot(fan_in, fan_out, size):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=size)

    model = GnnModel(
        w1=glorot(d, h, (d, h)),
        w2=glorot(h, classes, (h, classes)),
        token=glorot(d, 1, (d,)),
        skip=cfg.skip,
    )

    train_idx, val_idx = split_labeled(labeled, g.labels, cfg.seed)
    if not val_idx:
        val_idx = train_idx
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)

    smooth_cfg = smoothing.SmoothingConfig(
        p_del=cfg.p_del, p_abl=cfg.p_abl, token=np.zeros(d), k=2,
        seed=(cfg.seed << 1) ^ 0x5EED,
    )
    adam = _Adam([model.w1.shape, model.w2.shape, model.token.shape], lr=cfg.lr)
    keep_prob = 1.0 - cfg.dropout

    best = (-1.0, None)
    stale = 0
    for epoch in range(cfg.epochs):
        s = smoothing.sample(g, smooth_cfg, epoch)
        x = g.features.copy()
        x[s.ablated] = model.token
        a_hat = normalized_adjacency(g.n, g.edges[s.edge_mask])
        if cfg.dropout > 0.0:
            drop_mask = rng.random(x.shape) < keep_prob
            drop_scale = 1.0 / keep_prob
        else:
            drop_mask, drop_scale = None, 1.0

        loss, d_w1, d_w2, d_token = loss_and_grads(
            model, a_hat, x, g.labels, train_idx, s.ablated,
            cfg.weight_decay, clean_x=g.features,
            drop_mask=drop_mask, drop_scale=drop_scale,
        )
        adam.step([model.w1, model.w2, model.token], [d_w1, d_w2, d_token])

        val_acc = float(np.mean(predict_all(model, g)[val_idx] == g.labels[val_idx]))
        if history is not None:
            history.append((epoch, float(loss), val_acc))

        if val_acc > best[0]:
            best = (val_acc, (model.w1.copy(), model.w2.copy(), model.token.copy()))
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if best[1] is not None:
        model.w1, model.w2, model.token = best[1]
    return model


# ---------------------------------------------------------------------------
# checkpoints and vote files


def save_checkpoint(model: GnnModel, path, train_config: TrainConfig | None = None,
                    extra: dict | None = None) -> None:
    payload = {
        "w1": model.w1.tolist(),
        "w2": model.w2.tolist(),
        "token": model.token.tolist(),
        "skip": bool(model.skip),
        "hidden": model.hidden,
        "classes": model.classes,
        "feature_dim": model.dim,
        "train_config": asdict(train_config) if train_config else None,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[GnnModel, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    model = GnnModel(
        w1=np.asarray(payload["w1"], dtype=np.float64),
        w2=np.asarray(payload["w2"], dtype=np.float64),
        token=np.asarray(payload["token"], dtype=np.float64),
        skip=bool(payload["skip"]),
    )
    return model, payload


@dataclass
class VoteTable:
    """Predictions of an external classifier, per (node, sample index)."""

    votes: dict[int, dict[int, int]]

    @property
    def classes(self) -> int:
        top = -1
        for per_node in self.votes.values():
            if per_node:
                top = max(top, max(per_node.values()))
        return top + 1

    def tally(self, node: int) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self.votes.get(node, {}).values():
            out[c] = out.get(c, 0) + 1
        return out


def save_votes(path, rows) -> None:
    """Write (node_id, sample_index, class) rows as CSV with a header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "sample_index", "class"])
        for node, sample_index, cls in rows:
            writer.writerow([int(node), int(sample_index), int(cls)])


def load_votes(path) -> VoteTable:
    """Read a vote CSV (header optional); duplicate (node, sample) pairs are errors."""
    votes: dict[int, dict[int, int]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue    # header
            if len(row) != 3:
                raise VoteFormatError(
                    f"{path}: line {lineno}: expected node_id,sample_index,class"
                )
            try:
                node, sample_index, cls = (int(x) for x in row)
            except ValueError:
                raise VoteFormatError(
                    f"{path}: line {lineno}: non-integer field in {row!r}"
                ) from None
            per_node = votes.setdefault(node, {})
            if sample_index in per_node:
                raise VoteFormatError(
                    f"{path}: line {lineno}: duplicate vote for node {node}, "
                    f"sample {sample_index}"
                )
            per_node[sample_index] = cls
    return VoteTable(votes=votes)
