"""Causal concept bottleneck model and flat-bottleneck baselines.

Each concept node owns an exogenous encoder mapping input features to a
latent embedding.  Root nodes predict their distribution from that embedding
directly; every other node owns a hypernetwork that turns its embedding into
per-parent weight matrices, and its distribution is the softmax of the
weighted sum of its parents' probability vectors, evaluated in topological
order.  Clamping a node (an intervention) replaces its output with an exact
one-hot that feeds all descendants, severing the influence of its ancestors.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, Mlp, ShapeMismatch, Tensor, cross_entropy, load_tensors, save_tensors
from .graphs import CycleDetected, MixedGraph, ancestors_of, topological_order

log = logging.getLogger(__name__)


class EmptyDataset(Exception):
    """Training requires at least one sample."""


@dataclass
class C2bmConfig:
    """Architecture and training settings for one model instance.

    ``graph`` must already be pruned to the task node and its ancestors (see
    prune_to_ancestors); ``cardinalities`` and concept columns align with its
    node indices.
    """

    graph: MixedGraph
    cardinalities: tuple
    task: int
    feature_dim: int
    embedding_dim: int = 32
    encoder_hidden: tuple = (64,)
    hyper_hidden: tuple = (64,)
    alpha: float = 0.8
    train_intervention_prob: float = 0.25
    lr: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 500
    patience: int = 30
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0 <= self.task < self.graph.node_count:
            raise ValueError("task must be a graph node")
        if self.graph.undirected:
            raise CycleDetected("model graph must be fully directed")
        if not self.graph.is_dag():
            raise CycleDetected("model graph must be acyclic")
        if len(self.cardinalities) != self.graph.node_count:
            raise ValueError("one cardinality per graph node required")

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in (
            "task", "feature_dim", "embedding_dim", "alpha",
            "train_intervention_prob", "lr", "batch_size", "max_epochs",
            "patience", "seed")}
        d["cardinalities"] = list(self.cardinalities)
        d["encoder_hidden"] = list(self.encoder_hidden)
        d["hyper_hidden"] = list(self.hyper_hidden)
        d["graph"] = self.graph.to_json()
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "C2bmConfig":
        d = json.loads(text)
        d["graph"] = MixedGraph.from_json(d["graph"])
        d["cardinalities"] = tuple(d["cardinalities"])
        d["encoder_hidden"] = tuple(d["encoder_hidden"])
        d["hyper_hidden"] = tuple(d["hyper_hidden"])
        return cls(**d)


def prune_to_ancestors(graph: MixedGraph, task: int) -> tuple[MixedGraph, list[int]]:
    """Induced subgraph on the task and its ancestors.

    Returns the subgraph and the kept original indices (ascending).  Nodes
    outside the task's ancestry cannot influence the task prediction and are
    dropped with a log message.
    """
    keep = sorted(ancestors_of(graph, task) | {task})
    dropped = [graph.names[v] for v in range(graph.node_count) if v not in keep]
    if dropped:
        log.warning("dropping non-ancestor concepts: %s", ", ".join(dropped))
    remap = {old: new for new, old in enumerate(keep)}
    directed = [(remap[a], remap[b]) for a, b in graph.directed
                if a in remap and b in remap]
    names = tuple(graph.names[v] for v in keep)
    return MixedGraph(len(keep), directed=directed, names=names), keep


def _expand_clamps(interventions, node_count, batch):
    """Normalize clamp specs to per-node int arrays; -1 means unclamped."""
    out = {}
    for node, value in (interventions or {}).items():
        arr = np.asarray(value)
        if arr.ndim == 0:
            arr = np.full(batch, int(arr))
        if arr.shape != (batch,):
            raise ShapeMismatch(f"clamp for node {node} has shape {arr.shape}")
        out[int(node)] = arr.astype(np.int64)
    return out


class C2bmModel:
    """Trained causal bottleneck: encoders, root heads, and hypernetworks."""

    def __init__(self, config: C2bmConfig):
        self.config = config
        g = config.graph
        cards = config.cardinalities
        self.order = topological_order(g)
        seed = config.seed
        self.encoders: list[Mlp] = []
        self.root_heads: dict[int, Mlp] = {}
        self.hypernets: dict[int, Mlp] = {}
        for v in range(g.node_count):
            self.encoders.append(Mlp(
                [config.feature_dim, *config.encoder_hidden, config.embedding_dim],
                seed=seed + 3 * v))
            parents = g.parents(v)
            if parents:
                out_width = sum(cards[v] * cards[p] for p in parents)
                self.hypernets[v] = Mlp(
                    [config.embedding_dim, *config.hyper_hidden, out_width],
                    seed=seed + 3 * v + 1)
            else:
                self.root_heads[v] = Mlp(
                    [config.embedding_dim, cards[v]], seed=seed + 3 * v + 2)

    def parameters(self) -> list[Tensor]:
        out = []
        for e in self.encoders:
            out.extend(e.parameters())
        for v in sorted(self.root_heads):
            out.extend(self.root_heads[v].parameters())
        for v in sorted(self.hypernets):
            out.extend(self.hypernets[v].parameters())
        return out

    # ----- forward pieces -------------------------------------------------

    def encode_exogenous(self, x: Tensor) -> list[Tensor]:
        """Per-node latent embeddings U_i = g_i(x)."""
        return [enc(x) for enc in self.encoders]

    def emit_weights(self, embeddings: list[Tensor]) -> dict[int, dict[int, Tensor]]:
        """Per-sample structural weight matrices, one card(i) x card(j) block
        per edge j -> i, emitted by node i's hypernetwork."""
        g = self.config.graph
        cards = self.config.cardinalities
        weights: dict[int, dict[int, Tensor]] = {}
        for v, net in self.hypernets.items():
            flat = net(embeddings[v])
            batch = flat.data.shape[0]
            blocks = {}
            offset = 0
            for p in g.parents(v):
                size = cards[v] * cards[p]
                block = flat.slice_last(offset, offset + size)
                blocks[p] = block.reshape((batch, cards[v], cards[p]))
                offset += size
            weights[v] = blocks
        return weights

    def propagate(self, embeddings, weights, interventions=None) -> dict[int, Tensor]:
        """Per-node probability vectors in topological order.

        ``interventions`` maps node index to either a class index (clamping
        the whole batch) or a per-sample int array where -1 leaves that
        sample unclamped.  Clamped samples output exact one-hots.
        """
        g = self.config.graph
        cards = self.config.cardinalities
        batch = embeddings[0].data.shape[0]
        clamps = _expand_clamps(interventions, g.node_count, batch)
        probs: dict[int, Tensor] = {}
        for v in self.order:
            parents = g.parents(v)
            if not parents:
                p = self.root_heads[v](embeddings[v]).softmax()
            else:
                logits = None
                for j in parents:
                    term = weights[v][j].bmm_vec(probs[j])
                    logits = term if logits is None else logits + term
                p = logits.softmax()
            if v in clamps:
                idx = clamps[v]
                mask = (idx >= 0).astype(p.data.dtype)[:, None]
                onehot = np.zeros((batch, cards[v]), dtype=p.data.dtype)
                rows = np.nonzero(idx >= 0)[0]
                onehot[rows, idx[rows]] = 1.0
                p = p * Tensor(1.0 - mask) + Tensor(onehot)
            probs[v] = p
        return probs

    def forward(self, x: Tensor, interventions=None) -> dict[int, Tensor]:
        emb = self.encode_exogenous(x)
        return self.propagate(emb, self.emit_weights(emb), interventions)

    def loss(self, x: Tensor, concepts: np.ndarray, interventions=None) -> Tensor:
        """(1 - alpha) * task cross-entropy + alpha * sum of concept
        cross-entropies, each averaged over the batch."""
        if x.data.shape[0] == 0:
            raise EmptyDataset("empty batch")
        cfg = self.config
        probs = self.forward(x, interventions)
        task_ce = cross_entropy(probs[cfg.task], concepts[:, cfg.task])
        concept_ce = None
        for v in range(cfg.graph.node_count):
            if v == cfg.task:
                continue
            ce = cross_entropy(probs[v], concepts[:, v])
            concept_ce = ce if concept_ce is None else concept_ce + ce
        total = task_ce * (1.0 - cfg.alpha)
        if concept_ce is not None:
            total = total + concept_ce * cfg.alpha
        return total

    def predict(self, x: np.ndarray, interventions=None) -> dict[int, np.ndarray]:
        probs = self.forward(Tensor(np.asarray(x)), interventions)
        return {v: p.data for v, p in probs.items()}

    # ----- persistence ----------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        named = {}
        def put(tag, mlp):
            for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
                named[f"{tag}.w{k}"] = w.data
                named[f"{tag}.b{k}"] = b.data
        for v, enc in enumerate(self.encoders):
            put(f"enc{v}", enc)
        for v, head in self.root_heads.items():
            put(f"root{v}", head)
        for v, net in self.hypernets.items():
            put(f"hyper{v}", net)
        return named

    def load_state(self, named: dict[str, np.ndarray]) -> None:
        def take(tag, mlp):
            for k in range(len(mlp.weights)):
                mlp.weights[k].data = named[f"{tag}.w{k}"].copy()
                mlp.biases[k].data = named[f"{tag}.b{k}"].copy()
        for v, enc in enumerate(self.encoders):
            take(f"enc{v}", enc)
        for v, head in self.root_heads.items():
            take(f"root{v}", head)
        for v, net in self.hypernets.items():
            take(f"hyper{v}", net)

    def save(self) -> bytes:
        named = self.state_tensors()
        cfg = np.frombuffer(self.config.to_json().encode(), dtype=np.uint8)
        named["config_json"] = cfg.astype(np.float32)
        named["model_kind"] = np.array([0.0], dtype=np.float32)
        return save_tensors(named)

    @classmethod
    def load(cls, blob: bytes) -> "C2bmModel":
        named = load_tensors(blob)
        text = bytes(named.pop("config_json").astype(np.uint8)).decode()
        named.pop("model_kind", None)
        model = cls(C2bmConfig.from_json(text))
        model.load_state(named)
        return model


class FlatCbm:
    """Baseline bottleneck: concept heads from features, task decoder over
    concatenated concept probability vectors."""

    def __init__(self, config: C2bmConfig, decoder: str = "linear"):
        if decoder not in ("linear", "mlp"):
            raise ValueError(f"unknown decoder kind {decoder!r}")
        self.config = config
        self.decoder_kind = decoder
        cards = config.cardinalities
        self.concept_nodes = [v for v in range(config.graph.node_count)
                              if v != config.task]
        seed = config.seed
        self.concept_heads: dict[int, Mlp] = {
            v: Mlp([config.feature_dim, *config.encoder_hidden, cards[v]],
                   final="softmax", seed=seed + 3 * v)
            for v in self.concept_nodes
        }
        bottleneck = sum(cards[v] for v in self.concept_nodes)
        if decoder == "linear":
            widths = [bottleneck, cards[config.task]]
        else:
            widths = [bottleneck, *config.encoder_hidden, cards[config.task]]
        self.decoder = Mlp(widths, final="softmax", seed=seed + 1)

    def parameters(self) -> list[Tensor]:
        out = []
        for v in self.concept_nodes:
            out.extend(self.concept_heads[v].parameters())
        out.extend(self.decoder.parameters())
        return out

    def forward(self, x: Tensor, interventions=None) -> dict[int, Tensor]:
        cfg = self.config
        batch = x.data.shape[0]
        clamps = _expand_clamps(interventions, cfg.graph.node_count, batch)
        probs: dict[int, Tensor] = {}
        parts = []
        for v in self.concept_nodes:
            p = self.concept_heads[v](x)
            if v in clamps:
                idx = clamps[v]
                mask = (idx >= 0).astype(p.data.dtype)[:, None]
                onehot = np.zeros((batch, cfg.cardinalities[v]), dtype=p.data.dtype)
                rows = np.nonzero(idx >= 0)[0]
                onehot[rows, idx[rows]] = 1.0
                p = p * Tensor(1.0 - mask) + Tensor(onehot)
            probs[v] = p
            parts.append(p)
        bottleneck = _concat_last(parts)
        probs[cfg.task] = self.decoder(bottleneck)
        if cfg.task in clamps:
            idx = clamps[cfg.task]
            p = probs[cfg.task]
            mask = (idx >= 0).astype(p.data.dtype)[:, None]
            onehot = np.zeros((batch, cfg.cardinalities[cfg.task]), dtype=p.data.dtype)
            rows = np.nonzero(idx >= 0)[0]
            onehot[rows, idx[rows]] = 1.0
            probs[cfg.task] = p * Tensor(1.0 - mask) + Tensor(onehot)
        return probs

    loss = C2bmModel.loss
    predict = C2bmModel.predict

    def state_tensors(self) -> dict[str, np.ndarray]:
        named = {}
        def put(tag, mlp):
            for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
                named[f"{tag}.w{k}"] = w.data
                named[f"{tag}.b{k}"] = b.data
        for v in self.concept_nodes:
            put(f"head{v}", self.concept_heads[v])
        put("decoder", self.decoder)
        return named

    def load_state(self, named: dict[str, np.ndarray]) -> None:
        def take(tag, mlp):
            for k in range(len(mlp.weights)):
                mlp.weights[k].data = named[f"{tag}.w{k}"].copy()
                mlp.biases[k].data = named[f"{tag}.b{k}"].copy()
        for v in self.concept_nodes:
            take(f"head{v}", self.concept_heads[v])
        take("decoder", self.decoder)

    def save(self) -> bytes:
        named = self.state_tensors()
        cfg = np.frombuffer(self.config.to_json().encode(), dtype=np.uint8)
        named["config_json"] = cfg.astype(np.float32)
        named["model_kind"] = np.array(
            [1.0 if self.decoder_kind == "linear" else 2.0], dtype=np.float32)
        return save_tensors(named)

    @classmethod
    def load(cls, blob: bytes) -> "FlatCbm":
        named = load_tensors(blob)
        text = bytes(named.pop("config_json").astype(np.uint8)).decode()
        kind = "linear" if named.pop("model_kind")[0] == 1.0 else "mlp"
        model = cls(C2bmConfig.from_json(text), decoder=kind)
        model.load_state(named)
        return model


def load_model(blob: bytes):
    """Load either model family from a checkpoint blob."""
    named = load_tensors(blob)
    kind = named.get("model_kind", np.array([0.0]))[0]
    return C2bmModel.load(blob) if kind == 0.0 else FlatCbm.load(blob)


def _concat_last(tensors: list[Tensor]) -> Tensor:
    """Concatenate along the last axis, keeping gradients flowing back."""
    datas = [t.data for t in tensors]
    out = Tensor(np.concatenate(datas, axis=-1))
    out._parents = tuple(tensors)

    widths = [d.shape[-1] for d in datas]
    def backward(grad):
        pairs = []
        offset = 0
        for t, w in zip(tensors, widths):
            pairs.append((t, grad[..., offset:offset + w]))
            offset += w
        return pairs
    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Training


def _shuffled_batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _sample_interventions(model, concepts, rng):
    """Bernoulli clamps to ground truth for every non-task node."""
    cfg = model.config
    prob = cfg.train_intervention_prob
    if prob <= 0:
        return None
    batch = concepts.shape[0]
    clamps = {}
    for v in range(cfg.graph.node_count):
        if v == cfg.task:
            continue
        mask = rng.random(batch) < prob
        if mask.any():
            values = np.where(mask, concepts[:, v], -1)
            clamps[v] = values
    return clamps or None


def _fit(model, x_train, c_train, x_val, c_val, use_interventions):
    cfg = model.config
    if len(x_train) == 0:
        raise EmptyDataset("no training samples")
    rng = np.random.Generator(np.random.PCG64(cfg.seed + 1_000_003))
    opt = AdamState(model.parameters(), lr=cfg.lr)
    xv = Tensor(np.asarray(x_val))
    best_loss, best_state, stale = np.inf, None, 0
    history = []
    for epoch in range(cfg.max_epochs):
        for idx in _shuffled_batches(len(x_train), cfg.batch_size, rng):
            xb = Tensor(np.asarray(x_train[idx]))
            cb = c_train[idx]
            clamps = _sample_interventions(model, cb, rng) if use_interventions else None
            opt.zero_grad()
            loss = model.loss(xb, cb, clamps)
            loss.backward()
            opt.step()
        val_loss = float(model.loss(xv, c_val).data)
        history.append(val_loss)
        if val_loss < best_loss - 1e-9:
            best_loss, stale = val_loss, 0
            best_state = {k: v.copy() for k, v in model.state_tensors().items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_state is not None:
        model.load_state(best_state)
    return history


def train(config: C2bmConfig, x_train, c_train, x_val, c_val):
    """Train a causal bottleneck model; returns (model, val-loss history)."""
    model = C2bmModel(config)
    history = _fit(model, x_train, np.asarray(c_train),
                   x_val, np.asarray(c_val), use_interventions=True)
    return model, history


def train_flat_cbm(config: C2bmConfig, x_train, c_train, x_val, c_val,
                   decoder: str = "linear"):
    """Train the flat-bottleneck baseline; returns (model, history)."""
    model = FlatCbm(config, decoder=decoder)
    history = _fit(model, x_train, np.asarray(c_train),
                   x_val, np.asarray(c_val), use_interventions=True)
    return model, history


# ---------------------------------------------------------------------------
# Explanation


def explain(model: C2bmModel, x: np.ndarray, interventions=None) -> dict:
    """Edge weights and node probabilities for a single input row.

    For an edge between binary nodes the scalar summary is
    W[1, 1] - W[1, 0]: how much an active parent pushes the child towards
    active, relative to an inactive parent.  Multi-class edges report the
    full matrix.
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    cfg = model.config
    clamps = _expand_clamps(interventions, cfg.graph.node_count, x.shape[0])
    emb = model.encode_exogenous(Tensor(x))
    weights = model.emit_weights(emb)
    probs = model.propagate(emb, weights, interventions)
    nodes = []
    for v in range(cfg.graph.node_count):
        nodes.append({
            "name": cfg.graph.names[v],
            "probabilities": [float(p) for p in probs[v].data[0]],
            "clamped": bool(v in clamps and clamps[v][0] >= 0),
        })
    edges = []
    for (a, b) in sorted(cfg.graph.directed):
        w = weights[b][a].data[0]
        entry = {"parent": cfg.graph.names[a], "child": cfg.graph.names[b]}
        if w.shape == (2, 2):
            entry["weight"] = float(w[1, 1] - w[1, 0])
        else:
            entry["matrix"] = [[float(c) for c in row] for row in w]
        edges.append(entry)
    return {"nodes": nodes, "edges": edges}
