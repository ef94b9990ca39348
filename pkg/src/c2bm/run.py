"""Pipeline orchestration over a run directory.

A run directory holds every artifact of one experiment: the sampled dataset,
the discovered and refined graphs, the trained checkpoint, and evaluation
reports.  Each stage reads its inputs from the directory, writes its outputs
atomically (temp file + rename), and is skipped when its outputs already
exist unless forced, so partial runs resume from the last finished stage.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from .bayesnet import (
    BUNDLED_NETWORKS,
    ancestral_sample,
    load_bundled,
    samples_from_csv,
    samples_to_csv,
    split_dataset,
)
from .discovery import BdeuScorer, ges_search
from .featurizer import featurize, fit_autoencoder, load_spec, save_spec
from .graphs import MixedGraph, depth_levels
from .interventions import (
    evaluate_with_interventions,
    fairness_network,
    level_policy,
)
from .model import C2bmConfig, load_model, prune_to_ancestors, train
from .orientation import OracleClient, refine_cpdag, stub_for_dag

log = logging.getLogger(__name__)

DEFAULT_LATENT_DIMS = {"asia": 32, "sachs": 32, "insurance": 32,
                       "alarm": 64, "hailfinder": 128, "fairness": 32}
DEFAULT_TASKS = {"asia": "dysp", "sachs": "Akt", "insurance": "PropCost",
                 "alarm": "BP", "hailfinder": "R5Fcst",
                 "fairness": "should_be_hired"}


class ConfigError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


DEFAULT_CONFIG = {
    "dataset": {
        "network": "asia",
        "n": 10_000,
        "seed": 0,
        "splits": [0.7, 0.1, 0.2],
        "featurizer": {
            "latent_dim": None,          # per-network default when null
            "lr": 1e-3,
            "epochs": 200,
            "patience": 20,
            "noise_fraction": 0.5,
            "latent_scale": 0.19,
        },
    },
    "discovery": {
        "ess": 1.0,
        "max_parents": 6,
        "max_t": 3,
    },
    "oracle": {
        "kind": "fixture-stub",
        "endpoint": "",
        "api_key_env": "",
        "model": "",
        "votes": 10,
        "prompt_path": "",
        "context_dir": "",
        "fixture_path": "",          # stub table; empty -> true-graph stub
    },
    "model": {
        "task": None,                # per-network default when null
        "embedding_dim": 32,
        "encoder_hidden": [64],
        "hyper_hidden": [64],
        "alpha": 0.8,
        "train_intervention_prob": 0.25,
        "lr": 1e-3,
        "batch_size": 512,
        "max_epochs": 500,
        "patience": 30,
        "seed": 0,
    },
    "eval": {
        "policy": "levels",
        "fraction": 1.0,
        "seeds": 5,
    },
}


def _merge_defaults(config: dict, defaults: dict) -> dict:
    out = {}
    for key, default in defaults.items():
        value = config.get(key, default)
        if isinstance(default, dict) and isinstance(value, dict):
            value = _merge_defaults(value, default)
        out[key] = value
    unknown = set(config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return out


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    cfg = _merge_defaults(raw, DEFAULT_CONFIG)
    _validate_config(cfg)
    return cfg


def default_config() -> dict:
    return json.loads(json.dumps(DEFAULT_CONFIG))


def _validate_config(cfg: dict) -> None:
    network = cfg["dataset"]["network"]
    if network not in (*BUNDLED_NETWORKS, "fairness"):
        raise ConfigError(f"unknown network {network!r}")
    if cfg["oracle"]["kind"] == "http-llm" and not cfg["oracle"]["endpoint"]:
        raise ConfigError("oracle.kind is http-llm but oracle.endpoint is empty")
    if cfg["oracle"]["kind"] not in ("http-llm", "fixture-stub"):
        raise ConfigError(f"unknown oracle kind {cfg['oracle']['kind']!r}")
    fixture = cfg["oracle"]["fixture_path"]
    if fixture and not os.path.exists(fixture):
        raise ConfigError(f"oracle fixture not found: {fixture}")


def _load_network(name: str):
    return fairness_network() if name == "fairness" else load_bundled(name)


class RunDirectory:
    """Path layout and atomic persistence for one pipeline run."""

    def __init__(self, path):
        self.path = Path(path)

    def file(self, *parts) -> Path:
        return self.path.joinpath(*parts)

    def write_text(self, relpath: str, text: str) -> None:
        self._write_bytes(relpath, text.encode("utf-8"))

    def write_bytes(self, relpath: str, blob: bytes) -> None:
        self._write_bytes(relpath, blob)

    def _write_bytes(self, relpath: str, blob: bytes) -> None:
        target = self.file(relpath)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def read_text(self, relpath: str) -> str:
        return self.file(relpath).read_text(encoding="utf-8")

    def read_bytes(self, relpath: str) -> bytes:
        return self.file(relpath).read_bytes()

    def has(self, *relpaths: str) -> bool:
        return all(self.file(p).exists() for p in relpaths)


# ---------------------------------------------------------------------------
# Stages


def _features_to_csv(x: np.ndarray) -> str:
    header = ",".join(f"f{i}" for i in range(x.shape[1]))
    rows = "\n".join(",".join(f"{v:.8g}" for v in row) for row in x)
    return header + "\n" + rows + "\n"


def _features_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.strip().split("\n") if ln][1:]
    return np.array([[float(v) for v in ln.split(",")] for ln in lines],
                    dtype=np.float32)


def stage_generate(run: RunDirectory, cfg: dict, force: bool = False) -> bool:
    outputs = ("dataset/concepts.csv", "dataset/features.csv",
               "dataset/splits.json", "dataset/featurizer.bin",
               "graphs/true.json")
    if run.has(*outputs) and not force:
        return False
    ds = cfg["dataset"]
    net = _load_network(ds["network"])
    samples = ancestral_sample(net, ds["n"], seed=ds["seed"])
    train_idx, val_idx, test_idx = split_dataset(
        samples, tuple(ds["splits"]), seed=ds["seed"])

    fz = ds["featurizer"]
    latent = fz["latent_dim"] or DEFAULT_LATENT_DIMS[ds["network"]]
    spec = fit_autoencoder(
        samples[train_idx], net.cardinalities, latent, seed=ds["seed"],
        lr=fz["lr"], epochs=fz["epochs"], patience=fz["patience"],
        noise_fraction=fz["noise_fraction"], latent_scale=fz["latent_scale"])
    x = np.zeros((len(samples), latent), dtype=np.float32)
    for offset, idx in enumerate((train_idx, val_idx, test_idx)):
        x[idx] = featurize(spec, samples[idx], seed=ds["seed"] * 10 + offset)

    run.write_text("dataset/concepts.csv", samples_to_csv(net, samples))
    run.write_text("dataset/features.csv", _features_to_csv(x))
    run.write_text("dataset/splits.json", json.dumps({
        "train": train_idx.tolist(), "val": val_idx.tolist(),
        "test": test_idx.tolist()}))
    run.write_bytes("dataset/featurizer.bin", save_spec(spec))
    run.write_text("graphs/true.json", net.graph.to_json())
    return True


def _load_dataset(run: RunDirectory):
    names, concepts = samples_from_csv(run.read_text("dataset/concepts.csv"))
    x = _features_from_csv(run.read_text("dataset/features.csv"))
    splits = json.loads(run.read_text("dataset/splits.json"))
    return names, concepts, x, {k: np.asarray(v) for k, v in splits.items()}


def _scorer(run: RunDirectory, cfg: dict):
    names, concepts, _, splits = _load_dataset(run)
    net = _load_network(cfg["dataset"]["network"])
    return BdeuScorer(concepts[splits["train"]], net.cardinalities,
                      cfg["discovery"]["ess"]), net


def stage_discover(run: RunDirectory, cfg: dict, force: bool = False) -> bool:
    if run.has("graphs/cpdag.json") and not force:
        return False
    scorer, net = _scorer(run, cfg)
    cpdag = ges_search(scorer, max_parents=cfg["discovery"]["max_parents"],
                       max_t=cfg["discovery"]["max_t"], names=net.names)
    run.write_text("graphs/cpdag.json", cpdag.to_json())
    return True


def _oracle_client(cfg: dict, true_graph: MixedGraph) -> OracleClient:
    oc = cfg["oracle"]
    kwargs = {"votes_per_edge": oc["votes"]}
    if oc["prompt_path"]:
        kwargs["prompt_template"] = Path(oc["prompt_path"]).read_text()
    if oc["kind"] == "http-llm":
        return OracleClient(kind="http-llm", endpoint=oc["endpoint"],
                            api_key_env=oc["api_key_env"], model=oc["model"],
                            **kwargs)
    if oc["fixture_path"]:
        return OracleClient.from_fixture(oc["fixture_path"], **kwargs)
    return stub_for_dag(true_graph)


def _oracle_contexts(cfg: dict) -> dict:
    ctx_dir = cfg["oracle"]["context_dir"]
    contexts = {}
    if ctx_dir and os.path.isdir(ctx_dir):
        for entry in sorted(os.listdir(ctx_dir)):
            if entry.endswith(".txt"):
                key = entry[:-4].replace("__", "|")
                contexts[key] = Path(ctx_dir, entry).read_text()
    return contexts


def stage_refine(run: RunDirectory, cfg: dict, force: bool = False) -> bool:
    if run.has("graphs/refined.json") and not force:
        return False
    cpdag = MixedGraph.from_json(run.read_text("graphs/cpdag.json"))
    true_graph = MixedGraph.from_json(run.read_text("graphs/true.json"))
    scorer, _ = _scorer(run, cfg)
    client = _oracle_client(cfg, true_graph)
    refined = refine_cpdag(cpdag, client, contexts=_oracle_contexts(cfg),
                           scorer=scorer)
    run.write_text("graphs/refined.json", refined.to_json())
    return True


def stage_train(run: RunDirectory, cfg: dict, force: bool = False) -> bool:
    if run.has("model.ckpt") and not force:
        return False
    names, concepts, x, splits = _load_dataset(run)
    net = _load_network(cfg["dataset"]["network"])
    refined = MixedGraph.from_json(run.read_text("graphs/refined.json"))
    mc = cfg["model"]
    task_name = mc["task"] or DEFAULT_TASKS[cfg["dataset"]["network"]]
    if task_name not in refined.names:
        raise ConfigError(f"task {task_name!r} not a graph node")
    pruned, keep = prune_to_ancestors(refined, refined.index_of(task_name))
    cards = tuple(net.cardinalities[i] for i in keep)
    config = C2bmConfig(
        graph=pruned, cardinalities=cards, task=pruned.index_of(task_name),
        feature_dim=x.shape[1], embedding_dim=mc["embedding_dim"],
        encoder_hidden=tuple(mc["encoder_hidden"]),
        hyper_hidden=tuple(mc["hyper_hidden"]), alpha=mc["alpha"],
        train_intervention_prob=mc["train_intervention_prob"], lr=mc["lr"],
        batch_size=mc["batch_size"], max_epochs=mc["max_epochs"],
        patience=mc["patience"], seed=mc["seed"])
    c = concepts[:, keep]
    tr, va = splits["train"], splits["val"]
    model, history = train(config, x[tr], c[tr], x[va], c[va])
    run.write_bytes("model.ckpt", model.save())
    run.write_text("logs/train.json", json.dumps({"val_loss": history}))
    return True


def stage_evaluate(run: RunDirectory, cfg: dict, force: bool = False) -> bool:
    if run.has("reports/eval.json") and not force:
        return False
    names, concepts, x, splits = _load_dataset(run)
    model = load_model(run.read_bytes("model.ckpt"))
    g = model.config.graph
    cols = [names.index(n) for n in g.names]
    c = concepts[:, cols]
    te = splits["test"]

    ev = cfg["eval"]
    max_level = max(depth_levels(g).values())
    n_seeds = int(ev["seeds"])
    plans = []
    for level in range(max_level + 1):
        for seed in range(n_seeds):
            plans.append(level_policy(g, level, fraction=ev["fraction"],
                                      seed=seed, task=model.config.task))
    report = evaluate_with_interventions(model, x[te], c[te], plans=plans)

    # average duplicate-seed points into one entry per level
    by_level = {}
    for point in report.curve:
        by_level.setdefault(point["level"], []).append(point)
    report.curve = [{
        "level": level,
        "task_accuracy": float(np.mean([p["task_accuracy"] for p in points])),
        "mean_label_accuracy": float(np.mean(
            [p["mean_label_accuracy"] for p in points])),
    } for level, points in sorted(by_level.items())]
    run.write_text("reports/eval.json", report.to_json())
    return True


STAGES = (
    ("generate", stage_generate),
    ("discover", stage_discover),
    ("refine", stage_refine),
    ("train", stage_train),
    ("evaluate", stage_evaluate),
)


def run_pipeline(run: RunDirectory, cfg: dict, force: bool = False) -> list[str]:
    """Run every stage in order; returns the names of stages executed."""
    executed = []
    for name, stage in STAGES:
        try:
            if stage(run, cfg, force=force):
                executed.append(name)
                log.info("stage %s: done", name)
            else:
                log.info("stage %s: outputs exist, skipped", name)
        except (ConfigError, StageError):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
    run.write_text("config.json", json.dumps(cfg, indent=2))
    return executed
