"""HTTP API over a completed run directory.

Serves the trained model for prediction, intervention, and explanation, plus
the dataset's test samples and the stored evaluation report.  Responses never
include raw feature vectors: clients see concept labels, predicted
probabilities, and graph structure only.
"""

from __future__ import annotations

import json

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query

from .graphs import depth_levels
from .model import explain as explain_model
from .model import load_model


class CheckpointMissing(Exception):
    pass


class BindFailure(Exception):
    pass


class RunState:
    """Everything the API needs, loaded once from a run directory."""

    def __init__(self, run):
        from .run import ConfigError, _load_dataset, _load_network, load_config

        if not run.has("model.ckpt"):
            raise CheckpointMissing(f"no model.ckpt under {run.path}")
        if not run.has("config.json"):
            raise ConfigError(f"no config.json under {run.path}")
        self.run = run
        self.config = load_config(run.file("config.json"))
        self.model = load_model(run.read_bytes("model.ckpt"))
        names, concepts, x, splits = _load_dataset(run)
        self.features = x
        self.splits = splits
        g = self.model.config.graph
        self.concepts = concepts[:, [names.index(n) for n in g.names]]
        net = _load_network(self.config["dataset"]["network"])
        self.states = {name: net.states[net.names.index(name)]
                       for name in g.names}

    def graph_payload(self) -> dict:
        g = self.model.config.graph
        depths = depth_levels(g)
        return {
            "task": g.names[self.model.config.task],
            "nodes": [
                {"name": g.names[v], "depth": depths[v],
                 "states": list(self.states[g.names[v]])}
                for v in range(g.node_count)
            ],
            "edges": [{"parent": g.names[i], "child": g.names[j]}
                      for i, j in sorted(g.directed)],
        }

    def _row(self, sample_index: int) -> int:
        if not 0 <= sample_index < len(self.features):
            raise HTTPException(404, f"sample_index {sample_index} out of range")
        return sample_index

    def _clamps(self, clamps: dict | None) -> dict[int, int]:
        g = self.model.config.graph
        out = {}
        for name, category in (clamps or {}).items():
            if name not in g.names:
                raise HTTPException(422, f"unknown node {name!r}")
            states = self.states[name]
            if isinstance(category, str):
                if category not in states:
                    raise HTTPException(
                        422, f"unknown state {category!r} for node {name!r}")
                category = states.index(category)
            category = int(category)
            if not 0 <= category < len(states):
                raise HTTPException(
                    422, f"state index {category} out of range for {name!r}")
            out[g.index_of(name)] = category
        return out

    def probabilities(self, x: np.ndarray, clamps=None) -> dict:
        g = self.model.config.graph
        probs = self.model.predict(x, interventions=clamps)
        return {g.names[v]: [float(p) for p in probs[v][0]]
                for v in range(g.node_count)}


def create_app(run, ui_dir: str | None = None) -> FastAPI:
    state = RunState(run)
    app = FastAPI(title="c2bm explorer API")
    g = state.model.config.graph

    @app.get("/api/v1/graph")
    def graph():
        return state.graph_payload()

    @app.get("/api/v1/samples")
    def samples(split: str = Query("test"), offset: int = Query(0, ge=0),
                limit: int = Query(50, ge=1, le=500)):
        if split not in state.splits:
            raise HTTPException(422, f"unknown split {split!r}")
        rows = state.splits[split][offset:offset + limit]
        out = []
        for row in rows:
            row = int(row)
            probs = state.model.predict(state.features[row:row + 1])
            out.append({
                "index": row,
                "concepts": {
                    g.names[v]: state.states[g.names[v]][state.concepts[row, v]]
                    for v in range(g.node_count)},
                "predictions": {
                    g.names[v]: state.states[g.names[v]][int(np.argmax(probs[v][0]))]
                    for v in range(g.node_count)},
            })
        return {"split": split, "offset": offset,
                "total": len(state.splits[split]), "samples": out}

    @app.post("/api/v1/predict")
    def predict(payload: dict = Body(...)):
        if "raw_features" in payload:
            x = np.asarray(payload["raw_features"], dtype=np.float32)
            if x.ndim == 1:
                x = x[None, :]
            if x.shape != (1, state.model.config.feature_dim):
                raise HTTPException(
                    422, f"raw_features must have {state.model.config.feature_dim} values")
        elif "sample_index" in payload:
            row = state._row(int(payload["sample_index"]))
            x = state.features[row:row + 1]
        else:
            raise HTTPException(422, "need sample_index or raw_features")
        return {"probabilities": state.probabilities(x)}

    @app.post("/api/v1/intervene")
    def intervene(payload: dict = Body(...)):
        if "sample_index" not in payload:
            raise HTTPException(422, "need sample_index")
        row = state._row(int(payload["sample_index"]))
        clamps = state._clamps(payload.get("clamps"))
        x = state.features[row:row + 1]
        return {
            "sample_index": row,
            "clamps": {g.names[v]: state.states[g.names[v]][c]
                       for v, c in clamps.items()},
            "baseline": state.probabilities(x),
            "probabilities": state.probabilities(x, clamps),
        }

    @app.post("/api/v1/explain")
    def explain(payload: dict = Body(...)):
        if "sample_index" not in payload:
            raise HTTPException(422, "need sample_index")
        row = state._row(int(payload["sample_index"]))
        clamps = state._clamps(payload.get("clamps"))
        return explain_model(state.model, state.features[row:row + 1],
                             interventions=clamps or None)

    @app.get("/api/v1/metrics")
    def metrics():
        if not state.run.has("reports/eval.json"):
            raise HTTPException(404, "no evaluation report; run the evaluate stage")
        return json.loads(state.run.read_text("reports/eval.json"))

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(run, host: str = "127.0.0.1", port: int = 8000,
          ui_dir: str | None = None) -> None:
    import uvicorn

    app = create_app(run, ui_dir=ui_dir)
    config = uvicorn.Config(app, host=host, port=port, log_level="info")
    server = uvicorn.Server(config)
    try:
        server.run()
    except (OSError, SystemExit) as exc:
        raise BindFailure(f"cannot serve on {host}:{port}: {exc}") from exc
