/**
 * Deterministic in-memory stand-in for the /api/v1 service, faithful to the
 * backend's contract: per-node probability vectors, exact one-hot clamps,
 * propagation along the graph (so clamping a node only ever changes its
 * descendants), scalar weights on binary-binary edges and matrices
 * otherwise.
 */

import type {
  ExplainPayload,
  GraphPayload,
  MetricsPayload,
  SampleRow,
} from "../src/types";

export const FAKE_GRAPH: GraphPayload = {
  task: "dysp",
  nodes: [
    { name: "smoke", depth: 0, states: ["no", "yes"] },
    { name: "tub", depth: 0, states: ["none", "mild", "severe"] },
    { name: "bronc", depth: 1, states: ["no", "yes"] },
    { name: "either", depth: 1, states: ["no", "yes"] },
    { name: "dysp", depth: 2, states: ["no", "yes"] },
  ],
  edges: [
    { parent: "smoke", child: "bronc" },
    { parent: "tub", child: "either" },
    { parent: "bronc", child: "dysp" },
    { parent: "either", child: "dysp" },
  ],
};

const PARENTS: Record<string, string[]> = {
  smoke: [],
  tub: [],
  bronc: ["smoke"],
  either: ["tub"],
  dysp: ["bronc", "either"],
};

// fixed per-edge weight matrices, shape card(child) x card(parent)
const WEIGHTS: Record<string, number[][]> = {
  "smoke->bronc": [
    [1.1, -0.7],
    [-0.9, 1.3],
  ],
  "tub->either": [
    [1.4, 0.1, -1.2],
    [-1.0, 0.2, 1.5],
  ],
  "bronc->dysp": [
    [0.8, -0.6],
    [-0.7, 0.9],
  ],
  "either->dysp": [
    [0.6, -0.5],
    [-0.4, 0.8],
  ],
};

function card(name: string): number {
  return FAKE_GRAPH.nodes.find((n) => n.name === name)!.states.length;
}

function softmax(logits: number[]): number[] {
  const m = Math.max(...logits);
  const e = logits.map((v) => Math.exp(v - m));
  const z = e.reduce((a, b) => a + b, 0);
  return e.map((v) => v / z);
}

// deterministic pseudo-random logit in [-1, 1]
function logit(sample: number, node: string, state: number): number {
  let h = sample * 2654435761 + state * 40503;
  for (const ch of node) h = (h * 31 + ch.charCodeAt(0)) | 0;
  h = Math.imul(h ^ (h >>> 15), 2246822519);
  return ((h >>> 8) % 2001) / 1000 - 1;
}

export function fakePropagate(
  sample: number,
  clamps: Record<string, number>,
): Record<string, number[]> {
  const probs: Record<string, number[]> = {};
  for (const node of FAKE_GRAPH.nodes) {
    const name = node.name;
    let logits: number[];
    if (PARENTS[name].length === 0) {
      logits = node.states.map((_, s) => 2 * logit(sample, name, s));
    } else {
      logits = node.states.map(() => 0);
      for (const parent of PARENTS[name]) {
        const w = WEIGHTS[`${parent}->${name}`];
        const p = probs[parent];
        for (let i = 0; i < logits.length; i++) {
          for (let j = 0; j < p.length; j++) logits[i] += w[i][j] * p[j];
        }
      }
    }
    let p = softmax(logits);
    if (name in clamps) {
      p = node.states.map((_, s) => (s === clamps[name] ? 1 : 0));
    }
    probs[name] = p;
  }
  return probs;
}

function groundTruth(sample: number): Record<string, string> {
  const out: Record<string, string> = {};
  for (const node of FAKE_GRAPH.nodes) {
    out[node.name] = node.states[(sample + node.name.length) % node.states.length];
  }
  return out;
}

export function fakeExplain(
  sample: number,
  clamps: Record<string, number>,
): ExplainPayload {
  const probs = fakePropagate(sample, clamps);
  return {
    nodes: FAKE_GRAPH.nodes.map((n) => ({
      name: n.name,
      probabilities: probs[n.name],
      clamped: n.name in clamps,
    })),
    edges: FAKE_GRAPH.edges.map((e) => {
      const w = WEIGHTS[`${e.parent}->${e.child}`];
      const weight =
        card(e.parent) === 2 && card(e.child) === 2 ? w[1][1] - w[1][0] : w;
      return { parent: e.parent, child: e.child, weight };
    }),
  };
}

const METRICS: MetricsPayload = {
  node_accuracy: { smoke: 0.71, tub: 0.92, bronc: 0.74, either: 0.9, dysp: 0.72 },
  task_accuracy: 0.72,
  mean_label_accuracy: 0.798,
  curve: [
    { level: 0, task_accuracy: 0.75, mean_label_accuracy: 0.82 },
    { level: 1, task_accuracy: 0.84, mean_label_accuracy: 0.85 },
    { level: 2, task_accuracy: 0.86, mean_label_accuracy: 0.86 },
  ],
  cace: {},
};

function sampleRows(offset: number, limit: number): SampleRow[] {
  const rows: SampleRow[] = [];
  for (let i = offset; i < Math.min(offset + limit, 40); i++) {
    const probs = fakePropagate(i, {});
    const predictions: Record<string, string> = {};
    for (const node of FAKE_GRAPH.nodes) {
      const p = probs[node.name];
      predictions[node.name] = node.states[p.indexOf(Math.max(...p))];
    }
    rows.push({ index: i, concepts: groundTruth(i), predictions });
  }
  return rows;
}

function json(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { "Content-Type": "application/json" },
  });
}

/** Drop-in replacement for fetch, covering every /api/v1 route. */
export async function fakeFetch(
  input: RequestInfo | URL,
  init?: RequestInit,
): Promise<Response> {
  const url = new URL(String(input), "http://localhost");
  const path = url.pathname;
  const body = init?.body ? JSON.parse(String(init.body)) : {};
  if (path === "/api/v1/graph") return json(FAKE_GRAPH);
  if (path === "/api/v1/samples") {
    const offset = Number(url.searchParams.get("offset") ?? 0);
    const limit = Number(url.searchParams.get("limit") ?? 50);
    return json({
      split: url.searchParams.get("split") ?? "test",
      offset,
      total: 40,
      samples: sampleRows(offset, limit),
    });
  }
  if (path === "/api/v1/predict") {
    return json({ probabilities: fakePropagate(body.sample_index, {}) });
  }
  if (path === "/api/v1/intervene") {
    const clamps = body.clamps ?? {};
    return json({
      sample_index: body.sample_index,
      clamps,
      baseline: fakePropagate(body.sample_index, {}),
      probabilities: fakePropagate(body.sample_index, clamps),
    });
  }
  if (path === "/api/v1/explain") {
    return json(fakeExplain(body.sample_index, body.clamps ?? {}));
  }
  if (path === "/api/v1/metrics") return json(METRICS);
  return new Response("not found", { status: 404 });
}

/** Descendants of a node per the fake graph (for invariance checks). */
export function descendantsOf(name: string): Set<string> {
  const out = new Set<string>();
  const frontier = [name];
  while (frontier.length > 0) {
    const cur = frontier.pop()!;
    for (const e of FAKE_GRAPH.edges) {
      if (e.parent === cur && !out.has(e.child)) {
        out.add(e.child);
        frontier.push(e.child);
      }
    }
  }
  return out;
}
