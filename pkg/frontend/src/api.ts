import type {
  ClampMap,
  ExplainPayload,
  GraphPayload,
  IntervenePayload,
  MetricsPayload,
  PredictPayload,
  SamplesPayload,
} from "./types";

const BASE = "/api/v1";

async function getJson<T>(path: string): Promise<T> {
  const res = await fetch(`${BASE}${path}`);
  if (!res.ok) throw new Error(`GET ${path}: ${res.status}`);
  return res.json() as Promise<T>;
}

async function postJson<T>(path: string, body: unknown): Promise<T> {
  const res = await fetch(`${BASE}${path}`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!res.ok) throw new Error(`POST ${path}: ${res.status}`);
  return res.json() as Promise<T>;
}

function clampsToJson(clamps: ClampMap): Record<string, number> {
  return Object.fromEntries(clamps);
}

export function getGraph(): Promise<GraphPayload> {
  return getJson("/graph");
}

export function getSamples(
  split = "test",
  offset = 0,
  limit = 50,
): Promise<SamplesPayload> {
  return getJson(`/samples?split=${split}&offset=${offset}&limit=${limit}`);
}

export function predict(sampleIndex: number): Promise<PredictPayload> {
  return postJson("/predict", { sample_index: sampleIndex });
}

export function intervene(
  sampleIndex: number,
  clamps: ClampMap,
): Promise<IntervenePayload> {
  return postJson("/intervene", {
    sample_index: sampleIndex,
    clamps: clampsToJson(clamps),
  });
}

export function explain(
  sampleIndex: number,
  clamps: ClampMap,
): Promise<ExplainPayload> {
  const body: Record<string, unknown> = { sample_index: sampleIndex };
  if (clamps.size > 0) body.clamps = clampsToJson(clamps);
  return postJson("/explain", body);
}

export function getMetrics(): Promise<MetricsPayload> {
  return getJson("/metrics");
}
