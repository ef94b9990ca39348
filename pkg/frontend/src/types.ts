export interface GraphNode {
  name: string;
  depth: number;
  states: string[];
}

export interface GraphEdge {
  parent: string;
  child: string;
}

export interface GraphPayload {
  task: string;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface SampleRow {
  index: number;
  concepts: Record<string, string>;
  predictions: Record<string, string>;
}

export interface SamplesPayload {
  split: string;
  offset: number;
  total: number;
  samples: SampleRow[];
}

export interface PredictPayload {
  probabilities: Record<string, number[]>;
}

export interface IntervenePayload {
  sample_index: number;
  clamps: Record<string, string>;
  baseline: Record<string, number[]>;
  probabilities: Record<string, number[]>;
}

export interface ExplainNode {
  name: string;
  probabilities: number[];
  clamped: boolean;
}

export interface ExplainEdge {
  parent: string;
  child: string;
  weight: number | number[][];
}

export interface ExplainPayload {
  nodes: ExplainNode[];
  edges: ExplainEdge[];
}

export interface CurvePoint {
  level: number;
  task_accuracy: number;
  mean_label_accuracy: number;
}

export interface MetricsPayload {
  node_accuracy: Record<string, number>;
  task_accuracy: number;
  mean_label_accuracy: number;
  curve: CurvePoint[];
  cace: Record<string, number>;
}

/** A node name mapped to the state index it is clamped to. */
export type ClampMap = Map<string, number>;
