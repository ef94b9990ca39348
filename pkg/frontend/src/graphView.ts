import { formatProb, formatWeight, formatWeightMatrix } from "./format";
import {
  CARD_HEIGHT,
  CARD_WIDTH,
  canvasSize,
  layoutGraph,
  type NodePosition,
} from "./layout";
import type {
  ClampMap,
  ExplainEdge,
  ExplainPayload,
  GraphPayload,
} from "./types";

function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function probBars(states: string[], probabilities: number[]): string {
  return states
    .map((state, i) => {
      const p = probabilities[i];
      return (
        `<div class="bar-row">` +
        `<span class="state">${esc(state)}</span>` +
        `<span class="bar"><span class="fill" style="width:${100 * p}%"></span></span>` +
        `<span class="prob" data-state="${esc(state)}">${formatProb(p)}</span>` +
        `</div>`
      );
    })
    .join("");
}

function clampControl(
  name: string,
  states: string[],
  clamps: ClampMap,
  isTask: boolean,
): string {
  if (isTask) return "";
  const active = clamps.get(name);
  const options = [
    `<option value=""${active === undefined ? " selected" : ""}>free</option>`,
    ...states.map(
      (s, i) =>
        `<option value="${i}"${active === i ? " selected" : ""}>${esc(s)}</option>`,
    ),
  ];
  return `<select class="clamp" data-node="${esc(name)}">${options.join("")}</select>`;
}

/** One node card: title, ground-truth badge, probability bars, clamp toggle. */
export function renderNodeCard(
  graph: GraphPayload,
  explain: ExplainPayload,
  name: string,
  truth: string | undefined,
  clamps: ClampMap,
): string {
  const node = graph.nodes.find((n) => n.name === name);
  const probs = explain.nodes.find((n) => n.name === name);
  if (!node || !probs) throw new Error(`unknown node ${name}`);
  const isTask = name === graph.task;
  const classes = ["card"];
  if (probs.clamped) classes.push("clamped");
  if (isTask) classes.push("task");
  return (
    `<div class="${classes.join(" ")}" data-node="${esc(name)}">` +
    `<div class="title">${esc(name)}` +
    (truth !== undefined ? `<span class="truth">${esc(truth)}</span>` : "") +
    `</div>` +
    probBars(node.states, probs.probabilities) +
    clampControl(name, node.states, clamps, isTask) +
    `</div>`
  );
}

function edgeLabel(edge: ExplainEdge): string {
  if (typeof edge.weight === "number") return formatWeight(edge.weight);
  return "matrix";
}

function edgeTooltip(edge: ExplainEdge): string {
  if (typeof edge.weight === "number") return "";
  return ` title="${esc(formatWeightMatrix(edge.weight))}"`;
}

function renderEdge(
  edge: ExplainEdge,
  positions: Map<string, NodePosition>,
): string {
  const from = positions.get(edge.parent);
  const to = positions.get(edge.child);
  if (!from || !to) return "";
  const x1 = from.x + CARD_WIDTH;
  const y1 = from.y + CARD_HEIGHT / 2;
  const x2 = to.x;
  const y2 = to.y + CARD_HEIGHT / 2;
  const key = `${esc(edge.parent)}->${esc(edge.child)}`;
  return (
    `<g class="edge" data-edge="${key}"${edgeTooltip(edge)}>` +
    `<line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" marker-end="url(#arrow)"></line>` +
    `<text x="${(x1 + x2) / 2}" y="${(y1 + y2) / 2 - 4}" class="weight">` +
    `${edgeLabel(edge)}</text>` +
    `</g>`
  );
}

/** Full graph view: absolutely positioned node cards over an SVG edge layer. */
export function renderGraph(
  graph: GraphPayload,
  explain: ExplainPayload,
  truth: Record<string, string> | undefined,
  clamps: ClampMap,
): string {
  const positions = layoutGraph(graph);
  const { width, height } = canvasSize(positions);
  const edgeSvg =
    `<svg class="edges" width="${width}" height="${height}">` +
    `<defs><marker id="arrow" markerWidth="8" markerHeight="8" refX="8" refY="4" orient="auto">` +
    `<path d="M0,0 L8,4 L0,8 z"></path></marker></defs>` +
    explain.edges.map((e) => renderEdge(e, positions)).join("") +
    `</svg>`;
  const cards = graph.nodes
    .map((node) => {
      const pos = positions.get(node.name)!;
      const card = renderNodeCard(graph, explain, node.name, truth?.[node.name], clamps);
      return `<div class="slot" style="left:${pos.x}px;top:${pos.y}px">${card}</div>`;
    })
    .join("");
  return (
    `<div class="graph-view" style="width:${width}px;height:${height}px">` +
    edgeSvg +
    cards +
    `</div>`
  );
}
