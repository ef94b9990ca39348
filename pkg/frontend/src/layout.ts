import type { GraphPayload } from "./types";

export interface NodePosition {
  x: number;
  y: number;
  column: number;
  row: number;
}

export const CARD_WIDTH = 180;
export const CARD_HEIGHT = 96;
const COLUMN_GAP = 80;
const ROW_GAP = 24;

/**
 * Layered left-to-right layout: one column per depth level, nodes within a
 * column stacked in name order. Deterministic for a given graph payload.
 */
export function layoutGraph(graph: GraphPayload): Map<string, NodePosition> {
  const columns = new Map<number, string[]>();
  for (const node of graph.nodes) {
    const col = columns.get(node.depth) ?? [];
    col.push(node.name);
    columns.set(node.depth, col);
  }
  const positions = new Map<string, NodePosition>();
  for (const [depth, names] of columns) {
    names.sort();
    names.forEach((name, row) => {
      positions.set(name, {
        x: depth * (CARD_WIDTH + COLUMN_GAP),
        y: row * (CARD_HEIGHT + ROW_GAP),
        column: depth,
        row,
      });
    });
  }
  return positions;
}

export function canvasSize(
  positions: Map<string, NodePosition>,
): { width: number; height: number } {
  let width = 0;
  let height = 0;
  for (const p of positions.values()) {
    width = Math.max(width, p.x + CARD_WIDTH);
    height = Math.max(height, p.y + CARD_HEIGHT);
  }
  return { width, height };
}
