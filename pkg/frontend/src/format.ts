/** Display precision used everywhere a probability is rendered. */
export function formatProb(p: number): string {
  return `${(100 * p).toFixed(1)}%`;
}

/** Scalar edge-weight summary for binary nodes (signed, two decimals). */
export function formatWeight(w: number): string {
  const s = w.toFixed(2);
  return w >= 0 ? `+${s}` : s;
}

/** Multi-class weight matrices render as a row-per-line tooltip string. */
export function formatWeightMatrix(m: number[][]): string {
  return m.map((row) => row.map((v) => v.toFixed(2)).join(" ")).join("\n");
}

export function formatAccuracy(a: number): string {
  return `${(100 * a).toFixed(1)}%`;
}
