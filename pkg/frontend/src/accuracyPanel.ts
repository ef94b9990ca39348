import { formatProb } from "./format";
import type { HistoryEntry } from "./session";

const WIDTH = 320;
const HEIGHT = 120;
const PAD = 24;

/**
 * Session chart: the predicted task probability of the true class (or the
 * leading class) as clamps accumulate. Values come verbatim from service
 * responses recorded in the session history.
 */
export function renderAccuracyPanel(history: readonly HistoryEntry[]): string {
  if (history.length === 0) {
    return `<div class="accuracy-panel empty">No interventions yet</div>`;
  }
  const values = history.map((h) => Math.max(...h.taskProb));
  const step =
    history.length > 1 ? (WIDTH - 2 * PAD) / (history.length - 1) : 0;
  const points = values
    .map((v, i) => `${PAD + i * step},${HEIGHT - PAD - v * (HEIGHT - 2 * PAD)}`)
    .join(" ");
  const labels = history
    .map(
      (h, i) =>
        `<text x="${PAD + i * step}" y="${HEIGHT - 6}" class="tick">` +
        `${h.clampCount}</text>`,
    )
    .join("");
  const latest = values[values.length - 1];
  return (
    `<div class="accuracy-panel">` +
    `<div class="latest">task confidence <b data-role="latest">${formatProb(latest)}</b></div>` +
    `<svg width="${WIDTH}" height="${HEIGHT}">` +
    `<polyline fill="none" points="${points}"></polyline>` +
    labels +
    `</svg>` +
    `</div>`
  );
}
