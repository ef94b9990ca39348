import type { ClampMap } from "./types";

export interface HistoryEntry {
  clampCount: number;
  clamps: Record<string, number>;
  taskProb: number[];
}

/**
 * Client-side session state: the selected sample, the active clamp set, and
 * an append-only history of (clamps -> task probabilities) observations.
 */
export class Session {
  sampleIndex: number | null = null;
  readonly clamps: ClampMap = new Map();
  private readonly historyEntries: HistoryEntry[] = [];

  constructor(private readonly taskName: string) {}

  get history(): readonly HistoryEntry[] {
    return this.historyEntries;
  }

  /** Switching samples clears every active clamp. */
  selectSample(index: number): void {
    this.sampleIndex = index;
    this.clamps.clear();
  }

  setClamp(node: string, state: number): void {
    if (node === this.taskName) {
      throw new Error("the task node cannot be clamped");
    }
    this.clamps.set(node, state);
  }

  removeClamp(node: string): void {
    this.clamps.delete(node);
  }

  record(taskProb: number[]): void {
    this.historyEntries.push({
      clampCount: this.clamps.size,
      clamps: Object.fromEntries(this.clamps),
      taskProb: [...taskProb],
    });
  }
}
