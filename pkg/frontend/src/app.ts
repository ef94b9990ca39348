import { renderAccuracyPanel } from "./accuracyPanel";
import * as api from "./api";
import { renderGraph } from "./graphView";
import { Session } from "./session";
import type { ExplainPayload, GraphPayload, SampleRow } from "./types";

/**
 * Explorer controller. All numbers shown come from API responses; the UI
 * performs no model math of its own.
 */
export class App {
  graph!: GraphPayload;
  samples: SampleRow[] = [];
  session!: Session;
  private lastExplain: ExplainPayload | null = null;

  constructor(private readonly root: HTMLElement) {}

  async init(): Promise<void> {
    try {
      this.graph = await api.getGraph();
      this.session = new Session(this.graph.task);
      this.samples = (await api.getSamples("test", 0, 50)).samples;
    } catch (err) {
      this.showBanner(`Cannot reach the service: ${err}`);
      return;
    }
    this.renderShell();
    if (this.samples.length > 0) {
      await this.selectSample(this.samples[0].index);
    }
  }

  async selectSample(index: number): Promise<void> {
    this.session.selectSample(index);
    await this.refresh();
  }

  async toggleClamp(node: string, state: number | null): Promise<void> {
    const previous = this.session.clamps.get(node);
    if (state === null) {
      this.session.removeClamp(node);
    } else {
      this.session.setClamp(node, state);
    }
    try {
      await this.refresh();
      const taskProbs = this.lastExplain?.nodes.find(
        (n) => n.name === this.graph.task,
      );
      if (taskProbs) this.session.record(taskProbs.probabilities);
      this.renderPanel();
    } catch (err) {
      // revert the clamp and keep the previous view
      if (previous === undefined) {
        this.session.removeClamp(node);
      } else {
        this.session.setClamp(node, previous);
      }
      this.showBanner(`Intervention failed: ${err}`);
    }
  }

  private async refresh(): Promise<void> {
    const index = this.session.sampleIndex;
    if (index === null) return;
    const explain = await api.explain(index, this.session.clamps);
    this.lastExplain = explain;
    this.hideBanner();
    const row = this.samples.find((s) => s.index === index);
    const view = this.root.querySelector<HTMLElement>("#graph");
    if (view) {
      view.innerHTML = renderGraph(
        this.graph,
        explain,
        row?.concepts,
        this.session.clamps,
      );
      this.bindClampControls(view);
    }
  }

  private renderShell(): void {
    this.root.innerHTML = `
      <div id="banner" hidden></div>
      <div class="columns">
        <aside id="samples"><h2>Test samples</h2><ul></ul></aside>
        <main id="graph"></main>
        <aside id="panel"></aside>
      </div>`;
    const list = this.root.querySelector("#samples ul")!;
    for (const row of this.samples) {
      const item = document.createElement("li");
      const correct =
        row.concepts[this.graph.task] === row.predictions[this.graph.task];
      item.textContent = `#${row.index} ${correct ? "✓" : "✗"}`;
      item.dataset.index = String(row.index);
      item.addEventListener("click", () => void this.selectSample(row.index));
      list.appendChild(item);
    }
    this.renderPanel();
  }

  private renderPanel(): void {
    const panel = this.root.querySelector<HTMLElement>("#panel");
    if (panel) panel.innerHTML = renderAccuracyPanel(this.session.history);
  }

  private bindClampControls(view: HTMLElement): void {
    for (const select of view.querySelectorAll<HTMLSelectElement>("select.clamp")) {
      select.addEventListener("change", () => {
        const node = select.dataset.node!;
        const value = select.value === "" ? null : Number(select.value);
        void this.toggleClamp(node, value);
      });
    }
  }

  private showBanner(message: string): void {
    let banner = this.root.querySelector<HTMLElement>("#banner");
    if (!banner) {
      banner = document.createElement("div");
      banner.id = "banner";
      this.root.prepend(banner);
    }
    banner.textContent = message;
    banner.hidden = false;
  }

  private hideBanner(): void {
    const banner = this.root.querySelector<HTMLElement>("#banner");
    if (banner) banner.hidden = true;
  }
}
