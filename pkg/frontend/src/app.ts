// DOM wiring: render the state, route input events, poll the server.
// All decisions live in state.ts; this file only draws and dispatches.

import { ApiClient } from "./api.js";
import {
  canSubmit,
  initialState,
  pendingEntries,
  reduce,
  sparklinePoints,
  type UiEvent,
  type UiState,
} from "./state.js";
import type { LabelChoice } from "./types.js";

const POLL_MS = 2000;
const CHOICES: { key: string; value: LabelChoice; caption: string }[] = [
  { key: "m", value: "misinfo", caption: "misinfo (m)" },
  { key: "n", value: "not_misinfo", caption: "not misinfo (n)" },
  { key: "u", value: "uncertain", caption: "uncertain (u)" },
];

export class App {
  private state: UiState = initialState();
  private inFlight = false;

  constructor(
    private readonly client: ApiClient,
    private readonly root: HTMLElement,
    private readonly annotatorId: string = "annotator",
  ) {}

  dispatch(event: UiEvent): void {
    this.state = reduce(this.state, event);
    this.render();
  }

  async start(): Promise<void> {
    document.addEventListener("keydown", (e) => this.onKey(e));
    await this.refresh();
    setInterval(() => {
      if (!this.inFlight && (this.state.phase === "loading" || this.state.phase === "labeling")) {
        void this.refresh();
      }
    }, POLL_MS);
  }

  private async refresh(): Promise<void> {
    try {
      const status = await this.client.fetchStatus();
      this.dispatch({ kind: "status_loaded", status });
      if (status.status !== "complete") {
        const batch = await this.client.fetchBatch();
        this.dispatch({ kind: "batch_loaded", batch });
      }
    } catch (err) {
      this.dispatch({ kind: "network_error", message: String(err) });
    }
  }

  private onKey(event: KeyboardEvent): void {
    if (this.state.phase !== "labeling" || this.state.batch === null) return;
    const choice = CHOICES.find((c) => c.key === event.key);
    if (choice) {
      const item = this.state.batch.items[this.state.focusIndex];
      if (item) {
        this.dispatch({ kind: "select", tweetId: item.tweet_id, choice: choice.value });
        this.dispatch({ kind: "focus_move", delta: 1 });
      }
      return;
    }
    if (event.key === "ArrowDown" || event.key === "Tab") {
      event.preventDefault();
      this.dispatch({ kind: "focus_move", delta: 1 });
    } else if (event.key === "ArrowUp") {
      event.preventDefault();
      this.dispatch({ kind: "focus_move", delta: -1 });
    } else if (event.key === "Enter" && canSubmit(this.state)) {
      void this.submit();
    }
  }

  async submit(): Promise<void> {
    if (!canSubmit(this.state) || this.state.batch === null || this.inFlight) return;
    const revision = this.state.batch.session_revision;
    const entries = pendingEntries(this.state, this.annotatorId);
    this.inFlight = true;
    this.dispatch({ kind: "submit_started" });
    try {
      const outcome = await this.client.submitLabels(revision, entries);
      if (outcome.kind === "conflict") {
        this.dispatch({ kind: "submit_conflicted", message: outcome.message });
      } else if (outcome.kind === "complete") {
        const batch = await this.client.fetchBatch();
        this.dispatch({ kind: "batch_loaded", batch });
      } else {
        this.dispatch({ kind: "submit_succeeded", result: outcome.result });
      }
    } catch (err) {
      this.dispatch({ kind: "network_error", message: String(err) });
    } finally {
      this.inFlight = false;
      await this.refresh();
    }
  }

  // -- rendering ----------------------------------------------------------

  private render(): void {
    const s = this.state;
    const parts: string[] = [];
    parts.push(`<header><h1>annotation queue</h1>${this.renderProgress()}</header>`);
    if (s.banner) parts.push(`<div class="banner" role="alert">${escapeHtml(s.banner)}</div>`);
    if (s.summary) {
      const delta =
        s.summary.previousF1 === null
          ? ""
          : ` — F1 ${s.summary.previousF1.toFixed(3)} → ${s.summary.newF1.toFixed(3)}`;
      parts.push(
        `<div class="summary">accepted ${s.summary.accepted}, propagated ${s.summary.propagated}${delta}</div>`,
      );
    }
    if (s.phase === "complete") {
      parts.push(this.renderCompletion());
    } else if (s.phase === "loading" || s.batch === null) {
      parts.push(`<p class="muted">waiting for the next batch…</p>`);
    } else {
      parts.push(this.renderBatch());
    }
    parts.push(this.renderSparkline());
    this.root.innerHTML = parts.join("\n");
    this.bindHandlers();
  }

  private renderProgress(): string {
    const done = this.state.metricsHistory.length - 1;
    const total = this.state.nCycles;
    return `<span class="progress">cycle ${Math.max(done, 0)} / ${total}</span>`;
  }

  private renderBatch(): string {
    const s = this.state;
    const cards = s.batch!.items.map((item, index) => {
      const selected = s.selections[item.tweet_id];
      const rejected = s.rejected[item.tweet_id];
      const buttons = CHOICES.map(
        (c) =>
          `<button type="button" data-tweet="${item.tweet_id}" data-choice="${c.value}"
             class="choice${selected === c.value ? " picked" : ""}">${c.caption}</button>`,
      ).join("");
      return `<article class="card${index === s.focusIndex ? " focused" : ""}" data-index="${index}">
        <p class="text">${escapeHtml(item.text)}</p>
        <p class="meta">p(misinfo) ${item.proba.toFixed(3)} · entropy ${item.entropy.toFixed(3)}
          ${rejected ? `<span class="rejected">rejected: ${escapeHtml(rejected)}</span>` : ""}</p>
        <div class="choices">${buttons}</div>
      </article>`;
    });
    const disabled = canSubmit(s) ? "" : "disabled";
    return `${cards.join("\n")}
      <button id="submit" type="button" ${disabled}>submit batch (enter)</button>`;
  }

  private renderCompletion(): string {
    const m = this.state.finalMetrics;
    const rows = m
      ? `<tr><td>accuracy</td><td>${m.accuracy.toFixed(3)}</td></tr>
         <tr><td>recall</td><td>${m.recall.toFixed(3)}</td></tr>
         <tr><td>precision</td><td>${m.precision.toFixed(3)}</td></tr>
         <tr><td>F1</td><td>${m.f1.toFixed(3)}</td></tr>`
      : "";
    return `<div class="complete"><h2>session complete</h2>
      <table class="metrics"><tbody>${rows}</tbody></table></div>`;
  }

  private renderSparkline(): string {
    const values = this.state.metricsHistory.map((m) => m.f1);
    if (values.length === 0) return "";
    const points = sparklinePoints(values, 220, 48);
    const latest = values[values.length - 1]!;
    return `<figure class="sparkline"><figcaption>F1 by cycle (latest ${latest.toFixed(3)})</figcaption>
      <svg width="220" height="48" viewBox="0 0 220 48" role="img">
        <polyline fill="none" stroke="#1f77b4" stroke-width="2" points="${points}"/>
      </svg></figure>`;
  }

  private bindHandlers(): void {
    this.root.querySelectorAll<HTMLButtonElement>("button.choice").forEach((button) => {
      button.addEventListener("click", () => {
        this.dispatch({
          kind: "select",
          tweetId: button.dataset.tweet!,
          choice: button.dataset.choice as LabelChoice,
        });
      });
    });
    const submit = this.root.querySelector<HTMLButtonElement>("#submit");
    submit?.addEventListener("click", () => void this.submit());
    this.root.querySelectorAll<HTMLElement>(".card").forEach((card) => {
      card.addEventListener("click", () => {
        const index = Number(card.dataset.index);
        this.dispatch({ kind: "focus_move", delta: index - this.state.focusIndex });
      });
    });
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function main(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const app = new App(new ApiClient(""), root);
  void app.start();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  main();
}
