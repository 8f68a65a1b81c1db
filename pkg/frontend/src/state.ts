// Pure view-state machine. The rendered view is a function of (last server
// responses, pending selections); every transition happens here so it can be
// tested without a DOM. Nothing in this file performs I/O.

import type { BatchResponse, LabelChoice, Metrics, StatusResponse, SubmitResult } from "./types.js";

export type Phase = "loading" | "labeling" | "submitting" | "complete" | "error";

export interface CycleSummary {
  accepted: number;
  propagated: number;
  previousF1: number | null;
  newF1: number;
}

export interface UiState {
  phase: Phase;
  batch: BatchResponse | null;
  /** Only explicit user picks ever appear here; no defaults. */
  selections: Record<string, LabelChoice>;
  rejected: Record<string, string>;
  focusIndex: number;
  metricsHistory: Metrics[];
  nCycles: number;
  banner: string | null;
  summary: CycleSummary | null;
  finalMetrics: Metrics | null;
}

export type UiEvent =
  | { kind: "status_loaded"; status: StatusResponse }
  | { kind: "batch_loaded"; batch: BatchResponse }
  | { kind: "select"; tweetId: string; choice: LabelChoice }
  | { kind: "focus_move"; delta: number }
  | { kind: "submit_started" }
  | { kind: "submit_succeeded"; result: SubmitResult }
  | { kind: "submit_conflicted"; message: string }
  | { kind: "network_error"; message: string };

export function initialState(): UiState {
  return {
    phase: "loading",
    batch: null,
    selections: {},
    rejected: {},
    focusIndex: 0,
    metricsHistory: [],
    nCycles: 0,
    banner: null,
    summary: null,
    finalMetrics: null,
  };
}

export function canSubmit(state: UiState): boolean {
  if (state.phase !== "labeling" || state.batch === null || state.batch.items.length === 0) {
    return false;
  }
  return state.batch.items.every((item) => state.selections[item.tweet_id] !== undefined);
}

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case "status_loaded": {
      const complete = event.status.status === "complete";
      return {
        ...state,
        metricsHistory: event.status.metrics_history,
        nCycles: event.status.n_cycles,
        phase: complete ? "complete" : state.phase,
        finalMetrics: complete
          ? event.status.metrics_history[event.status.metrics_history.length - 1] ?? null
          : state.finalMetrics,
      };
    }
    case "batch_loaded": {
      if (event.batch.status === "complete") {
        return {
          ...state,
          phase: "complete",
          batch: event.batch,
          selections: {},
          finalMetrics: event.batch.final_metrics ?? state.finalMetrics,
          banner: null,
        };
      }
      // A new revision invalidates stale selections; same revision keeps them
      // (poll refreshes must not wipe in-progress work).
      const sameRevision = state.batch?.session_revision === event.batch.session_revision;
      return {
        ...state,
        phase: "labeling",
        batch: event.batch,
        selections: sameRevision ? state.selections : {},
        rejected: sameRevision ? state.rejected : {},
        focusIndex: sameRevision ? state.focusIndex : 0,
        banner: null,
      };
    }
    case "select": {
      if (state.phase !== "labeling" || state.batch === null) return state;
      if (!state.batch.items.some((item) => item.tweet_id === event.tweetId)) return state;
      return {
        ...state,
        selections: { ...state.selections, [event.tweetId]: event.choice },
      };
    }
    case "focus_move": {
      const count = state.batch?.items.length ?? 0;
      if (count === 0) return state;
      const next = Math.min(Math.max(state.focusIndex + event.delta, 0), count - 1);
      return { ...state, focusIndex: next };
    }
    case "submit_started":
      return { ...state, phase: "submitting", banner: null };
    case "submit_succeeded": {
      const result = event.result;
      const previousF1 =
        state.metricsHistory.length > 0
          ? state.metricsHistory[state.metricsHistory.length - 1]!.f1
          : null;
      const rejected: Record<string, string> = {};
      for (const entry of result.rejected) rejected[entry.tweet_id] = entry.code;
      if (result.accepted === 0) {
        // Nothing applied: stay on the batch, flag the rejected entries and
        // keep the untouched selections so the user can fix and resubmit.
        return { ...state, phase: "labeling", rejected, banner: "no labels were accepted" };
      }
      return {
        ...state,
        phase: "loading",
        batch: null,
        selections: {},
        rejected,
        focusIndex: 0,
        metricsHistory: [...state.metricsHistory, result.new_metrics],
        summary: {
          accepted: result.accepted,
          propagated: result.propagated_count,
          previousF1,
          newF1: result.new_metrics.f1,
        },
        banner: null,
      };
    }
    case "submit_conflicted":
      // Contract: refetch and re-render; selections belong to a dead revision.
      return {
        ...state,
        phase: "loading",
        batch: null,
        selections: {},
        rejected: {},
        focusIndex: 0,
        banner: `batch changed on the server (${event.message}); reloading`,
      };
    case "network_error":
      // Keep everything; the poll loop retries. The banner is the only change.
      return { ...state, banner: `connection problem: ${event.message}; retrying` };
    default:
      return state;
  }
}

export function pendingEntries(state: UiState, annotatorId: string) {
  if (state.batch === null) return [];
  return state.batch.items
    .filter((item) => state.selections[item.tweet_id] !== undefined)
    .map((item) => ({
      tweet_id: item.tweet_id,
      label: state.selections[item.tweet_id]!,
      annotator_id: annotatorId,
    }));
}

/** Polyline points for an inline SVG sparkline of the F1 history. */
export function sparklinePoints(values: number[], width: number, height: number): string {
  if (values.length === 0) return "";
  if (values.length === 1) return `0,${(height / 2).toFixed(1)} ${width},${(height / 2).toFixed(1)}`;
  const min = Math.min(...values);
  const max = Math.max(...values);
  const span = max - min || 1;
  const step = width / (values.length - 1);
  return values
    .map((v, i) => `${(i * step).toFixed(1)},${(height - ((v - min) / span) * height).toFixed(1)}`)
    .join(" ");
}
