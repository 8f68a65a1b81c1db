// Wire types for the label server's JSON API (see /api/v1 endpoints).

export type LabelChoice = "misinfo" | "not_misinfo" | "uncertain";

export interface Metrics {
  tp: number;
  fp: number;
  fn: number;
  tn: number;
  accuracy: number;
  precision: number;
  recall: number;
  f1: number;
}

export interface BatchItem {
  tweet_id: string;
  text: string;
  proba: number;
  entropy: number;
}

export interface BatchResponse {
  status: "active" | "complete";
  cycle: number;
  n_cycles: number;
  session_revision: number;
  items: BatchItem[];
  final_metrics?: Metrics;
}

export interface StatusResponse {
  cycle: number;
  n_cycles: number;
  labeled_count: number;
  pool_count: number;
  session_revision: number;
  status: "active" | "complete";
  metrics_history: Metrics[];
}

export interface LabelEntry {
  tweet_id: string;
  label: LabelChoice;
  annotator_id: string;
}

export interface SubmitResult {
  accepted: number;
  rejected: { tweet_id: string; code: string }[];
  propagated_count: number;
  cycle: number;
  session_revision: number;
  new_metrics: Metrics;
}

export interface ApiError {
  code: string;
  message: string;
}
