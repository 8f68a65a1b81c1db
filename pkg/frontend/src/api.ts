// Thin typed client over the label server. Conflict (409) and completed
// session (410) come back as values, not exceptions, so the state layer can
// route them; anything else unexpected throws.

import type { BatchResponse, LabelEntry, StatusResponse, SubmitResult } from "./types.js";

export type SubmitOutcome =
  | { kind: "ok"; result: SubmitResult }
  | { kind: "conflict"; message: string }
  | { kind: "complete"; message: string };

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/api/v1${path}`;
  }

  async fetchBatch(): Promise<BatchResponse> {
    const response = await this.fetchImpl(this.url("/batch"));
    if (!response.ok) throw new Error(`batch failed: ${response.status}`);
    return (await response.json()) as BatchResponse;
  }

  async fetchStatus(): Promise<StatusResponse> {
    const response = await this.fetchImpl(this.url("/status"));
    if (!response.ok) throw new Error(`status failed: ${response.status}`);
    return (await response.json()) as StatusResponse;
  }

  async submitLabels(sessionRevision: number, labels: LabelEntry[]): Promise<SubmitOutcome> {
    const response = await this.fetchImpl(this.url("/labels"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_revision: sessionRevision, labels }),
    });
    if (response.status === 409) {
      const err = (await response.json()) as { message?: string };
      return { kind: "conflict", message: err.message ?? "revision conflict" };
    }
    if (response.status === 410) {
      const err = (await response.json()) as { message?: string };
      return { kind: "complete", message: err.message ?? "session complete" };
    }
    if (!response.ok) throw new Error(`submit failed: ${response.status}`);
    return { kind: "ok", result: (await response.json()) as SubmitResult };
  }
}
