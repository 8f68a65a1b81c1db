// End-to-end round trip against the real Python label server on a fixture
// session. Skipped when the Python package is not importable.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { LabelChoice } from "../src/types.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const REPO = path.resolve(HERE, "..", "..");
const FIXTURES = path.join(REPO, "tests", "fixtures");
const PORT = 8765 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

const pythonOk =
  spawnSync("python3", ["-c", "import infodemic"], { timeout: 20_000 }).status === 0;

let server: ChildProcess | null = null;
let sessionDir = "";
let serverLog = "";

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 60_000;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/api/v1/status`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 300));
  }
  throw new Error(`label server did not come up on ${BASE}\n${serverLog}`);
}

function auditEvents(): { event: string; cycle: number; source?: { kind: string } }[] {
  const raw = readFileSync(path.join(sessionDir, "audit.jsonl"), "utf-8");
  return raw
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
}

describe.skipIf(!pythonOk)("round trip against the fixture server", () => {
  beforeAll(async () => {
    sessionDir = mkdtempSync(path.join(tmpdir(), "annotator-session-"));
    server = spawn(
      "python3",
      [
        "-m", "infodemic.cli", "active",
        "--dataset", path.join(FIXTURES, "corpus.jsonl"),
        "--labels", path.join(FIXTURES, "labels.csv"),
        "--domains", path.join(FIXTURES, "flagged_domains.csv"),
        "--k", "3", "--cycles", "2", "--trees", "25", "--seed", "1",
        "--session-dir", sessionDir,
        "--serve", "--addr", `127.0.0.1:${PORT}`,
      ],
      { cwd: REPO, stdio: ["ignore", "pipe", "pipe"] },
    );
    server.stdout?.on("data", (chunk) => (serverLog += chunk));
    server.stderr?.on("data", (chunk) => (serverLog += chunk));
    await waitForServer();
  }, 90_000);

  afterAll(() => {
    server?.kill("SIGTERM");
    if (sessionDir) rmSync(sessionDir, { recursive: true, force: true });
  });

  it("labels a batch, observes the cycle advance, and survives a stale submit", async () => {
    const client = new ApiClient(BASE);

    const batch = await client.fetchBatch();
    expect(batch.status).toBe("active");
    expect(batch.cycle).toBe(0);
    expect(batch.items).toHaveLength(3);

    const choices: LabelChoice[] = ["misinfo", "not_misinfo", "misinfo"];
    const entries = batch.items.map((item, i) => ({
      tweet_id: item.tweet_id,
      label: choices[i]!,
      annotator_id: "ui-test",
    }));

    const outcome = await client.submitLabels(batch.session_revision, entries);
    expect(outcome.kind).toBe("ok");
    if (outcome.kind !== "ok") return;
    expect(outcome.result.accepted).toBe(3);
    expect(outcome.result.cycle).toBe(1);

    // propagated_count matches the audit log for the submitted cycle
    const propagated = auditEvents().filter(
      (event) => event.event === "label" && event.cycle === 0 && event.source?.kind === "propagated",
    );
    expect(outcome.result.propagated_count).toBe(propagated.length);

    // the refreshed batch is disjoint from everything labeled so far
    const labeled = new Set(
      auditEvents()
        .filter((event) => event.event === "label")
        .map((event) => (event as unknown as { tweet_id: string }).tweet_id),
    );
    const next = await client.fetchBatch();
    expect(next.session_revision).toBe(batch.session_revision + 1);
    for (const item of next.items) {
      expect(labeled.has(item.tweet_id)).toBe(false);
    }

    // a submission against the dead revision surfaces the conflict path
    const stale = await client.submitLabels(batch.session_revision, entries);
    expect(stale.kind).toBe("conflict");

    // status agrees with the metrics history growth
    const status = await client.fetchStatus();
    expect(status.cycle).toBe(1);
    expect(status.metrics_history).toHaveLength(2);
  }, 120_000);
});
