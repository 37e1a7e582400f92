/**
 * End-to-end: a real `codegraph serve` process with the scripted chat
 * backend, driven through the same client and renderers the page uses.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, CodegraphClient } from "../src/api.js";
import {
  renderNodeCard,
  renderCode,
  renderQueryError,
  renderResultTable,
  renderRoundTrace,
  renderStats,
} from "../src/render.js";
import type { NodeCellPayload } from "../src/api.js";

const REPO_ROOT = resolve(__dirname, "..", "..");
const FIXTURE = join(REPO_ROOT, "tests", "fixtures", "alpha");
const PORT = 8917;
const BASE = `http://127.0.0.1:${PORT}`;

const CHAT_SCRIPT = [
  "```\nQUERIES:\nall methods of class Engine\n```",
  'MATCH (c:CLASS {name: "Engine"})-[:HAS_METHOD]->(m:METHOD) RETURN m.name',
  "```\nFINISH:\nEngine exposes __init__, run and stop.\n```",
];

let server: ChildProcess;
let client: CodegraphClient;

beforeAll(async () => {
  const work = mkdtempSync(join(tmpdir(), "codegraph-e2e-"));
  const snapshot = join(work, "alpha");
  const indexed = spawnSync(
    "python3",
    ["-m", "codegraph.cli", "index", FIXTURE, "--out", snapshot],
    { cwd: REPO_ROOT, encoding: "utf-8" },
  );
  expect(indexed.status, indexed.stderr).toBe(0);
  expect(indexed.stdout).toContain("15 nodes");

  const script = join(work, "script.json");
  writeFileSync(script, JSON.stringify(CHAT_SCRIPT));

  server = spawn(
    "python3",
    [
      "-m", "codegraph.cli", "serve", snapshot,
      "--port", String(PORT),
      "--scripted", script,
      "--ui-dir", join(REPO_ROOT, "frontend", "dist"),
    ],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  client = new CodegraphClient(BASE);

  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      await client.repos();
      break;
    } catch {
      if (Date.now() > deadline) throw new Error("service did not come up");
      await new Promise((resolveWait) => setTimeout(resolveWait, 250));
    }
  }
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe("console against a live service", () => {
  it("loads repo stats and renders them", async () => {
    const { repos } = await client.repos();
    expect(repos).toHaveLength(1);
    const stats = await client.stats(repos[0]!.id);
    expect(stats.node_counts.MODULE).toBe(4);
    const html = renderStats(stats);
    expect(html).toContain("<td>MODULE</td><td>4</td>");
    expect(html).toContain("<td>CONTAINS</td><td>7</td>");
  });

  it("executes a query and renders its rows", async () => {
    const result = await client.query(
      "alpha",
      'MATCH (c:CLASS {name: "Engine"})-[:HAS_METHOD]->(m:METHOD) RETURN m.name',
    );
    expect(result.rows.map((row) => row[0])).toEqual(["__init__", "run", "stop"]);
    const html = renderResultTable(result);
    expect(html).toContain("<td>stop</td>");
  });

  it("renders query errors inline at the reported position", async () => {
    try {
      await client.query("alpha", "MATCH (");
      expect.unreachable("should have thrown");
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
      const html = renderQueryError((error as ApiError).body, "MATCH (");
      expect(html).toContain("syntax_error");
      expect(html).toContain("^");
    }
  });

  it("opens a node's code view from a query result", async () => {
    const result = await client.query("alpha", 'MATCH (f:FUNCTION {name: "helper"}) RETURN f');
    const cell = result.rows[0]![0] as NodeCellPayload;
    expect(cell.kind).toBe("node");
    const node = await client.node("alpha", cell.id);
    expect(renderNodeCard(node)).toContain("show-code");
    const { code } = await client.code("alpha", cell.id);
    expect(code.startsWith("def helper(")).toBe(true);
    expect(renderCode(code)).toContain("def helper(");
    const { neighbors } = await client.neighbors("alpha", cell.id, "both");
    expect(neighbors.length).toBeGreaterThan(0);
  });

  it("runs a chat exchange and shows the per-round trace", async () => {
    const created = await client.createSession("alpha", "chat", "single");
    const response = await client.sendMessage(created.session_id, "list all methods of class Engine");
    expect(response.answer).toContain("run");
    expect(response.answer).toContain("stop");
    expect(response.rounds).toBe(2);
    expect(response.queries[0]!.status).toBe("ok");
    expect(response.queries[0]!.cypher).toContain("HAS_METHOD");

    const transcript = await client.transcript(created.session_id);
    const html = renderRoundTrace(transcript);
    expect(html).toContain("Round 1");
    expect(html).toContain("Round 2");
    expect(html).toContain("__init__"); // executed rows visible in the trace
  });

  it("serves the built console assets", async () => {
    const page = await fetch(`${BASE}/`).then((response) => response.text());
    expect(page).toContain("codegraph console");
    const script = await fetch(`${BASE}/main.js`);
    expect(script.ok).toBe(true);
  });
});
