/**
 * Pure HTML renderers. Every function maps API payloads to markup strings,
 * so views are unit-testable without a DOM and the page code only wires
 * events.
 */

import type {
  ApiErrorBody,
  Cell,
  IssuedQuery,
  NeighborEntry,
  NodeCellPayload,
  NodePayload,
  QueryResult,
  RepoStats,
  SessionTranscript,
  UsagePayload,
} from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// ---------------------------------------------------------------------------
// Repo stats
// ---------------------------------------------------------------------------

export function renderStats(stats: RepoStats): string {
  const nodeRows = Object.entries(stats.node_counts)
    .map(([label, count]) => `<tr><td>${label}</td><td>${count}</td></tr>`)
    .join("");
  const edgeRows = Object.entries(stats.edge_counts)
    .map(([type, count]) => `<tr><td>${type}</td><td>${count}</td></tr>`)
    .join("");
  return `
    <div class="stats">
      <p><b>${escapeHtml(stats.id)}</b> — ${escapeHtml(stats.repo_root)} (${stats.files} files)</p>
      <div class="stats-tables">
        <table><thead><tr><th>Node</th><th>#</th></tr></thead><tbody>${nodeRows}</tbody></table>
        <table><thead><tr><th>Edge</th><th>#</th></tr></thead><tbody>${edgeRows}</tbody></table>
      </div>
    </div>`;
}

// ---------------------------------------------------------------------------
// Query results
// ---------------------------------------------------------------------------

function isNodeCell(cell: Cell): cell is NodeCellPayload {
  return typeof cell === "object" && cell !== null && cell.kind === "node";
}

function renderCell(cell: Cell): string {
  if (cell === null) return `<td class="null"></td>`;
  if (isNodeCell(cell)) {
    const detail = cell.class_name ? `${cell.class_name}.${cell.name}` : cell.name;
    return (
      `<td><a href="#" class="node-link" data-node-id="${escapeHtml(cell.id)}">` +
      `${escapeHtml(cell.label)} ${escapeHtml(detail)}</a>` +
      ` <span class="path">${escapeHtml(cell.file_path)}</span></td>`
    );
  }
  return `<td>${escapeHtml(String(cell))}</td>`;
}

export function renderResultTable(result: QueryResult): string {
  const header = result.columns
    .map((column) => `<th>${escapeHtml(column)}</th>`)
    .join("");
  const rows = result.rows
    .map((row) => `<tr>${row.map(renderCell).join("")}</tr>`)
    .join("");
  const body = rows || `<tr><td colspan="${result.columns.length}">(0 rows)</td></tr>`;
  const shown = result.rows.length;
  const badge =
    result.truncated || result.total_before_limit > shown
      ? `<span class="badge">showing ${shown} of ${result.total_before_limit}</span>`
      : "";
  return `
    <div class="result">
      <p>${shown} row${shown === 1 ? "" : "s"} ${badge}</p>
      <table class="result-table">
        <thead><tr>${header}</tr></thead>
        <tbody>${body}</tbody>
      </table>
    </div>`;
}

/** Inline error with a caret under the reported column of the query text. */
export function renderQueryError(error: ApiErrorBody, queryText: string): string {
  let caretBlock = "";
  if (error.position) {
    const lines = queryText.split("\n");
    const line = lines[error.position.line - 1] ?? "";
    const caret = " ".repeat(Math.max(error.position.column - 1, 0)) + "^";
    caretBlock = `<pre class="caret">${escapeHtml(line)}\n${caret}</pre>`;
  }
  return `
    <div class="error">
      <p>${escapeHtml(error.error_code)}: ${escapeHtml(error.message)}</p>
      ${caretBlock}
    </div>`;
}

export function renderRetryBanner(message: string): string {
  return `
    <div class="banner">
      <span>${escapeHtml(message)}</span>
      <button class="retry">Retry</button>
    </div>`;
}

// ---------------------------------------------------------------------------
// Node inspector
// ---------------------------------------------------------------------------

export function renderNodeCard(node: NodePayload): string {
  const fields: string[] = [
    `<dt>label</dt><dd>${escapeHtml(node.label)}</dd>`,
    `<dt>name</dt><dd>${escapeHtml(node.name)}</dd>`,
    `<dt>file</dt><dd>${escapeHtml(node.file_path)}</dd>`,
  ];
  if (node.class_name) fields.push(`<dt>class</dt><dd>${escapeHtml(node.class_name)}</dd>`);
  if (node.signature) fields.push(`<dt>signature</dt><dd><code>${escapeHtml(node.signature)}</code></dd>`);
  if (node.span) {
    fields.push(`<dt>span</dt><dd>lines ${node.span.start_line}-${node.span.end_line}</dd>`);
  }
  // code is fetched lazily on expand, honoring the staleness check
  const codeControl = node.span
    ? `<button class="show-code" data-node-id="${escapeHtml(node.id)}">View code</button>
       <div class="code-slot"></div>`
    : `<p class="muted">No code span for ${escapeHtml(node.label)} nodes.</p>`;
  return `
    <div class="node-card" data-node-id="${escapeHtml(node.id)}">
      <dl>${fields.join("")}</dl>
      ${codeControl}
      <div class="neighbors-slot"></div>
    </div>`;
}

export function renderNeighbors(entries: NeighborEntry[], selfId: string): string {
  if (entries.length === 0) return `<p class="muted">No neighbors.</p>`;
  const groups = new Map<string, string[]>();
  for (const entry of entries) {
    const outgoing = entry.edge.source === selfId;
    const key = `${entry.edge.type} ${outgoing ? "→" : "←"}`;
    const detail = entry.node.class_name
      ? `${entry.node.class_name}.${entry.node.name}`
      : entry.node.name;
    const item =
      `<li><a href="#" class="node-link" data-node-id="${escapeHtml(entry.node.id)}">` +
      `${escapeHtml(entry.node.label)} ${escapeHtml(detail)}</a></li>`;
    const bucket = groups.get(key) ?? [];
    bucket.push(item);
    groups.set(key, bucket);
  }
  const sections = [...groups.entries()]
    .map(([key, items]) => `<h4>${escapeHtml(key)}</h4><ul>${items.join("")}</ul>`)
    .join("");
  return `<div class="neighbors">${sections}</div>`;
}

export function renderCode(code: string): string {
  return `<pre class="code">${escapeHtml(code)}</pre>`;
}

// ---------------------------------------------------------------------------
// Chat panel
// ---------------------------------------------------------------------------

export function renderUsage(usage: UsagePayload): string {
  const approx = usage.approximate ? "~" : "";
  return `<span class="usage">${approx}${usage.prompt_tokens} prompt / ${approx}${usage.completion_tokens} completion tokens</span>`;
}

export function renderQueryTrace(queries: IssuedQuery[]): string {
  if (queries.length === 0) return "";
  const items = queries
    .map((query) => {
      const cypher = query.cypher
        ? `<code>${escapeHtml(query.cypher)}</code>`
        : `<em>untranslatable</em>`;
      return `<li class="${query.status}">${escapeHtml(query.nl)} → ${cypher}</li>`;
    })
    .join("");
  return `<ul class="query-trace">${items}</ul>`;
}

/** Expandable per-round trace built from the session transcript. */
export function renderRoundTrace(session: SessionTranscript): string {
  const rounds = new Map<number, { asked: string[]; results: string[] }>();
  for (const turn of session.transcript) {
    if (turn.round === 0) continue;
    const bucket = rounds.get(turn.round) ?? { asked: [], results: [] };
    if (turn.role === "assistant") bucket.asked.push(turn.content);
    if (turn.role === "result") bucket.results.push(turn.content);
    rounds.set(turn.round, bucket);
  }
  const sections = [...rounds.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([round, bucket]) => {
      const asked = bucket.asked
        .map((content) => `<pre class="turn agent">${escapeHtml(content)}</pre>`)
        .join("");
      const results = bucket.results
        .map((content) => `<pre class="turn result">${escapeHtml(content)}</pre>`)
        .join("");
      return `
        <details class="round">
          <summary>Round ${round}</summary>
          ${asked}${results}
        </details>`;
    })
    .join("");
  return `<div class="trace">${sections}</div>`;
}

export function renderChatExchange(
  question: string,
  answer: string,
  queries: IssuedQuery[],
  usage: UsagePayload,
): string {
  return `
    <div class="exchange">
      <div class="bubble user">${escapeHtml(question)}</div>
      <div class="bubble assistant">${escapeHtml(answer)}</div>
      ${renderQueryTrace(queries)}
      <p>${renderUsage(usage)}</p>
    </div>`;
}
