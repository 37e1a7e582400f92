/**
 * Page wiring for the codegraph console: repo picker, query editor with
 * results table, node inspector with lazy code view, and the chat panel
 * with a per-round trace. All data shown comes from API responses.
 */

import { ApiError, CodegraphClient } from "./api.js";
import type { QueryResult } from "./api.js";
import {
  renderChatExchange,
  renderCode,
  renderNeighbors,
  renderNodeCard,
  renderQueryError,
  renderResultTable,
  renderRetryBanner,
  renderRoundTrace,
  renderStats,
} from "./render.js";

const client = new CodegraphClient("");

interface ViewState {
  repoId: string | null;
  lastQuery: string;
  lastResult: QueryResult | null;
  selectedNode: string | null;
  sessionId: string | null;
  preset: string;
  strategy: string;
  messageInFlight: boolean;
}

const state: ViewState = {
  repoId: null,
  lastQuery: "",
  lastResult: null,
  selectedNode: null,
  sessionId: null,
  preset: "chat",
  strategy: "multiple",
  messageInFlight: false,
};

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

// ---------------------------------------------------------------------------
// Repo picker
// ---------------------------------------------------------------------------

async function loadRepos(): Promise<void> {
  const select = element<HTMLSelectElement>("repo-select");
  try {
    const { repos } = await client.repos();
    select.innerHTML = repos
      .map((repo) => `<option value="${repo.id}">${repo.id} (${repo.nodes} nodes)</option>`)
      .join("");
    if (repos.length > 0 && repos[0]) {
      state.repoId = repos[0].id;
      select.value = repos[0].id;
      await loadStats();
    }
  } catch (error) {
    element("stats-panel").innerHTML = renderRetryBanner(
      `Cannot reach the service: ${String(error)}`,
    );
  }
  select.onchange = async () => {
    state.repoId = select.value;
    state.selectedNode = null;
    element("inspector-panel").innerHTML = "";
    await loadStats();
  };
}

async function loadStats(): Promise<void> {
  if (!state.repoId) return;
  const stats = await client.stats(state.repoId);
  element("stats-panel").innerHTML = renderStats(stats);
}

// ---------------------------------------------------------------------------
// Query view
// ---------------------------------------------------------------------------

async function runQuery(): Promise<void> {
  if (!state.repoId) return;
  const editor = element<HTMLTextAreaElement>("query-input");
  const output = element("query-output");
  state.lastQuery = editor.value;
  try {
    const result = await client.query(state.repoId, editor.value);
    state.lastResult = result;
    output.innerHTML = renderResultTable(result);
    wireNodeLinks(output);
  } catch (error) {
    if (error instanceof ApiError && error.status === 400) {
      output.innerHTML = renderQueryError(error.body, state.lastQuery);
    } else if (error instanceof ApiError) {
      output.innerHTML = renderQueryError(error.body, "");
    } else {
      output.innerHTML = renderRetryBanner(`Query failed: ${String(error)}`);
      const retry = output.querySelector<HTMLButtonElement>("button.retry");
      if (retry) retry.onclick = () => void runQuery();
    }
  }
}

function wireNodeLinks(container: HTMLElement): void {
  for (const link of container.querySelectorAll<HTMLAnchorElement>("a.node-link")) {
    link.onclick = (event) => {
      event.preventDefault();
      const nodeId = link.dataset.nodeId;
      if (nodeId) void openNode(nodeId);
    };
  }
}

// ---------------------------------------------------------------------------
// Node inspector
// ---------------------------------------------------------------------------

async function openNode(nodeId: string): Promise<void> {
  if (!state.repoId) return;
  state.selectedNode = nodeId;
  const panel = element("inspector-panel");
  const node = await client.node(state.repoId, nodeId);
  panel.innerHTML = renderNodeCard(node);
  const { neighbors } = await client.neighbors(state.repoId, nodeId);
  const slot = panel.querySelector<HTMLElement>(".neighbors-slot");
  if (slot) {
    slot.innerHTML = renderNeighbors(neighbors, nodeId);
    wireNodeLinks(slot);
  }
  const showCode = panel.querySelector<HTMLButtonElement>("button.show-code");
  if (showCode) {
    showCode.onclick = async () => {
      // fetched only on demand so the staleness check runs at view time
      const codeSlot = panel.querySelector<HTMLElement>(".code-slot");
      if (!codeSlot || !state.repoId) return;
      try {
        const { code } = await client.code(state.repoId, nodeId);
        codeSlot.innerHTML = renderCode(code);
      } catch (error) {
        if (error instanceof ApiError) {
          codeSlot.innerHTML = renderQueryError(error.body, "");
        } else {
          codeSlot.innerHTML = renderRetryBanner(String(error));
        }
      }
    };
  }
}

// ---------------------------------------------------------------------------
// Chat panel
// ---------------------------------------------------------------------------

function chatControls(): {
  input: HTMLTextAreaElement;
  send: HTMLButtonElement;
  preset: HTMLSelectElement;
  strategy: HTMLSelectElement;
  log: HTMLElement;
  trace: HTMLElement;
} {
  return {
    input: element<HTMLTextAreaElement>("chat-input"),
    send: element<HTMLButtonElement>("chat-send"),
    preset: element<HTMLSelectElement>("chat-preset"),
    strategy: element<HTMLSelectElement>("chat-strategy"),
    log: element("chat-log"),
    trace: element("chat-trace"),
  };
}

function refreshSendState(): void {
  const { input, send } = chatControls();
  send.disabled = state.messageInFlight || input.value.trim() === "";
}

async function ensureSession(): Promise<string> {
  if (state.sessionId) return state.sessionId;
  if (!state.repoId) throw new Error("no repository selected");
  const created = await client.createSession(state.repoId, state.preset, state.strategy);
  state.sessionId = created.session_id;
  return created.session_id;
}

async function sendChat(): Promise<void> {
  const { input, log, trace } = chatControls();
  const text = input.value.trim();
  if (text === "" || state.messageInFlight) return;
  state.messageInFlight = true;
  refreshSendState();
  try {
    const sessionId = await ensureSession();
    const response = await client.sendMessage(sessionId, text);
    log.insertAdjacentHTML(
      "beforeend",
      renderChatExchange(text, response.answer, response.queries, response.usage),
    );
    input.value = ""; // only cleared on success; 503 keeps the draft
    const transcript = await client.transcript(sessionId);
    trace.innerHTML = renderRoundTrace(transcript);
  } catch (error) {
    if (error instanceof ApiError && error.status === 503) {
      log.insertAdjacentHTML(
        "beforeend",
        renderRetryBanner("Chat backend unavailable; your message was kept."),
      );
    } else {
      log.insertAdjacentHTML("beforeend", renderRetryBanner(String(error)));
    }
  } finally {
    state.messageInFlight = false;
    refreshSendState();
  }
}

function wireChat(): void {
  const { input, send, preset, strategy, log } = chatControls();
  input.oninput = refreshSendState;
  send.onclick = () => void sendChat();
  preset.onchange = () => {
    // a new preset starts a new session; the old transcript stays readable
    state.preset = preset.value;
    state.strategy = preset.value === "debugger" ? "single" : strategy.value;
    strategy.value = state.strategy;
    state.sessionId = null;
    log.insertAdjacentHTML(
      "beforeend",
      `<p class="muted">— new ${state.preset} session —</p>`,
    );
  };
  strategy.onchange = () => {
    state.strategy = strategy.value;
    state.sessionId = null;
  };
  refreshSendState();
}

// ---------------------------------------------------------------------------

function init(): void {
  void loadRepos();
  element<HTMLButtonElement>("query-run").onclick = () => void runQuery();
  wireChat();
}

document.addEventListener("DOMContentLoaded", init);
