/**
 * Typed client for the codegraph HTTP service.
 *
 * Every view renders straight from these payloads; the client never
 * re-derives graph facts.
 */

// ---------------------------------------------------------------------------
// Payload types (mirror the service wire format)
// ---------------------------------------------------------------------------

export interface RepoSummary {
  id: string;
  repo_root: string;
  nodes: number;
  edges: number;
}

export interface RepoStats {
  id: string;
  repo_root: string;
  files: number;
  node_counts: Record<string, number>;
  edge_counts: Record<string, number>;
}

export interface NodeCellPayload {
  kind: "node";
  id: string;
  label: string;
  name: string;
  file_path: string;
  class_name?: string;
}

export type Cell = string | number | null | NodeCellPayload;

export interface QueryResult {
  columns: string[];
  rows: Cell[][];
  truncated: boolean;
  total_before_limit: number;
}

export interface SpanPayload {
  start_byte: number;
  end_byte: number;
  start_line: number;
  end_line: number;
}

export interface NodePayload {
  id: string;
  label: string;
  name: string;
  file_path: string;
  class_name?: string;
  signature?: string;
  span?: SpanPayload;
}

export interface EdgePayload {
  id: string;
  type: string;
  source: string;
  target: string;
  source_association_type?: string;
  target_association_type?: string;
}

export interface NeighborEntry {
  edge: EdgePayload;
  node: NodePayload;
}

export interface IssuedQuery {
  nl: string;
  cypher: string | null;
  status: string;
}

export interface UsagePayload {
  prompt_tokens: number;
  completion_tokens: number;
  by_role: Record<string, { prompt: number; completion: number }>;
  approximate: boolean;
}

export interface MessageResponse {
  answer: string;
  rounds: number;
  queries: IssuedQuery[];
  usage: UsagePayload;
}

export interface TranscriptTurn {
  round: number;
  role: string;
  content: string;
}

export interface SessionTranscript {
  id: string;
  task: string;
  preset: string;
  strategy: string;
  rounds: number;
  answer: string | null;
  transcript: TranscriptTurn[];
  queries: IssuedQuery[];
  usage: UsagePayload;
}

export interface ApiErrorBody {
  error_code: string;
  message: string;
  position?: { line: number; column: number };
}

export class ApiError extends Error {
  status: number;
  body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.body = body;
  }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

export class CodegraphClient {
  base: string;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.base}${path}`, init);
    if (!response.ok) {
      let body: ApiErrorBody;
      try {
        body = (await response.json()) as ApiErrorBody;
      } catch {
        body = { error_code: "http_error", message: response.statusText };
      }
      throw new ApiError(response.status, body);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  schema(): Promise<{ schema_version: string; text: string }> {
    return this.request("/v1/schema");
  }

  repos(): Promise<{ repos: RepoSummary[] }> {
    return this.request("/v1/repos");
  }

  stats(repoId: string): Promise<RepoStats> {
    return this.request(`/v1/repos/${encodeURIComponent(repoId)}/stats`);
  }

  query(repoId: string, query: string, limit?: number): Promise<QueryResult> {
    return this.post(`/v1/repos/${encodeURIComponent(repoId)}/query`, {
      query,
      ...(limit ? { limit } : {}),
    });
  }

  node(repoId: string, nodeId: string): Promise<NodePayload> {
    return this.request(
      `/v1/repos/${encodeURIComponent(repoId)}/nodes/${encodeURIComponent(nodeId)}`,
    );
  }

  neighbors(
    repoId: string,
    nodeId: string,
    direction: "out" | "in" | "both" = "both",
    type?: string,
  ): Promise<{ neighbors: NeighborEntry[] }> {
    const params = new URLSearchParams({ direction });
    if (type) params.set("type", type);
    return this.request(
      `/v1/repos/${encodeURIComponent(repoId)}/nodes/${encodeURIComponent(nodeId)}/neighbors?${params}`,
    );
  }

  code(repoId: string, nodeId: string): Promise<{ code: string }> {
    return this.request(
      `/v1/repos/${encodeURIComponent(repoId)}/nodes/${encodeURIComponent(nodeId)}/code`,
    );
  }

  createSession(
    repoId: string,
    preset: string,
    strategy?: string,
  ): Promise<{ session_id: string; preset: string; strategy: string }> {
    return this.post(`/v1/repos/${encodeURIComponent(repoId)}/sessions`, {
      preset,
      ...(strategy ? { strategy } : {}),
    });
  }

  sendMessage(sessionId: string, text: string): Promise<MessageResponse> {
    return this.post(`/v1/sessions/${encodeURIComponent(sessionId)}/messages`, {
      text,
    });
  }

  transcript(sessionId: string): Promise<SessionTranscript> {
    return this.request(`/v1/sessions/${encodeURIComponent(sessionId)}`);
  }
}
