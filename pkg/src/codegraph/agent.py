"""Two-agent retrieval loop over a graph snapshot.

A primary agent reads the task plus gathered context and either finishes
or writes natural-language retrieval queries; a translation agent converts
each into an executable graph query, with parser errors fed back for
retries. Query results re-enter the primary agent's context and the loop
repeats up to a round cap, after which the primary agent must answer from
what it has.
"""

from __future__ import annotations

import json
import math
import re
import uuid
from dataclasses import dataclass, field

import httpx

from .graph_schema import schema_text as _schema_text
from .graph_store import GraphHandle
from .query_engine import (
    ExecutionCaps,
    QueryError,
    execute,
    parse_query,
    render_result,
)

PRESETS = ("chat", "debugger", "unittestor", "generator", "commentor")

REFORMAT_ATTEMPTS = 2
DEFAULT_QUERIES_PER_ROUND = 5


class ConfigError(Exception):
    pass


class BackendError(Exception):
    """Transport or protocol failure talking to the chat backend."""

    def __init__(self, message: str, session: "Session | None" = None):
        super().__init__(message)
        self.session = session


class ProtocolError(Exception):
    """Primary agent kept violating the output contract."""


class TranslationFailed(Exception):
    """Translation retries exhausted; carries the last parser error."""

    def __init__(self, last_error: str, attempts: int):
        super().__init__(f"translation failed after {attempts} attempts: {last_error}")
        self.last_error = last_error
        self.attempts = attempts


@dataclass
class BackendReply:
    content: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class ScriptedChatBackend:
    """Replays canned replies by call index; deterministic for tests.

    Entries are strings or {content, prompt_tokens, completion_tokens}
    dicts. String entries get chars/4 approximate token counts.
    """

    def __init__(self, replies: list):
        self.replies = list(replies)
        self.calls: list[list[dict]] = []

    def send(self, messages: list[dict], params: dict) -> BackendReply:
        index = len(self.calls)
        self.calls.append(messages)
        if index >= len(self.replies):
            raise BackendError(f"scripted backend exhausted after {index} replies")
        entry = self.replies[index]
        if isinstance(entry, str):
            return BackendReply(content=entry)
        return BackendReply(
            content=entry["content"],
            prompt_tokens=entry.get("prompt_tokens"),
            completion_tokens=entry.get("completion_tokens"),
        )


class HttpChatBackend:
    """Chat-completions HTTP backend (configurable base URL, model, token)."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    @classmethod
    def from_env(cls, environ) -> "HttpChatBackend | None":
        base_url = environ.get("CODEGRAPH_BASE_URL") or environ.get("OPENAI_BASE_URL")
        model = environ.get("CODEGRAPH_MODEL") or environ.get("OPENAI_MODEL")
        api_key = environ.get("CODEGRAPH_API_KEY") or environ.get("OPENAI_API_KEY", "")
        if not base_url or not model:
            return None
        return cls(base_url=base_url, model=model, api_key=api_key)

    @staticmethod
    def temperature_from_env(environ, default: float = 0.0) -> float:
        raw = environ.get("CODEGRAPH_TEMPERATURE")
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            return default

    def send(self, messages: list[dict], params: dict) -> BackendReply:
        payload = {
            "model": params.get("model") or self.model,
            "messages": messages,
            "temperature": params.get("temperature", 0.0),
        }
        if params.get("max_tokens"):
            payload["max_tokens"] = params["max_tokens"]
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            body = response.json()
        except (httpx.HTTPError, json.JSONDecodeError) as exc:
            raise BackendError(f"chat backend unreachable or invalid: {exc}") from exc
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion response: {body}") from exc
        usage = body.get("usage") or {}
        return BackendReply(
            content=content,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )


@dataclass
class AgentConfig:
    strategy: str | None = None  # single | multiple; None -> preset default
    max_rounds: int = 5
    translate_retries: int = 3
    temperature: float = 0.0
    result_char_budget: int = 4000
    app_preset: str = "chat"
    max_queries_per_round: int = DEFAULT_QUERIES_PER_ROUND

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if self.translate_retries < 0:
            raise ConfigError("translate_retries must be >= 0")
        if self.app_preset not in PRESETS:
            raise ConfigError(f"unknown preset: {self.app_preset!r}")
        if self.strategy not in (None, "single", "multiple"):
            raise ConfigError(f"strategy must be single or multiple: {self.strategy!r}")

    def effective_strategy(self) -> str:
        if self.strategy:
            return self.strategy
        return "single" if self.app_preset == "debugger" else "multiple"


@dataclass
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    by_role: dict = field(default_factory=dict)  # role -> {prompt, completion}
    approximate: bool = False

    def add(
        self, role: str, reply: BackendReply, request_messages: list[dict] | None = None
    ) -> None:
        prompt = reply.prompt_tokens
        completion = reply.completion_tokens
        if prompt is None or completion is None:
            # backend reported no usage; fall back to ceil(chars/4)
            self.approximate = True
            if prompt is None:
                prompt = _approx_tokens_of(request_messages or [])
            if completion is None:
                completion = math.ceil(len(reply.content) / 4)
        self.prompt_tokens += prompt
        self.completion_tokens += completion
        bucket = self.by_role.setdefault(role, {"prompt": 0, "completion": 0})
        bucket["prompt"] += prompt
        bucket["completion"] += completion

    def to_json(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "by_role": self.by_role,
            "approximate": self.approximate,
        }


def _approx_tokens_of(messages: list[dict]) -> int:
    chars = sum(len(m.get("content", "")) for m in messages)
    return math.ceil(chars / 4)


@dataclass
class Turn:
    role: str  # system | user | assistant | result
    content: str
    round: int


@dataclass
class IssuedQuery:
    nl_query: str
    graph_query: str | None
    status: str  # ok | translation_failed


@dataclass
class Session:
    id: str
    task: str
    preset: str
    strategy: str
    transcript: list[Turn] = field(default_factory=list)
    issued_queries: list[IssuedQuery] = field(default_factory=list)
    usage: TokenUsage = field(default_factory=TokenUsage)
    rounds: int = 0
    answer: str | None = None

    @classmethod
    def new(cls, task: str, config: AgentConfig, session_id: str | None = None) -> "Session":
        return cls(
            id=session_id or uuid.uuid4().hex,
            task=task,
            preset=config.app_preset,
            strategy=config.effective_strategy(),
        )

    def transcript_jsonl(self) -> str:
        """Turn-by-turn serialization; deterministic for identical runs."""
        lines = [
            json.dumps(
                {"round": t.round, "role": t.role, "content": t.content},
                sort_keys=True,
            )
            for t in self.transcript
        ]
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "task": self.task,
            "preset": self.preset,
            "strategy": self.strategy,
            "rounds": self.rounds,
            "answer": self.answer,
            "transcript": [
                {"round": t.round, "role": t.role, "content": t.content}
                for t in self.transcript
            ],
            "queries": [
                {"nl": q.nl_query, "cypher": q.graph_query, "status": q.status}
                for q in self.issued_queries
            ],
            "usage": self.usage.to_json(),
        }


# --- prompts -----------------------------------------------------------------

_OUTPUT_CONTRACT = """In every reply emit exactly one fenced block, in one of these two forms.

To retrieve more information:
```
QUERIES:
<one natural-language retrieval query per line>
```

To deliver your final answer:
```
FINISH:
<your complete answer>
```

Nothing outside the fenced block is acted on."""

_PRESET_INSTRUCTIONS = {
    "chat": (
        "You answer questions about a code repository: its structure, its "
        "symbols, and how they relate. Ground every claim in retrieved "
        "graph results; name the modules, classes, and functions involved."
    ),
    "debugger": (
        "You diagnose bugs. Work iteratively: infer candidate causes from "
        "the report, retrieve the implicated classes, methods, and fields "
        "to test each hypothesis, then state the cause and the exact "
        "locations (file and symbol) to modify, with suggested fixes."
    ),
    "unittestor": (
        "You generate unit tests. First retrieve all methods and "
        "inheritance relationships of the target class so the tests cover "
        "inherited behavior as well, then emit complete test code."
    ),
    "generator": (
        "You write new code extending the repository. Retrieve the "
        "referenced classes, fields, and symbols first so generated code "
        "uses real names and signatures, then emit the code."
    ),
    "commentor": (
        "You write documentation comments. Retrieve the implementations "
        "behind the target so parameter meanings and return types are "
        "stated precisely, then emit the commented code."
    ),
}


def build_prompt(
    preset: str, task: str, schema: str, history: list[tuple[str, str]]
) -> list[dict]:
    """Messages for the primary agent: system contract + task + history."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset: {preset!r}")
    system = (
        "You are the primary agent of a code-repository analysis system. "
        "The repository has been indexed into a code graph; a separate "
        "translation agent turns each of your natural-language queries "
        "into an executable graph query, so phrase queries in terms of the "
        "schema below.\n\n"
        f"{_PRESET_INSTRUCTIONS[preset]}\n\n"
        "Graph schema:\n\n"
        f"{schema}\n"
        f"{_OUTPUT_CONTRACT}"
    )
    messages = [{"role": "system", "content": system}, {"role": "user", "content": task}]
    for role, content in history:
        messages.append({"role": role, "content": content})
    return messages


_TRANSLATOR_GRAMMAR = """Target language: a Cypher subset with this exact grammar:
  query := "MATCH" pattern ("," pattern)* ("WHERE" expr)? "RETURN" item ("," item)* ("LIMIT" int)?
  pattern := node (rel node)*
  node := "(" var? (":" LABEL)? props? ")"
  rel := "-[" (":" EDGETYPE)? "]->" | "<-[" (":" EDGETYPE)? "]-"
  props := "{" key ":" string ("," key ":" string)* "}"
  item := var | var "." key | "count(*)"
  expr := comparison (("AND"|"OR") comparison)* | "NOT" expr | "(" expr ")"
  comparison := var "." key ("="|"<>"|"CONTAINS"|"STARTS WITH"|"ENDS WITH") string"""


def _translator_system(schema: str) -> str:
    return (
        "You translate natural-language retrieval requests into graph queries.\n\n"
        f"{_TRANSLATOR_GRAMMAR}\n\n"
        "Use only labels, edge types, and properties from this schema:\n\n"
        f"{schema}\n"
        "Reply with the query text only. No explanation, no code fences."
    )


def _strip_fences(text: str) -> str:
    text = text.strip()
    match = re.search(r"```(?:\w+)?\n(.*?)```", text, re.DOTALL)
    if match:
        text = match.group(1)
    return text.strip().strip("`").strip()


def translate(
    nl_query: str,
    schema: str,
    backend,
    retries: int,
    params: dict | None = None,
    usage: TokenUsage | None = None,
) -> str:
    """NL query -> graph query text that is guaranteed to parse.

    Parser/validation errors are fed back to the translation agent; after
    `retries` additional attempts the last error surfaces as
    TranslationFailed.
    """
    params = params or {"temperature": 0.0}
    messages = [
        {"role": "system", "content": _translator_system(schema)},
        {"role": "user", "content": nl_query},
    ]
    attempts = 0
    while True:
        reply = backend.send(messages, params)
        if usage is not None:
            usage.add("translator", reply, messages)
        attempts += 1
        candidate = _strip_fences(reply.content)
        try:
            parse_query(candidate)
            return candidate
        except QueryError as exc:
            if attempts > retries:
                raise TranslationFailed(last_error=str(exc), attempts=attempts) from exc
            messages.append({"role": "assistant", "content": reply.content})
            messages.append(
                {
                    "role": "user",
                    "content": (
                        f"That query failed: {exc}. "
                        "Reply with a corrected query only."
                    ),
                }
            )


# --- primary loop -------------------------------------------------------------


@dataclass
class _PrimaryAction:
    kind: str  # finish | queries
    answer: str = ""
    queries: tuple[str, ...] = ()


def _parse_primary(content: str) -> "_PrimaryAction | None":
    for match in re.finditer(r"```(?:\w+)?\n(.*?)```", content, re.DOTALL):
        block = match.group(1).strip()
        result = _parse_tagged(block)
        if result is not None:
            return result
    # lenient fallback: an unfenced tag at the start of a line
    return _parse_tagged(content.strip())


def _parse_tagged(block: str) -> "_PrimaryAction | None":
    match = re.match(r"\s*(FINISH|QUERIES)\s*:\s*", block, re.IGNORECASE)
    if not match:
        return None
    tag = match.group(1).upper()
    rest = block[match.end() :].strip()
    if tag == "FINISH":
        return _PrimaryAction(kind="finish", answer=rest)
    queries = tuple(line.strip() for line in rest.splitlines() if line.strip())
    if not queries:
        return None
    return _PrimaryAction(kind="queries", queries=queries)


def send_message(
    session: Session,
    task: str,
    handle: GraphHandle,
    backend,
    config: AgentConfig,
    schema: str | None = None,
) -> str:
    """Run the round loop for one user message; returns the final answer.

    The session accumulates transcript, issued queries, and token usage;
    calling again continues the same conversation.
    """
    schema = schema if schema is not None else _schema_text()
    strategy = config.effective_strategy()
    params = {"temperature": config.temperature}
    # conversation = [system, user(original task), *history]; a follow-up
    # message enters as one more user turn in the history
    prior = [
        (t.role if t.role != "result" else "user", t.content)
        for t in session.transcript
    ]
    history: list[tuple[str, str]] = prior[1:] + [("user", task)] if prior else []
    session.transcript.append(Turn(role="user", content=task, round=session.rounds))

    def call_primary(messages: list[dict]) -> BackendReply:
        try:
            reply = backend.send(messages, params)
        except BackendError as exc:
            raise BackendError(str(exc), session=session) from exc
        session.usage.add("primary", reply, messages)
        return reply

    answer: str | None = None
    for _ in range(config.max_rounds):
        session.rounds += 1
        round_no = session.rounds
        messages = build_prompt(config.app_preset, session.task, schema, history)
        reply = call_primary(messages)
        action = _parse_primary(reply.content)
        attempts = 0
        while action is None and attempts < REFORMAT_ATTEMPTS:
            attempts += 1
            correction = (
                "Your reply did not match the output contract. Respond with "
                "exactly one fenced block starting with FINISH: or QUERIES:."
            )
            retry_history = history + [
                ("assistant", reply.content),
                ("user", correction),
            ]
            messages = build_prompt(config.app_preset, session.task, schema, retry_history)
            reply = call_primary(messages)
            action = _parse_primary(reply.content)
        if action is None:
            raise ProtocolError(
                f"primary agent violated the output contract after "
                f"{REFORMAT_ATTEMPTS} reformat attempts"
            )

        session.transcript.append(
            Turn(role="assistant", content=reply.content, round=round_no)
        )
        history.append(("assistant", reply.content))

        if action.kind == "finish":
            answer = action.answer
            break

        queries = list(action.queries)
        notes: list[str] = []
        if strategy == "single" and len(queries) > 1:
            notes.append(
                f"Strategy is single-query: executed only the first of your "
                f"{len(queries)} queries. Issue one query per round."
            )
            queries = queries[:1]
        elif len(queries) > config.max_queries_per_round:
            notes.append(
                f"Executed only the first {config.max_queries_per_round} of "
                f"your {len(queries)} queries (per-round cap)."
            )
            queries = queries[: config.max_queries_per_round]

        per_query_budget = max(config.result_char_budget // max(len(queries), 1), 200)
        parts: list[str] = []
        for nl_query in queries:
            parts.append(
                _run_one_query(
                    session, nl_query, handle, backend, config, schema,
                    params, per_query_budget,
                )
            )
        combined = "\n\n".join(parts + notes)
        session.transcript.append(Turn(role="result", content=combined, round=round_no))
        history.append(("user", combined))

    if answer is None:
        # round budget exhausted: force an answer from gathered context
        force = (
            "You have used all retrieval rounds. Answer the task now from "
            "the gathered context. Reply with a FINISH: block."
        )
        messages = build_prompt(
            config.app_preset, session.task, schema, history + [("user", force)]
        )
        reply = call_primary(messages)
        action = _parse_primary(reply.content)
        session.transcript.append(
            Turn(role="assistant", content=reply.content, round=session.rounds)
        )
        if action is not None and action.kind == "finish":
            answer = action.answer
        else:
            answer = reply.content.strip()

    session.answer = answer
    return answer


def _run_one_query(
    session: Session,
    nl_query: str,
    handle: GraphHandle,
    backend,
    config: AgentConfig,
    schema: str,
    params: dict,
    char_budget: int,
) -> str:
    try:
        graph_query = translate(
            nl_query,
            schema,
            backend,
            config.translate_retries,
            params=params,
            usage=session.usage,
        )
    except BackendError as exc:
        raise BackendError(str(exc), session=session) from exc
    except TranslationFailed as exc:
        session.issued_queries.append(
            IssuedQuery(nl_query=nl_query, graph_query=None, status="translation_failed")
        )
        return (
            f"Query: {nl_query}\n"
            f"Could not be translated into an executable graph query "
            f"({exc.last_error}). Rephrase it in terms of the schema."
        )
    table = execute(
        parse_query(graph_query),
        handle,
        ExecutionCaps(max_chars=char_budget),
    )
    rendered = render_result(table, char_budget)
    session.issued_queries.append(
        IssuedQuery(nl_query=nl_query, graph_query=graph_query, status="ok")
    )
    return f"Query: {nl_query}\nCypher: {graph_query}\n{rendered}"


def run_session(
    task: str,
    handle: GraphHandle,
    backend,
    config: AgentConfig | None = None,
    session_id: str | None = None,
) -> tuple[str, Session]:
    """One-shot session: create, run the loop for `task`, return the answer."""
    config = config or AgentConfig()
    session = Session.new(task, config, session_id=session_id)
    answer = send_message(session, task, handle, backend, config)
    return answer, session
