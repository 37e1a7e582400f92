import json

import pytest

from codegraph.agent import (
    AgentConfig,
    BackendError,
    ConfigError,
    ProtocolError,
    ScriptedChatBackend,
    Session,
    TranslationFailed,
    build_prompt,
    run_session,
    send_message,
    translate,
)
from codegraph.graph_schema import NodeLabel, schema_text
from codegraph.query_engine import execute, parse_query


def fenced(tag: str, body: str) -> str:
    return f"```\n{tag}:\n{body}\n```"


def reply(content: str, prompt=0, completion=0) -> dict:
    return {"content": content, "prompt_tokens": prompt, "completion_tokens": completion}


ENGINE_QUERY = 'MATCH (c:CLASS {name: "Engine"})-[:HAS_METHOD]->(m:METHOD) RETURN m.name'


class TestBuildPrompt:
    def test_chat_prompt_contains_schema_labels(self):
        messages = build_prompt("chat", "What is here?", schema_text(), [])
        system = messages[0]["content"]
        for label in NodeLabel:
            assert label.value in system

    def test_empty_history_two_messages(self):
        messages = build_prompt("chat", "task text", schema_text(), [])
        assert [m["role"] for m in messages] == ["system", "user"]
        assert messages[1]["content"] == "task text"

    def test_unittestor_mentions_inheritance_retrieval(self):
        messages = build_prompt(
            "unittestor", "Generate test cases for TaskManager", schema_text(), []
        )
        assert "methods and inheritance relationships" in messages[0]["content"]

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            build_prompt("poet", "task", schema_text(), [])

    def test_history_appended_in_order(self):
        history = [("assistant", "one"), ("user", "two")]
        messages = build_prompt("chat", "task", schema_text(), history)
        assert [m["content"] for m in messages[2:]] == ["one", "two"]


class TestTranslate:
    def test_valid_first_try(self, alpha_handle):
        backend = ScriptedChatBackend([reply(ENGINE_QUERY, 10, 5)])
        text = translate("methods of Engine", schema_text(), backend, retries=3)
        assert text == ENGINE_QUERY
        assert len(backend.calls) == 1

    def test_execution_equivalence_on_fixture(self, alpha_handle):
        backend = ScriptedChatBackend([reply(ENGINE_QUERY)])
        translated = translate("Find all methods of class Engine", schema_text(), backend, 0)
        rows = execute(parse_query(translated), alpha_handle).rows
        reference = execute(parse_query(ENGINE_QUERY), alpha_handle).rows
        assert rows == reference
        assert [r[0] for r in rows] == ["__init__", "run", "stop"]

    def test_retry_after_invalid(self):
        backend = ScriptedChatBackend([reply("MATCH (c:KLASS) RETURN c"), reply(ENGINE_QUERY)])
        text = translate("methods of Engine", schema_text(), backend, retries=3)
        assert text == ENGINE_QUERY
        assert len(backend.calls) == 2
        # the parser error was fed back to the translator
        feedback = backend.calls[1][-1]["content"]
        assert "KLASS" in feedback

    def test_zero_retries_fail_fast(self):
        backend = ScriptedChatBackend([reply("garbage ((")])
        with pytest.raises(TranslationFailed) as err:
            translate("anything", schema_text(), backend, retries=0)
        assert err.value.attempts == 1

    def test_exhaustion_after_retries(self):
        bad = reply("MATCH (c:KLASS) RETURN c")
        backend = ScriptedChatBackend([bad, bad, bad])
        with pytest.raises(TranslationFailed) as err:
            translate("anything", schema_text(), backend, retries=2)
        assert err.value.attempts == 3
        assert "KLASS" in err.value.last_error

    def test_fence_stripping(self):
        backend = ScriptedChatBackend([reply(f"```cypher\n{ENGINE_QUERY}\n```")])
        assert translate("q", schema_text(), backend, 0) == ENGINE_QUERY


class TestRunSession:
    def script_two_rounds(self):
        return [
            reply(fenced("QUERIES", "classes in module pkg.core"), 100, 20),
            reply('MATCH (m:MODULE {name: "pkg.core"})-[:CONTAINS]->(c:CLASS) RETURN c.name', 40, 25),
            reply(fenced("FINISH", "The classes are Base and Engine."), 150, 12),
        ]

    def test_two_round_session(self, alpha_handle):
        backend = ScriptedChatBackend(self.script_two_rounds())
        config = AgentConfig(strategy="single")
        answer, session = run_session("Which classes?", alpha_handle, backend, config)
        assert answer == "The classes are Base and Engine."
        assert session.rounds == 2
        assert len(session.issued_queries) == 1
        assert session.issued_queries[0].status == "ok"
        result_turns = [t for t in session.transcript if t.role == "result"]
        assert "Base" in result_turns[0].content and "Engine" in result_turns[0].content

    def test_transcript_byte_identical(self, alpha_handle):
        config = AgentConfig(strategy="single")
        runs = []
        for _ in range(2):
            backend = ScriptedChatBackend(self.script_two_rounds())
            _, session = run_session("Which classes?", alpha_handle, backend, config)
            runs.append(session.transcript_jsonl())
        assert runs[0] == runs[1]

    def test_scripted_usage_totals_exact(self, alpha_handle):
        backend = ScriptedChatBackend(self.script_two_rounds())
        _, session = run_session(
            "Which classes?", alpha_handle, backend, AgentConfig(strategy="single")
        )
        assert session.usage.prompt_tokens == 290
        assert session.usage.completion_tokens == 57
        assert session.usage.by_role["primary"] == {"prompt": 250, "completion": 32}
        assert session.usage.by_role["translator"] == {"prompt": 40, "completion": 25}
        assert not session.usage.approximate

    def test_single_strategy_executes_first_only(self, alpha_handle):
        backend = ScriptedChatBackend(
            [
                reply(fenced("QUERIES", "first query\nsecond query\nthird query")),
                reply("MATCH (c:CLASS) RETURN c.name"),
                reply(fenced("FINISH", "done")),
            ]
        )
        config = AgentConfig(strategy="single")
        _, session = run_session("task", alpha_handle, backend, config)
        assert len(session.issued_queries) == 1
        correction = [t for t in session.transcript if t.role == "result"][0].content
        assert "single-query" in correction

    def test_multiple_strategy_runs_each(self, alpha_handle):
        backend = ScriptedChatBackend(
            [
                reply(fenced("QUERIES", "all classes\nall modules")),
                reply("MATCH (c:CLASS) RETURN c.name"),
                reply("MATCH (m:MODULE) RETURN m.name"),
                reply(fenced("FINISH", "done")),
            ]
        )
        _, session = run_session("task", alpha_handle, backend, AgentConfig(strategy="multiple"))
        assert [q.status for q in session.issued_queries] == ["ok", "ok"]

    def test_max_rounds_forces_answer(self, alpha_handle):
        backend = ScriptedChatBackend(
            [
                reply(fenced("QUERIES", "all classes")),
                reply("MATCH (c:CLASS) RETURN c.name"),
                reply(fenced("FINISH", "forced summary")),
            ]
        )
        config = AgentConfig(strategy="single", max_rounds=1)
        answer, session = run_session("task", alpha_handle, backend, config)
        assert answer == "forced summary"
        assert session.rounds == 1
        force_request = backend.calls[-1][-1]["content"]
        assert "all retrieval rounds" in force_request

    def test_round_count_never_exceeds_cap(self, alpha_handle):
        script = []
        for _ in range(10):
            script.append(reply(fenced("QUERIES", "all classes")))
            script.append(reply("MATCH (c:CLASS) RETURN c.name"))
        script.append(reply(fenced("FINISH", "stopped")))
        backend = ScriptedChatBackend(script)
        config = AgentConfig(strategy="single", max_rounds=3)
        _, session = run_session("task", alpha_handle, backend, config)
        assert session.rounds == 3
        assert len(session.issued_queries) == 3

    def test_translation_failure_enters_context(self, alpha_handle):
        bad = reply("not a query ((")
        backend = ScriptedChatBackend(
            [
                reply(fenced("QUERIES", "something untranslatable")),
                bad,
                bad,
                reply(fenced("FINISH", "gave up")),
            ]
        )
        config = AgentConfig(strategy="single", translate_retries=1)
        answer, session = run_session("task", alpha_handle, backend, config)
        assert answer == "gave up"
        assert session.issued_queries[0].status == "translation_failed"
        result = [t for t in session.transcript if t.role == "result"][0].content
        assert "Could not be translated" in result

    def test_protocol_error_after_reformat_attempts(self, alpha_handle):
        nonsense = reply("no fenced block here")
        backend = ScriptedChatBackend([nonsense, nonsense, nonsense])
        with pytest.raises(ProtocolError):
            run_session("task", alpha_handle, backend, AgentConfig())

    def test_reformat_recovers(self, alpha_handle):
        backend = ScriptedChatBackend(
            [
                reply("just chatting, no block"),
                reply(fenced("FINISH", "recovered")),
            ]
        )
        answer, session = run_session("task", alpha_handle, backend, AgentConfig())
        assert answer == "recovered"
        correction = backend.calls[1][-1]["content"]
        assert "output contract" in correction

    def test_backend_exhaustion_preserves_session(self, alpha_handle):
        backend = ScriptedChatBackend([reply(fenced("QUERIES", "all classes")),
                                       reply("MATCH (c:CLASS) RETURN c.name")])
        with pytest.raises(BackendError) as err:
            run_session("task", alpha_handle, backend, AgentConfig(strategy="single"))
        assert err.value.session is not None
        assert err.value.session.issued_queries[0].status == "ok"

    def test_continued_session_keeps_history(self, alpha_handle):
        config = AgentConfig(strategy="single")
        backend = ScriptedChatBackend(
            [
                reply(fenced("FINISH", "first answer")),
                reply(fenced("FINISH", "second answer")),
            ]
        )
        session = Session.new("first question", config)
        send_message(session, "first question", alpha_handle, backend, config)
        send_message(session, "second question", alpha_handle, backend, config)
        final_messages = backend.calls[-1]
        contents = [m["content"] for m in final_messages]
        assert "first question" in contents
        assert "second question" in contents
        assert session.rounds == 2

    def test_debugger_preset_defaults_to_single(self):
        assert AgentConfig(app_preset="debugger").effective_strategy() == "single"
        assert AgentConfig(app_preset="chat").effective_strategy() == "multiple"

    def test_approximate_usage_flagged(self, alpha_handle):
        backend = ScriptedChatBackend([fenced("FINISH", "plain string reply")])
        _, session = run_session("task", alpha_handle, backend, AgentConfig())
        assert session.usage.approximate
        assert session.usage.completion_tokens > 0


class TestSessionSerialization:
    def test_transcript_jsonl_valid(self, alpha_handle):
        backend = ScriptedChatBackend([reply(fenced("FINISH", "answer text"))])
        _, session = run_session("task", alpha_handle, backend, AgentConfig())
        for line in session.transcript_jsonl().strip().splitlines():
            record = json.loads(line)
            assert set(record) == {"round", "role", "content"}

    def test_to_json_shape(self, alpha_handle):
        backend = ScriptedChatBackend([reply(fenced("FINISH", "answer text"))])
        _, session = run_session("task", alpha_handle, backend, AgentConfig())
        payload = session.to_json()
        assert payload["answer"] == "answer text"
        assert payload["usage"]["prompt_tokens"] == 0
        assert payload["transcript"][0]["role"] == "user"
