"""Multi-agent natural-language query pipeline.

One session flows route -> generate SQL -> safety gate -> execute ->
(bounded repair loop) -> validate against intent -> summarize. SQL
never reaches the database without an `allowed` safety verdict, write
statements are denied unconditionally, and every session, success or
failure, ends with exactly one audit entry.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .kb import (
    ExecutionError,
    KnowledgeBase,
    RowSet,
    export_rows,
)
from .llm import ChatClient, TransportError
from .safety import SafetyVerdict, safety_check


class Intent(str, Enum):
    AGGREGATE = "aggregate"
    DETAIL = "detail"
    UNSUPPORTED = "unsupported"


ROLES = ("router", "generator", "repairer", "validator", "summarizer", "learner")


@dataclass(frozen=True)
class ModelRoute:
    """Per agent role: which client/model serves it. Every role must be
    mapped; stronger models belong on generator/repairer."""

    clients: dict[str, ChatClient]
    models: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [r for r in ROLES if r not in self.clients]
        if missing:
            raise ValueError(f"model route missing roles: {missing}")

    def client(self, role: str) -> ChatClient:
        return self.clients[role]

    def model(self, role: str) -> str:
        return self.models.get(role, "")

    @classmethod
    def uniform(cls, client: ChatClient, model: str = "") -> "ModelRoute":
        return cls(
            clients={role: client for role in ROLES},
            models={role: model for role in ROLES},
        )


@dataclass(frozen=True)
class SessionLimits:
    max_repair_rounds: int = 3
    row_cap: int = 10_000
    statement_timeout_s: float = 30.0


@dataclass
class SqlCandidate:
    sql: str
    origin: str  # "generated" | "repaired"
    safety: SafetyVerdict | None = None
    outcome: str = ""  # "executed" | "denied" | "error"
    error: str = ""


@dataclass
class QuerySession:
    id: str
    user_query: str
    intent: Intent | None = None
    candidates: list[SqlCandidate] = field(default_factory=list)
    result: RowSet | None = None
    validation: str = ""  # "aligned" | "mismatch: <reason>"
    answer: object = None
    export_id: str | None = None
    export_path: str | None = None
    summary_text: str = ""
    succeeded: bool = False
    failure_reason: str = ""
    audit_entry_id: int | None = None
    started_at: float = field(default_factory=time.time)
    duration_ms: float = 0.0

    @property
    def executed_sql(self) -> str | None:
        for c in reversed(self.candidates):
            if c.outcome == "executed":
                return c.sql
        return None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "user_query": self.user_query,
            "intent": self.intent.value if self.intent else None,
            "candidates": [
                {
                    "sql": c.sql,
                    "origin": c.origin,
                    "safety": c.safety.to_dict() if c.safety else None,
                    "outcome": c.outcome,
                    "error": c.error,
                }
                for c in self.candidates
            ],
            "result": {
                "columns": list(self.result.columns),
                "row_count": self.result.row_count,
                "truncated": self.result.truncated,
            }
            if self.result
            else None,
            "validation": self.validation,
            "answer": self.answer,
            "export_id": self.export_id,
            "summary": self.summary_text,
            "succeeded": self.succeeded,
            "failure_reason": self.failure_reason,
            "audit_entry_id": self.audit_entry_id,
            "duration_ms": self.duration_ms,
        }


class GenerationError(Exception):
    pass


_DESTRUCTIVE_QUERY_RE = re.compile(
    r"\b(delete|drop|truncate|remove|erase|wipe|overwrite|update|insert|modify)\b",
    re.IGNORECASE,
)
_AGGREGATE_HINT_RE = re.compile(
    r"\b(how many|count|number of|total|average|mean|maximum|minimum|highest|lowest|sum)\b",
    re.IGNORECASE,
)


def route(query: str, client: ChatClient, model: str = "") -> Intent:
    """Classify the query's intent. Write intent is never serviceable,
    and an unparseable model answer falls back to a deterministic
    interrogative heuristic."""
    if _DESTRUCTIVE_QUERY_RE.search(query):
        return Intent.UNSUPPORTED
    prompt = [
        {
            "role": "system",
            "content": (
                "Classify the user's database question. Answer with exactly one "
                "word: 'aggregate' when the answer is a single number, 'detail' "
                "when the answer is a set of rows to export, or 'unsupported' "
                "when the request cannot be answered by a read-only query."
            ),
        },
        {"role": "user", "content": query},
    ]
    try:
        raw = client.complete(prompt, model=model).strip().lower()
    except TransportError:
        raw = ""
    for intent in Intent:
        if raw.startswith(intent.value):
            return intent
    return Intent.AGGREGATE if _AGGREGATE_HINT_RE.search(query) else Intent.DETAIL


_SQL_FENCE_RE = re.compile(r"```(?:sql)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def _extract_sql(raw: str) -> str:
    m = _SQL_FENCE_RE.search(raw)
    text = m.group(1) if m else raw
    return text.strip().rstrip(";").strip()


def generate_sql(
    query: str,
    schema_info: str,
    examples: list[dict],
    client: ChatClient,
    model: str = "",
    retries: int = 1,
) -> str:
    """Ask the generator for one SQL statement; fences and prose are
    stripped. Stored examples, when provided, condition the prompt."""
    example_block = ""
    if examples:
        pairs = "\n\n".join(
            f"Question: {e['query_text']}\nSQL: {e['sql']}" for e in examples
        )
        example_block = f"\n\nValidated examples of similar queries:\n{pairs}"
    prompt = [
        {
            "role": "system",
            "content": (
                "You translate questions about a 2D-materials knowledge base into "
                "a single read-only SQL SELECT statement. Return only the SQL.\n\n"
                f"Schema:\n{schema_info}{example_block}"
            ),
        },
        {"role": "user", "content": query},
    ]
    for attempt in range(retries + 1):
        try:
            raw = client.complete(prompt, model=model)
        except TransportError as exc:
            if attempt == retries:
                raise GenerationError(f"generator unreachable: {exc}") from exc
            continue
        sql = _extract_sql(raw)
        if sql:
            return sql
    raise GenerationError("generator returned empty output after retry")


def repair_sql(
    query: str,
    failed_sql: str,
    error_text: str,
    schema_info: str,
    client: ChatClient,
    model: str = "",
) -> str:
    """One repair round: the model sees the original question, the failed
    SQL, the verbatim backend error, and the schema."""
    prompt = [
        {
            "role": "system",
            "content": (
                "A SQL statement failed. Produce a corrected single read-only "
                "SELECT statement. Return only the SQL.\n\n"
                f"Schema:\n{schema_info}"
            ),
        },
        {
            "role": "user",
            "content": (
                f"Question: {query}\nFailed SQL: {failed_sql}\n"
                f"Database error: {error_text}"
            ),
        },
    ]
    try:
        raw = client.complete(prompt, model=model)
    except TransportError as exc:
        raise GenerationError(f"repairer unreachable: {exc}") from exc
    sql = _extract_sql(raw)
    if not sql:
        raise GenerationError("repairer returned empty output")
    return sql


def validate_result(
    query: str,
    intent: Intent,
    result: RowSet,
    client: ChatClient,
    model: str = "",
) -> str:
    """Structural check first (an aggregate answer must be a 1x1 numeric
    result), then a model confirmation. Returns "aligned" or
    "mismatch: <reason>"."""
    if intent is Intent.AGGREGATE:
        if result.row_count != 1 or len(result.columns) != 1:
            return (
                "mismatch: shape "
                f"({result.row_count} rows x {len(result.columns)} cols, expected 1x1)"
            )
        value = result.rows[0][0]
        if not isinstance(value, (int, float)):
            return f"mismatch: non-numeric aggregate value {value!r}"
    preview = {
        "columns": list(result.columns),
        "row_count": result.row_count,
        "rows": [list(r) for r in result.rows[:5]],
    }
    prompt = [
        {
            "role": "system",
            "content": (
                "Decide whether the query result plausibly answers the user's "
                "question. Answer 'aligned' or 'mismatch: <reason>'."
            ),
        },
        {
            "role": "user",
            "content": f"Question: {query}\nIntent: {intent.value}\nResult: {json.dumps(preview)}",
        },
    ]
    try:
        raw = client.complete(prompt, model=model).strip()
    except TransportError:
        return "aligned"  # structural checks passed; validator outage is not fatal
    low = raw.lower()
    if low.startswith("mismatch") or low.startswith("no"):
        reason = raw.split(":", 1)[1].strip() if ":" in raw else raw
        return f"mismatch: {reason}"
    return "aligned"


def result_fingerprint(result: RowSet) -> str:
    payload = json.dumps(
        {"columns": list(result.columns), "rows": [list(r) for r in result.rows]},
        sort_keys=True,
        default=str,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
    return f"{digest}:{result.row_count}x{len(result.columns)}"


@dataclass
class SessionConfig:
    kb: KnowledgeBase
    route: ModelRoute
    limits: SessionLimits = field(default_factory=SessionLimits)
    export_dir: Path = Path("exports")
    examples: list[dict] = field(default_factory=list)


def run_session(query: str, config: SessionConfig) -> QuerySession:
    """Run one full guarded query session. Internal failures are captured
    in the session; the audit entry is always written."""
    session = QuerySession(id=uuid.uuid4().hex, user_query=query)
    kb, limits, mroute = config.kb, config.limits, config.route
    try:
        _run_session_inner(session, query, config)
    except Exception as exc:  # defensive: nothing may escape a session
        session.succeeded = False
        if not session.failure_reason:
            session.failure_reason = f"internal error: {exc}"
    session.duration_ms = (time.time() - session.started_at) * 1000.0
    executed = session.executed_sql
    session.audit_entry_id = kb.append_audit(
        {
            "session_id": session.id,
            "user_query": query,
            "intent": session.intent.value if session.intent else None,
            "sql": executed,
            "outcome": "success" if session.succeeded else "failure",
            "failure_reason": session.failure_reason or None,
            "result_fingerprint": result_fingerprint(session.result)
            if session.result
            else None,
            "row_count": session.result.row_count if session.result else None,
            "duration_ms": session.duration_ms,
            "trace": session.to_dict(),
        }
    )
    return session


def _run_session_inner(session: QuerySession, query: str, config: SessionConfig) -> None:
    kb, limits, mroute = config.kb, config.limits, config.route

    session.intent = route(query, mroute.client("router"), mroute.model("router"))
    if session.intent is Intent.UNSUPPORTED:
        session.failure_reason = "unsupported intent"
        return

    schema_info = kb.schema_info()
    try:
        sql = generate_sql(
            query,
            schema_info,
            config.examples,
            mroute.client("generator"),
            mroute.model("generator"),
        )
    except GenerationError as exc:
        session.failure_reason = str(exc)
        return

    candidate = SqlCandidate(sql=sql, origin="generated")
    session.candidates.append(candidate)
    repair_rounds = 0
    result: RowSet | None = None

    while True:
        candidate.safety = safety_check(candidate.sql)
        if not candidate.safety.allowed:
            candidate.outcome = "denied"
            candidate.error = candidate.safety.reason
        else:
            try:
                result = kb.read_query(
                    candidate.sql,
                    row_cap=limits.row_cap,
                    timeout_s=limits.statement_timeout_s,
                )
                candidate.outcome = "executed"
                break
            except ExecutionError as exc:
                candidate.outcome = "error"
                candidate.error = str(exc)
        if repair_rounds >= limits.max_repair_rounds:
            session.failure_reason = (
                f"repair rounds exhausted; last error: {candidate.error}"
            )
            return
        repair_rounds += 1
        try:
            fixed = repair_sql(
                query,
                candidate.sql,
                candidate.error,
                schema_info,
                mroute.client("repairer"),
                mroute.model("repairer"),
            )
        except GenerationError as exc:
            session.failure_reason = str(exc)
            return
        candidate = SqlCandidate(sql=fixed, origin="repaired")
        session.candidates.append(candidate)

    session.result = result
    session.validation = validate_result(
        query,
        session.intent,
        result,
        mroute.client("validator"),
        mroute.model("validator"),
    )
    if session.validation != "aligned":
        session.failure_reason = session.validation
        return

    summarize(session, config)


def summarize(session: QuerySession, config: SessionConfig) -> None:
    """Aggregate sessions answer with the scalar; detail sessions export
    a CSV file referenced by id."""
    result = session.result
    assert result is not None
    mroute = config.route
    if session.intent is Intent.AGGREGATE:
        session.answer = result.rows[0][0]
    else:
        export_id = uuid.uuid4().hex
        config.export_dir.mkdir(parents=True, exist_ok=True)
        try:
            path = export_rows(result, Path(config.export_dir) / f"{export_id}.csv")
        except Exception as exc:
            session.failure_reason = f"export failed: {exc}"
            return
        session.export_id = export_id
        session.export_path = str(path)
    try:
        raw = mroute.client("summarizer").complete(
            [
                {
                    "role": "system",
                    "content": "Summarize the query outcome in one short sentence.",
                },
                {
                    "role": "user",
                    "content": (
                        f"Question: {session.user_query}\n"
                        f"Intent: {session.intent.value}\n"
                        f"Answer: {session.answer if session.answer is not None else f'{result.row_count} exported rows'}"
                    ),
                },
            ],
            model=mroute.model("summarizer"),
        )
        session.summary_text = raw.strip()
    except TransportError:
        session.summary_text = ""
    session.succeeded = True
