"""Query-focused learning repository and the three-tier benchmark.

Successful sessions can be stored as (query text, key fields, validated
SQL) examples, either automatically (active mode, model-judged) or on
user opt-in (passive mode). Retrieval ranks stored examples by text
similarity to the incoming query and feeds them to the SQL generator.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .agents import (
    Intent,
    QuerySession,
    SessionConfig,
    result_fingerprint,
    run_session,
)
from .kb import KnowledgeBase
from .llm import ChatClient, TransportError
from .safety import referenced_key_fields, safety_check
from .similarity import normalize_text, text_similarity


class ExemplarError(Exception):
    pass


@dataclass(frozen=True)
class ExampleEntry:
    id: int
    query_text: str
    key_fields: tuple[str, ...]
    sql: str
    result_fingerprint: str
    mode: str  # "active" | "passive"
    created_at: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "query_text": self.query_text,
            "key_fields": list(self.key_fields),
            "sql": self.sql,
            "result_fingerprint": self.result_fingerprint,
            "mode": self.mode,
            "created_at": self.created_at,
        }


class ExampleStore:
    def __init__(self, kb: KnowledgeBase):
        self.kb = kb

    def judge_learning_value(
        self, session: QuerySession, client: ChatClient, model: str = ""
    ) -> tuple[bool, str]:
        """Model-mediated store/skip decision. A session whose SQL already
        exists in the repository is denied deterministically."""
        if not session.succeeded:
            raise ExemplarError("judge_learning_value requires a successful session")
        sql = session.executed_sql or ""
        for entry in self.kb.all_examples():
            if entry["sql"] == sql:
                return False, "duplicate: SQL already stored"
        prompt = [
            {
                "role": "system",
                "content": (
                    "Decide whether this successful database query is worth "
                    "storing as a reusable example (novel phrasing, useful "
                    "field mapping). Answer 'store: <why>' or 'skip: <why>'."
                ),
            },
            {
                "role": "user",
                "content": f"Question: {session.user_query}\nSQL: {sql}",
            },
        ]
        try:
            raw = client.complete(prompt, model=model).strip()
        except TransportError:
            return False, "judge unreachable"
        low = raw.lower()
        rationale = raw.split(":", 1)[1].strip() if ":" in raw else raw
        return low.startswith("store") or low.startswith("yes"), rationale

    def store_example(self, session: QuerySession, mode: str = "passive") -> ExampleEntry:
        """Persist a successful, validated session. Storing the same
        (query, sql) again is a no-op returning the existing entry."""
        if not session.succeeded or session.result is None:
            raise ExemplarError("only successful validated sessions can be stored")
        sql = session.executed_sql
        if sql is None:
            raise ExemplarError("session has no executed SQL")
        verdict = safety_check(sql)
        if not verdict.allowed:
            raise ExemplarError(f"refusing to store unsafe SQL: {verdict.reason}")
        key_fields = referenced_key_fields(sql, self.kb.schema_columns())
        entry_id = self.kb.insert_example(
            {
                "query_text": session.user_query,
                "normalized_query": normalize_text(session.user_query),
                "key_fields": key_fields,
                "sql": sql,
                "result_fingerprint": result_fingerprint(session.result),
                "row_count": session.result.row_count,
                "col_count": len(session.result.columns),
                "mode": mode,
                "created_at": time.time(),
            }
        )
        return ExampleEntry(
            id=entry_id,
            query_text=session.user_query,
            key_fields=tuple(key_fields),
            sql=sql,
            result_fingerprint=result_fingerprint(session.result),
            mode=mode,
            created_at=time.time(),
        )

    def retrieve_examples(self, query: str, k: int) -> list[ExampleEntry]:
        """Top-k stored examples by text similarity to the query,
        descending; ties broken by recency. Entries whose SQL no longer
        passes the safety gate are dropped (defense in depth)."""
        if k < 0:
            raise ValueError("k must be >= 0")
        if k == 0:
            return []
        scored = []
        for entry in self.kb.all_examples():
            if not safety_check(entry["sql"]).allowed:
                continue
            sim = text_similarity(query, entry["query_text"])
            scored.append((sim, entry["created_at"], entry["id"], entry))
        scored.sort(key=lambda t: (-t[0], -t[1], -t[2]))
        return [
            ExampleEntry(
                id=e["id"],
                query_text=e["query_text"],
                key_fields=tuple(e["key_fields"]),
                sql=e["sql"],
                result_fingerprint=e["result_fingerprint"],
                mode=e["mode"],
                created_at=e["created_at"],
            )
            for _, _, _, e in scored[:k]
        ]


# -- benchmark --------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkQuestion:
    tier: str  # "simple" | "medium" | "complex"
    question: str
    oracle_sql: str


@dataclass(frozen=True)
class BenchmarkSuite:
    questions: tuple[BenchmarkQuestion, ...]

    def __post_init__(self) -> None:
        tiers = {q.tier for q in self.questions}
        for tier in ("simple", "medium", "complex"):
            if tier not in tiers:
                raise ValueError(f"benchmark suite missing tier: {tier}")

    def by_tier(self) -> dict[str, list[BenchmarkQuestion]]:
        out: dict[str, list[BenchmarkQuestion]] = {"simple": [], "medium": [], "complex": []}
        for q in self.questions:
            out[q.tier].append(q)
        return out

    def to_json(self) -> str:
        return json.dumps(
            [
                {"tier": q.tier, "question": q.question, "oracle_sql": q.oracle_sql}
                for q in self.questions
            ],
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkSuite":
        return cls(
            questions=tuple(
                BenchmarkQuestion(d["tier"], d["question"], d["oracle_sql"])
                for d in json.loads(text)
            )
        )


def generate_suite(kb: KnowledgeBase, per_tier: int = 20) -> BenchmarkSuite:
    """Generate a three-tier suite over the seeded knowledge base.
    Simple: single-table counts. Medium: filtered selects requiring
    export. Complex: joins with aggregation, arithmetic, and sorting.
    Expected answers come from oracle SQL run directly, never hand-typed."""
    materials = [
        r[0]
        for r in kb.read_query(
            "SELECT DISTINCT material_name FROM performance_records ORDER BY material_name"
        ).rows
    ]
    parameters = [
        r[0]
        for r in kb.read_query(
            "SELECT DISTINCT parameter FROM performance_records ORDER BY parameter"
        ).rows
    ]
    methods = [
        r[0]
        for r in kb.read_query(
            "SELECT DISTINCT method_name FROM synthesis_records ORDER BY method_name"
        ).rows
    ]
    questions: list[BenchmarkQuestion] = []

    simple_templates = [
        (
            "how many performance records are there in total",
            "SELECT COUNT(*) FROM performance_records",
        ),
        (
            "how many synthesis records are there in total",
            "SELECT COUNT(*) FROM synthesis_records",
        ),
        ("how many articles are stored", "SELECT COUNT(*) FROM articles"),
    ]
    for m in materials:
        simple_templates.append(
            (
                f"how many performance records exist for {m}",
                f"SELECT COUNT(*) FROM performance_records WHERE material_name = '{_q(m)}'",
            )
        )
    for p in parameters:
        simple_templates.append(
            (
                f"how many records report the parameter {p}",
                f"SELECT COUNT(*) FROM performance_records WHERE parameter = '{_q(p)}'",
            )
        )
    for question, sql in _cycle(simple_templates, per_tier):
        questions.append(BenchmarkQuestion("simple", question, sql))

    medium_templates = []
    for m in materials:
        medium_templates.append(
            (
                f"the records of performance measurements for {m}",
                "SELECT material_name, parameter, value FROM performance_records "
                f"WHERE material_name = '{_q(m)}' ORDER BY id",
            )
        )
    for p in parameters:
        medium_templates.append(
            (
                f"the records reporting {p} values",
                "SELECT material_name, parameter, value FROM performance_records "
                f"WHERE parameter = '{_q(p)}' ORDER BY id",
            )
        )
    for meth in methods:
        medium_templates.append(
            (
                f"the synthesis records using {meth}",
                "SELECT material_name, method_name, conditions FROM synthesis_records "
                f"WHERE method_name = '{_q(meth)}' ORDER BY id",
            )
        )
    for question, sql in _cycle(medium_templates, per_tier):
        questions.append(BenchmarkQuestion("medium", question, sql))

    complex_templates = [
        (
            "how many materials have both performance and synthesis records",
            "SELECT COUNT(DISTINCT p.material_name) FROM performance_records p "
            "JOIN synthesis_records s ON p.material_name = s.material_name",
        ),
        (
            "how many articles contribute more than one performance record",
            "SELECT COUNT(*) FROM (SELECT doi_or_title FROM performance_records "
            "GROUP BY doi_or_title HAVING COUNT(*) > 1)",
        ),
        (
            "the articles ranked by how many performance records they contribute",
            "SELECT a.doi_or_title, COUNT(p.id) AS n FROM articles a "
            "JOIN performance_records p ON p.doi_or_title = a.doi_or_title "
            "GROUP BY a.doi_or_title ORDER BY n DESC, a.doi_or_title",
        ),
        (
            "how many performance records per synthesis record on average times 100",
            "SELECT (COUNT(*) * 100) / (SELECT COUNT(*) FROM synthesis_records) "
            "FROM performance_records",
        ),
        (
            "the materials sorted by their record count with parameter variety",
            "SELECT material_name, COUNT(*) AS n, COUNT(DISTINCT parameter) AS k "
            "FROM performance_records GROUP BY material_name ORDER BY n DESC, material_name",
        ),
    ]
    for m in materials:
        complex_templates.append(
            (
                f"how many distinct parameters are reported for {m} across all articles",
                "SELECT COUNT(DISTINCT parameter) FROM performance_records "
                f"WHERE material_name = '{_q(m)}'",
            )
        )
    for question, sql in _cycle(complex_templates, per_tier):
        questions.append(BenchmarkQuestion("complex", question, sql))

    return BenchmarkSuite(questions=tuple(questions))


def _q(text: str) -> str:
    return text.replace("'", "''")


def _cycle(templates: list[tuple[str, str]], count: int) -> list[tuple[str, str]]:
    out = []
    i = 0
    while len(out) < count and templates:
        question, sql = templates[i % len(templates)]
        if i >= len(templates):
            question = f"{question} (variant {i // len(templates) + 1})"
        out.append((question, sql))
        i += 1
    return out


@dataclass
class BenchmarkReport:
    accuracy: dict[str, float]
    per_question: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "per_question": self.per_question}


def run_benchmark(suite: BenchmarkSuite, config: SessionConfig) -> BenchmarkReport:
    """Run every question through the agent pipeline and compare against
    the oracle SQL executed directly: scalar equality for aggregates,
    row-set fingerprint equality for detail. Failures count as wrong."""
    accuracy: dict[str, float] = {}
    per_question: list[dict] = []
    for tier, tier_questions in suite.by_tier().items():
        correct = 0
        for q in tier_questions:
            oracle = config.kb.read_query(q.oracle_sql)
            session = run_session(q.question, config)
            ok = False
            if session.succeeded:
                if session.intent is Intent.AGGREGATE:
                    ok = session.answer == oracle.scalar()
                elif session.result is not None:
                    ok = result_fingerprint(session.result) == result_fingerprint(oracle)
            if ok:
                correct += 1
            per_question.append(
                {
                    "tier": tier,
                    "question": q.question,
                    "correct": ok,
                    "session_id": session.id,
                }
            )
        accuracy[tier] = correct / len(tier_questions) if tier_questions else 0.0
    return BenchmarkReport(accuracy=accuracy, per_question=per_question)
