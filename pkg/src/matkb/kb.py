"""Relational store for curated extraction output.

SQLite is the embedded default; all SQL stays in a conservative common
dialect so a server backend can substitute in deployment. Writes go
through short transactions with unique-constraint-backed dedup keys.
Reads used by the query pipeline run on a separate connection pinned to
query_only, so no generated SQL can ever write.
"""

from __future__ import annotations

import csv
import io
import json
import re
import sqlite3
import time
from dataclasses import dataclass
from pathlib import Path

from .extraction import ExtractionResult
from .records import PerformanceRecord, SynthesisRecord
from .similarity import normalize_text


class KbError(Exception):
    pass


class MigrationError(KbError):
    """Existing table shape conflicts with the declared schema."""


class ExportError(KbError):
    pass


class ExecutionError(KbError):
    """Read query failed; message preserves the backend's text."""


class ExecutionTimeout(ExecutionError):
    pass


@dataclass(frozen=True)
class CurationPolicy:
    min_confidence: float = 0.0
    max_value_chars: int = 2000
    reject_patterns: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must be in [0,1]")


@dataclass(frozen=True)
class UpsertCounts:
    inserted: int
    deduplicated: int
    rejected: int


@dataclass(frozen=True)
class RowSet:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    truncated: bool = False

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def scalar(self):
        if len(self.rows) == 1 and len(self.columns) == 1:
            return self.rows[0][0]
        return None


_TABLES: dict[str, list[tuple[str, str]]] = {
    "articles": [
        ("doi_or_title", "TEXT PRIMARY KEY"),
        ("title", "TEXT"),
        ("doi", "TEXT"),
        ("year", "INTEGER"),
        ("venue", "TEXT"),
    ],
    "performance_records": [
        ("id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
        ("doi_or_title", "TEXT NOT NULL REFERENCES articles(doi_or_title)"),
        ("material_name", "TEXT NOT NULL"),
        ("parameter", "TEXT NOT NULL"),
        ("value", "TEXT NOT NULL"),
        ("dedup_key", "TEXT NOT NULL UNIQUE"),
    ],
    "synthesis_records": [
        ("id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
        ("doi_or_title", "TEXT NOT NULL REFERENCES articles(doi_or_title)"),
        ("material_name", "TEXT NOT NULL"),
        ("method_name", "TEXT NOT NULL"),
        ("method_details", "TEXT"),
        ("reagents", "TEXT"),
        ("conditions", "TEXT"),
        ("equipment", "TEXT"),
        ("dedup_key", "TEXT NOT NULL UNIQUE"),
    ],
    "query_examples": [
        ("id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
        ("query_text", "TEXT NOT NULL"),
        ("normalized_query", "TEXT NOT NULL"),
        ("key_fields", "TEXT NOT NULL"),
        ("sql", "TEXT NOT NULL"),
        ("result_fingerprint", "TEXT NOT NULL"),
        ("row_count", "INTEGER NOT NULL"),
        ("col_count", "INTEGER NOT NULL"),
        ("mode", "TEXT NOT NULL"),
        ("created_at", "REAL NOT NULL"),
    ],
    "audit_log": [
        ("id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
        ("session_id", "TEXT NOT NULL"),
        ("created_at", "REAL NOT NULL"),
        ("user_query", "TEXT NOT NULL"),
        ("intent", "TEXT"),
        ("sql", "TEXT"),
        ("outcome", "TEXT NOT NULL"),
        ("failure_reason", "TEXT"),
        ("result_fingerprint", "TEXT"),
        ("row_count", "INTEGER"),
        ("duration_ms", "REAL"),
        ("trace", "TEXT"),
    ],
}

_INDEXES = (
    "CREATE INDEX IF NOT EXISTS idx_perf_doi ON performance_records(doi_or_title)",
    "CREATE INDEX IF NOT EXISTS idx_perf_material ON performance_records(material_name)",
    "CREATE INDEX IF NOT EXISTS idx_perf_parameter ON performance_records(parameter)",
    "CREATE INDEX IF NOT EXISTS idx_synth_doi ON synthesis_records(doi_or_title)",
    "CREATE INDEX IF NOT EXISTS idx_synth_material ON synthesis_records(material_name)",
    "CREATE UNIQUE INDEX IF NOT EXISTS idx_example_dedup ON query_examples(normalized_query, sql)",
)

_SQLITE_URL_RE = re.compile(r"^sqlite:///(.+)$")


def _resolve_path(db_url: str) -> str:
    m = _SQLITE_URL_RE.match(db_url)
    return m.group(1) if m else db_url


class KnowledgeBase:
    """One database, two connections: a writer for ingest/audit/examples
    and a query_only reader for generated SQL."""

    def __init__(self, db_url: str):
        self.path = _resolve_path(db_url)
        self._writer = sqlite3.connect(self.path, check_same_thread=False)
        # autocommit mode; transactions are opened explicitly where needed
        self._writer.isolation_level = None
        self._writer.execute("PRAGMA foreign_keys = ON")
        self._reader = sqlite3.connect(self.path, check_same_thread=False)
        self._reader.execute("PRAGMA query_only = ON")

    def close(self) -> None:
        self._writer.close()
        self._reader.close()

    # -- schema ------------------------------------------------------

    def init_schema(self) -> None:
        """Create all tables and indexes; idempotent. An existing table
        with conflicting column types is a migration error naming the
        first offending column."""
        cur = self._writer.cursor()
        for table, columns in _TABLES.items():
            existing = cur.execute(f"PRAGMA table_info({table})").fetchall()
            if existing:
                declared = {name: spec.split()[0].upper() for name, spec in columns}
                for _, name, coltype, *_rest in existing:
                    want = declared.get(name)
                    if want is not None and coltype.upper() != want:
                        raise MigrationError(
                            f"{table}.{name}: existing type {coltype} conflicts with {want}"
                        )
                continue
            cols = ", ".join(f"{name} {spec}" for name, spec in columns)
            cur.execute(f"CREATE TABLE IF NOT EXISTS {table} ({cols})")
        for stmt in _INDEXES:
            cur.execute(stmt)
        self._writer.commit()

    # -- ingest ------------------------------------------------------

    def upsert_result(
        self,
        result: ExtractionResult,
        policy: CurationPolicy | None = None,
        confidence: float | None = None,
    ) -> UpsertCounts:
        """Store one extraction result transactionally. Returns counts
        of inserted, deduplicated (already present), and rejected rows."""
        policy = policy or CurationPolicy()
        inserted = deduplicated = rejected = 0
        key_text = result.doi or result.title or result.document_id
        reject_res = [re.compile(p, re.IGNORECASE) for p in policy.reject_patterns]

        if confidence is not None and confidence < policy.min_confidence:
            return UpsertCounts(0, 0, len(result.performance) + len(result.synthesis))

        cur = self._writer.cursor()
        try:
            cur.execute("BEGIN")
            cur.execute(
                "INSERT OR IGNORE INTO articles (doi_or_title, title, doi) VALUES (?, ?, ?)",
                (key_text, result.title, result.doi),
            )
            for rec in result.performance:
                if self._rejected(rec, policy, reject_res):
                    rejected += 1
                    continue
                dedup = _perf_dedup_key(key_text, rec)
                cur.execute(
                    "INSERT OR IGNORE INTO performance_records "
                    "(doi_or_title, material_name, parameter, value, dedup_key) "
                    "VALUES (?, ?, ?, ?, ?)",
                    (key_text, rec.material_name, rec.parameter, rec.value, dedup),
                )
                if cur.rowcount:
                    inserted += 1
                else:
                    deduplicated += 1
            for rec in result.synthesis:
                if self._rejected(rec, policy, reject_res):
                    rejected += 1
                    continue
                dedup = _synth_dedup_key(key_text, rec)
                cur.execute(
                    "INSERT OR IGNORE INTO synthesis_records "
                    "(doi_or_title, material_name, method_name, method_details, "
                    "reagents, conditions, equipment, dedup_key) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        key_text,
                        rec.material_name,
                        rec.method_name,
                        rec.method_details,
                        rec.reagents,
                        rec.conditions,
                        rec.equipment,
                        dedup,
                    ),
                )
                if cur.rowcount:
                    inserted += 1
                else:
                    deduplicated += 1
            self._writer.commit()
        except sqlite3.Error:
            self._writer.rollback()
            raise
        return UpsertCounts(inserted, deduplicated, rejected)

    @staticmethod
    def _rejected(rec, policy: CurationPolicy, reject_res) -> bool:
        values = rec.field_values().values()
        if isinstance(rec, PerformanceRecord) and len(rec.value) > policy.max_value_chars:
            return True
        return any(r.search(v) for r in reject_res for v in values)

    # -- reads -------------------------------------------------------

    def read_query(
        self,
        sql: str,
        row_cap: int = 10_000,
        timeout_s: float = 30.0,
        max_retries: int = 3,
    ) -> RowSet:
        """Run a read-only statement with a row cap and wall timeout.
        Transient lock errors retry; other backend errors surface with
        the backend's message text intact."""
        deadline = time.monotonic() + timeout_s

        def _abort_on_deadline():
            return 1 if time.monotonic() > deadline else 0

        last: Exception | None = None
        for attempt in range(max_retries + 1):
            self._reader.set_progress_handler(_abort_on_deadline, 1000)
            try:
                cur = self._reader.execute(sql)
                columns = tuple(d[0] for d in cur.description or ())
                rows = cur.fetchmany(row_cap + 1)
                truncated = len(rows) > row_cap
                return RowSet(
                    columns=columns,
                    rows=tuple(tuple(r) for r in rows[:row_cap]),
                    truncated=truncated,
                )
            except sqlite3.OperationalError as exc:
                message = str(exc)
                if "interrupted" in message:
                    raise ExecutionTimeout(f"statement timeout after {timeout_s}s") from exc
                if "locked" in message and attempt < max_retries:
                    last = exc
                    time.sleep(0.05 * (attempt + 1))
                    continue
                raise ExecutionError(message) from exc
            except sqlite3.Error as exc:
                raise ExecutionError(str(exc)) from exc
            finally:
                self._reader.set_progress_handler(None, 0)
        raise ExecutionError(f"retries exhausted: {last}")

    def schema_info(self) -> str:
        """Human/model-readable table and column listing."""
        lines = []
        for table, columns in _TABLES.items():
            cols = ", ".join(name for name, _ in columns)
            lines.append(f"{table}({cols})")
        return "\n".join(lines)

    def schema_columns(self) -> dict[str, tuple[str, ...]]:
        return {t: tuple(name for name, _ in cols) for t, cols in _TABLES.items()}

    def table_counts(self) -> dict[str, int]:
        out = {}
        for table in _TABLES:
            out[table] = self._reader.execute(f"SELECT COUNT(*) FROM {table}").fetchone()[0]
        return out

    # -- audit -------------------------------------------------------

    def append_audit(self, entry: dict) -> int:
        cur = self._writer.cursor()
        cur.execute(
            "INSERT INTO audit_log (session_id, created_at, user_query, intent, sql, "
            "outcome, failure_reason, result_fingerprint, row_count, duration_ms, trace) "
            "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
            (
                entry["session_id"],
                entry.get("created_at", time.time()),
                entry["user_query"],
                entry.get("intent"),
                entry.get("sql"),
                entry["outcome"],
                entry.get("failure_reason"),
                entry.get("result_fingerprint"),
                entry.get("row_count"),
                entry.get("duration_ms"),
                json.dumps(entry.get("trace", {})),
            ),
        )
        self._writer.commit()
        return cur.lastrowid

    def audit_page(self, limit: int = 50) -> list[dict]:
        cur = self._writer.execute(
            "SELECT id, session_id, created_at, user_query, intent, sql, outcome, "
            "failure_reason, result_fingerprint, row_count, duration_ms, trace "
            "FROM audit_log ORDER BY id DESC LIMIT ?",
            (limit,),
        )
        names = [d[0] for d in cur.description]
        entries = [dict(zip(names, row)) for row in cur.fetchall()]
        for entry in entries:
            entry["trace"] = json.loads(entry["trace"]) if entry["trace"] else {}
        return entries

    # -- examples (write side; retrieval logic lives in exemplar) -----

    def insert_example(self, entry: dict) -> int:
        cur = self._writer.cursor()
        cur.execute(
            "SELECT id FROM query_examples WHERE normalized_query = ? AND sql = ?",
            (entry["normalized_query"], entry["sql"]),
        )
        row = cur.fetchone()
        if row:
            return row[0]
        cur.execute(
            "INSERT INTO query_examples (query_text, normalized_query, key_fields, sql, "
            "result_fingerprint, row_count, col_count, mode, created_at) "
            "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
            (
                entry["query_text"],
                entry["normalized_query"],
                json.dumps(entry["key_fields"]),
                entry["sql"],
                entry["result_fingerprint"],
                entry["row_count"],
                entry["col_count"],
                entry["mode"],
                entry.get("created_at", time.time()),
            ),
        )
        self._writer.commit()
        return cur.lastrowid

    def all_examples(self) -> list[dict]:
        cur = self._writer.execute(
            "SELECT id, query_text, normalized_query, key_fields, sql, "
            "result_fingerprint, row_count, col_count, mode, created_at "
            "FROM query_examples"
        )
        names = [d[0] for d in cur.description]
        out = []
        for row in cur.fetchall():
            d = dict(zip(names, row))
            d["key_fields"] = json.loads(d["key_fields"])
            out.append(d)
        return out


def _perf_dedup_key(key_text: str, rec: PerformanceRecord) -> str:
    return "|".join(
        normalize_text(x) for x in (key_text, rec.material_name, rec.parameter, rec.value)
    )


def _synth_dedup_key(key_text: str, rec: SynthesisRecord) -> str:
    return "|".join(
        normalize_text(x) for x in (key_text, rec.material_name, rec.method_name)
    )


def export_rows(rowset: RowSet, path: str | Path) -> Path:
    """Write a result set as spreadsheet-compatible CSV: header row,
    RFC 4180 quoting, UTF-8 with BOM."""
    if not rowset.columns:
        raise ExportError("cannot export a zero-column result")
    path = Path(path)
    with open(path, "w", encoding="utf-8-sig", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(rowset.columns)
        writer.writerows(rowset.rows)
    return path


def export_rows_string(rowset: RowSet) -> str:
    if not rowset.columns:
        raise ExportError("cannot export a zero-column result")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(rowset.columns)
    writer.writerows(rowset.rows)
    return buf.getvalue()
