"""Schema-constrained extraction through a chat endpoint.

The prompt is engineered, not ad hoc: a fixed extractor role, the JSON
schema, and a numbered rule list make up the system message; the user
message is a sentence-aligned document chunk with inline [i] sentence
markers so the model can cite provenance. Model misbehavior never
raises; every failure mode lands in the result's status.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .corpus import Document
from .llm import ChatClient, TransportError
from .records import (
    NOT_SPECIFIED,
    PerformanceRecord,
    RecordError,
    SynthesisRecord,
)

DEFAULT_MAX_CHUNK_CHARS = 12_000
DEFAULT_MAX_ATTEMPTS = 3

FAMILIES = ("graphene", "TMD", "MXene", "hBN", "other")


def _template(name: str) -> str:
    return resources.files("matkb.templates").joinpath(name).read_text("utf-8")


class SchemaValidationError(Exception):
    """Base of the distinct schema-failure kinds."""


class MalformedJsonError(SchemaValidationError):
    pass


class MissingKeyError(SchemaValidationError):
    pass


class FieldTypeError(SchemaValidationError):
    pass


class ChunkingError(Exception):
    pass


class Status(str, Enum):
    SUCCESS = "success"
    SCHEMA_FAILURE = "schema_failure"
    TRANSPORT_FAILURE = "transport_failure"


@dataclass(frozen=True)
class PromptContext:
    role_preamble: str
    json_schema: str
    rules: tuple[str, ...]
    document_chunk: str
    max_chunk_chars: int

    @property
    def system_message(self) -> str:
        rules = "\n".join(self.rules)
        return f"{self.role_preamble}\n\nOutput schema:\n{self.json_schema}\n\nRules:\n{rules}"

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_message},
            {"role": "user", "content": self.document_chunk},
        ]


@dataclass(frozen=True)
class ExtractionResult:
    document_id: str
    title: str | None
    doi: str | None
    performance: tuple[PerformanceRecord, ...]
    synthesis: tuple[SynthesisRecord, ...]
    attempt_count: int
    status: Status

    def to_dict(self) -> dict:
        return {
            "document_id": self.document_id,
            "title": self.title,
            "doi": self.doi,
            "performance": [r.to_dict() for r in self.performance],
            "synthesis": [r.to_dict() for r in self.synthesis],
            "attempt_count": self.attempt_count,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionResult":
        return cls(
            document_id=d["document_id"],
            title=d.get("title"),
            doi=d.get("doi"),
            performance=tuple(
                PerformanceRecord.from_dict(r) for r in d.get("performance", [])
            ),
            synthesis=tuple(
                SynthesisRecord.from_dict(r) for r in d.get("synthesis", [])
            ),
            attempt_count=d.get("attempt_count", 0),
            status=Status(d.get("status", "success")),
        )


def chunk_sentences(doc: Document, max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS) -> list[tuple[int, ...]]:
    """Sentence-aligned windows: each chunk is a run of sentence indices
    whose marked-up text stays within max_chunk_chars. A sentence is
    never split; an oversized single sentence is its own chunk."""
    chunks: list[tuple[int, ...]] = []
    current: list[int] = []
    current_len = 0
    for span in doc.sentences:
        piece = len(span.text) + len(f"[{span.index}] ") + 1
        if current and current_len + piece > max_chunk_chars:
            chunks.append(tuple(current))
            current, current_len = [], 0
        current.append(span.index)
        current_len += piece
    if current:
        chunks.append(tuple(current))
    return chunks


def build_context(
    doc: Document,
    chunk_index: int,
    max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
) -> PromptContext:
    """Deterministic prompt assembly for one chunk of a document."""
    chunks = chunk_sentences(doc, max_chunk_chars)
    if not 0 <= chunk_index < len(chunks):
        raise ChunkingError(
            f"chunk index {chunk_index} out of range (document has {len(chunks)} chunks)"
        )
    lines = [f"[{i}] {doc.sentences[i].text}" for i in chunks[chunk_index]]
    return PromptContext(
        role_preamble=_template("extractor_system.txt").strip(),
        json_schema=_template("extractor_schema.json").strip(),
        rules=tuple(_template("extractor_rules.txt").strip().splitlines()),
        document_chunk="\n".join(lines),
        max_chunk_chars=max_chunk_chars,
    )


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z]*\s*|\s*```\s*$")

TOP_LEVEL_KEYS = ("title", "doi", "performance", "synthesis")


def strip_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        text = _FENCE_RE.sub("", text)
    return text.strip()


def validate_schema(raw: str, doi_or_title: str = "") -> dict:
    """Parse and validate one model response.

    Returns {"title", "doi", "performance": [PerformanceRecord...],
    "synthesis": [SynthesisRecord...]}. Rejects extra top-level keys,
    wrong field types, and empty required fields.
    """
    try:
        payload = json.loads(strip_fences(raw))
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedJsonError("top level is not a JSON object")
    extra = set(payload) - set(TOP_LEVEL_KEYS)
    if extra:
        raise FieldTypeError(f"unexpected top-level keys: {sorted(extra)}")
    for key in TOP_LEVEL_KEYS:
        if key not in payload:
            raise MissingKeyError(f"missing required key: {key}")
    title, doi = payload["title"], payload["doi"]
    if title is not None and not isinstance(title, str):
        raise FieldTypeError("title must be a string or null")
    if doi is not None and not isinstance(doi, str):
        raise FieldTypeError("doi must be a string or null")
    key_text = doi_or_title or doi or title or ""

    performance = _parse_items(
        payload["performance"], "performance", ("material_name", "parameter", "value")
    )
    synthesis = _parse_items(
        payload["synthesis"], "synthesis", ("material_name", "method_name")
    )
    perf_records = []
    for item in performance:
        try:
            perf_records.append(
                PerformanceRecord(
                    doi_or_title=key_text,
                    material_name=item["material_name"],
                    parameter=item["parameter"],
                    value=item["value"],
                    sentence_indices=tuple(item.get("sentences", ())),
                )
            )
        except RecordError as exc:
            raise FieldTypeError(str(exc)) from exc
    synth_records = []
    for item in synthesis:
        try:
            synth_records.append(
                SynthesisRecord(
                    doi_or_title=key_text,
                    material_name=item["material_name"],
                    method_name=item["method_name"],
                    method_details=item.get("method_details") or NOT_SPECIFIED,
                    reagents=item.get("reagents") or NOT_SPECIFIED,
                    conditions=item.get("conditions") or NOT_SPECIFIED,
                    equipment=item.get("equipment") or NOT_SPECIFIED,
                    sentence_indices=tuple(item.get("sentences", ())),
                )
            )
        except RecordError as exc:
            raise FieldTypeError(str(exc)) from exc
    return {
        "title": title,
        "doi": doi,
        "performance": perf_records,
        "synthesis": synth_records,
    }


def _parse_items(value, key: str, required: tuple[str, ...]) -> list[dict]:
    if not isinstance(value, list):
        raise FieldTypeError(f"{key} must be an array")
    items = []
    for i, item in enumerate(value):
        if not isinstance(item, dict):
            raise FieldTypeError(f"{key}[{i}] must be an object")
        for name in required:
            if name not in item:
                raise MissingKeyError(f"{key}[{i}] missing field: {name}")
            if not isinstance(item[name], str) or not item[name].strip():
                raise FieldTypeError(f"{key}[{i}].{name} must be a non-empty string")
        sentences = item.get("sentences", [])
        if not isinstance(sentences, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) for s in sentences
        ):
            raise FieldTypeError(f"{key}[{i}].sentences must be an array of integers")
        for name, v in item.items():
            if name == "sentences":
                continue
            if not isinstance(v, str):
                raise FieldTypeError(f"{key}[{i}].{name} must be a string")
        items.append(item)
    return items


def extract(
    doc: Document,
    client: ChatClient,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
) -> ExtractionResult:
    """Run every chunk through the endpoint with bounded retries.

    Per chunk: call, parse, validate; on failure append a corrective
    instruction and retry. attempt_count totals all calls made.
    """
    chunks = chunk_sentences(doc, max_chunk_chars)
    key_text = doc.doi or doc.title or doc.id
    valid_indices = {s.index for s in doc.sentences}
    performance: list[PerformanceRecord] = []
    synthesis: list[SynthesisRecord] = []
    title: str | None = doc.title
    doi: str | None = doc.doi
    attempts = 0
    corrective_template = _template("corrective.txt")

    for chunk_index in range(len(chunks)):
        context = build_context(doc, chunk_index, max_chunk_chars)
        messages = context.messages()
        parsed = None
        for attempt in range(max_attempts):
            attempts += 1
            try:
                raw = client.complete(messages)
            except TransportError:
                if attempt == max_attempts - 1:
                    return ExtractionResult(
                        document_id=doc.id,
                        title=title,
                        doi=doi,
                        performance=tuple(performance),
                        synthesis=tuple(synthesis),
                        attempt_count=attempts,
                        status=Status.TRANSPORT_FAILURE,
                    )
                continue
            try:
                parsed = validate_schema(raw, doi_or_title=key_text)
                break
            except SchemaValidationError as exc:
                messages = messages + [
                    {"role": "assistant", "content": raw},
                    {
                        "role": "user",
                        "content": corrective_template.format(error=exc),
                    },
                ]
        if parsed is None:
            return ExtractionResult(
                document_id=doc.id,
                title=title,
                doi=doi,
                performance=tuple(performance),
                synthesis=tuple(synthesis),
                attempt_count=attempts,
                status=Status.SCHEMA_FAILURE,
            )
        title = title or parsed["title"]
        doi = doi or parsed["doi"]
        performance.extend(_with_valid_provenance(parsed["performance"], valid_indices))
        synthesis.extend(_with_valid_provenance(parsed["synthesis"], valid_indices))

    return ExtractionResult(
        document_id=doc.id,
        title=title,
        doi=doi,
        performance=tuple(performance),
        synthesis=tuple(synthesis),
        attempt_count=attempts,
        status=Status.SUCCESS,
    )


def _with_valid_provenance(records, valid_indices):
    out = []
    for r in records:
        kept = tuple(i for i in r.sentence_indices if i in valid_indices)
        if kept != r.sentence_indices:
            r = type(r)(**{**{k: v for k, v in r.to_dict().items() if k != "sentence_indices"},
                           "sentence_indices": kept})
        out.append(r)
    return out


@dataclass(frozen=True)
class RelevanceVerdict:
    is_2d_related: bool
    family: str
    confidence: float


def classify_relevance(
    doc: Document,
    client: ChatClient,
    max_attempts: int = 2,
    sample_chars: int = 4000,
) -> RelevanceVerdict:
    """Single-call relevance + material-family classification with a
    constrained answer vocabulary; unparseable answers are retried, then
    fall back to family="other", confidence 0."""
    messages = [
        {"role": "system", "content": _template("relevance_system.txt").strip()},
        {"role": "user", "content": doc.body[:sample_chars]},
    ]
    last_related = False
    for attempt in range(max_attempts):
        try:
            raw = client.complete(messages)
        except TransportError:
            continue
        try:
            payload = json.loads(strip_fences(raw))
            related = bool(payload["is_2d_related"])
            last_related = related
            family = payload["family"]
            confidence = float(payload["confidence"])
            if family not in FAMILIES or not 0.0 <= confidence <= 1.0:
                raise ValueError("out of vocabulary")
            return RelevanceVerdict(related, family, confidence)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            continue
    return RelevanceVerdict(last_related, "other", 0.0)


def failure_rate(results: list[ExtractionResult]) -> float:
    """Fraction of non-success results; 0.0 on empty input."""
    if not results:
        return 0.0
    failed = sum(1 for r in results if r.status is not Status.SUCCESS)
    return failed / len(results)
