"""Plain-text ingestion, sentence segmentation, and article metadata.

Segmentation is a deterministic rule-based splitter: break after
sentence-final punctuation followed by whitespace and an uppercase
letter or digit, guarded by an abbreviation list and a no-split rule
for decimals (no whitespace follows the period inside a number). The
segmenter is deliberately a swappable contract; any callable with the
same signature can replace it.

Metadata resolution speaks an OpenAlex-style works API, or reads local
JSON fixtures keyed by URL-encoded DOI for offline/deterministic runs.
"""

from __future__ import annotations

import json
import re
import threading
import time
import urllib.parse
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import httpx

DOI_RE = re.compile(r"^10\.\d{4,9}/\S+$")

DEFAULT_ABBREVIATIONS = (
    "fig.", "figs.", "eq.", "eqs.", "ref.", "refs.", "et al.", "e.g.", "i.e.",
    "cf.", "vs.", "ca.", "approx.", "no.", "dr.", "prof.", "a.", "b.", "c.",
)


class CorpusError(Exception):
    """Base error for ingestion and metadata lookups."""


class EmptyDocumentError(CorpusError):
    pass


class EncodingError(CorpusError):
    pass


class MetadataLookupError(CorpusError):
    """DOI/query not found by the works endpoint or fixture set."""


class MetadataTransportError(CorpusError):
    def __init__(self, message: str, retries_exhausted: int):
        super().__init__(message)
        self.retries_exhausted = retries_exhausted


@dataclass(frozen=True)
class SentenceSpan:
    index: int
    char_start: int
    char_end: int
    text: str


@dataclass(frozen=True)
class Document:
    id: str
    body: str
    sentences: tuple[SentenceSpan, ...]
    doi: str | None = None
    title: str | None = None
    source_path: str = ""

    def __post_init__(self) -> None:
        if self.doi is not None and not DOI_RE.match(self.doi):
            raise CorpusError(f"malformed DOI: {self.doi!r}")
        prev_end = -1
        for span in self.sentences:
            if span.char_start < prev_end:
                raise CorpusError("overlapping or unordered sentence spans")
            if self.body[span.char_start : span.char_end] != span.text:
                raise CorpusError(f"sentence span {span.index} does not match body slice")
            prev_end = span.char_end

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "doi": self.doi,
            "title": self.title,
            "body": self.body,
            "source_path": self.source_path,
            "sentences": [
                [s.index, s.char_start, s.char_end, s.text] for s in self.sentences
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(
            id=d["id"],
            body=d["body"],
            doi=d.get("doi"),
            title=d.get("title"),
            source_path=d.get("source_path", ""),
            sentences=tuple(
                SentenceSpan(index=i, char_start=a, char_end=b, text=t)
                for i, a, b, t in d.get("sentences", [])
            ),
        )


@dataclass(frozen=True)
class WorkMetadata:
    doi: str
    title: str
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str = ""
    open_access_url: str | None = None

    def __post_init__(self) -> None:
        if not DOI_RE.match(self.doi):
            raise CorpusError(f"malformed DOI: {self.doi!r}")


_TERMINALS = ".?!"
_CLOSERS = ")]}\"'”’"


def segment(text: str, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS) -> tuple[SentenceSpan, ...]:
    """Split text into sentence spans over the original string."""
    guards = tuple(a.casefold() for a in abbreviations)
    breaks: list[int] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in _TERMINALS:
            j = i + 1
            while j < n and text[j] in _CLOSERS:
                j += 1
            # need whitespace then an uppercase letter or digit to split
            if j < n and text[j].isspace():
                k = j
                while k < n and text[k].isspace():
                    k += 1
                if k < n and (text[k].isupper() or text[k].isdigit()):
                    if ch == "." and _ends_with_guard(text, i, guards):
                        i += 1
                        continue
                    breaks.append(j)
        i += 1

    spans: list[SentenceSpan] = []
    start = 0
    for b in breaks + [n]:
        piece = text[start:b]
        lead = len(piece) - len(piece.lstrip())
        trail = len(piece) - len(piece.rstrip())
        s, e = start + lead, b - trail
        if e > s:
            spans.append(SentenceSpan(len(spans), s, e, text[s:e]))
        start = b
    return tuple(spans)


def _ends_with_guard(text: str, period_index: int, guards: tuple[str, ...]) -> bool:
    head = text[: period_index + 1].casefold()
    for g in guards:
        if head.endswith(g):
            # guard must align with a token boundary ("beta." is not "a.")
            before = len(head) - len(g)
            if before == 0 or head[before - 1].isspace() or head[before - 1] in "([":
                return True
    return False


_CONTROL_RE = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")


def ingest_text(
    source: str | Path | IO[bytes],
    doi: str | None = None,
    title: str | None = None,
    doc_id: str | None = None,
    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS,
) -> Document:
    """Read UTF-8 plain text, normalize line endings, strip control
    characters (tabs become spaces, newlines survive), and segment."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        raw = path.read_bytes()
        source_path = str(path)
    else:
        raw = source.read()
        source_path = getattr(source, "name", "<stream>")
    try:
        body = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{source_path}: not valid UTF-8: {exc}") from exc
    body = body.replace("\r\n", "\n").replace("\r", "\n")
    body = body.replace("\t", " ")
    body = _CONTROL_RE.sub("", body)
    if not body.strip():
        raise EmptyDocumentError(f"{source_path}: empty document")
    return Document(
        id=doc_id or uuid.uuid4().hex,
        body=body,
        sentences=segment(body, abbreviations),
        doi=doi,
        title=title,
        source_path=source_path,
    )


class TokenBucket:
    """Shared limiter for polite API usage; thread-safe."""

    def __init__(self, rate_per_second: float = 5.0, capacity: int = 5):
        self.rate = rate_per_second
        self.capacity = capacity
        self._tokens = float(capacity)
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._last) * self.rate
                )
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


@dataclass
class MetadataClient:
    """OpenAlex-style works client with an offline fixture mode.

    Fixture mode reads fixtures/works/{urlencoded-doi}.json and performs
    zero network activity.
    """

    base_url: str = "https://api.openalex.org"
    fixture_dir: Path | None = None
    max_retries: int = 3
    backoff_base: float = 1.0
    limiter: TokenBucket = field(default_factory=TokenBucket)
    timeout: float = 30.0

    def resolve(self, doi: str) -> WorkMetadata:
        doi = doi.strip().removeprefix("https://doi.org/")
        if not DOI_RE.match(doi):
            raise MetadataLookupError(f"malformed DOI rejected before lookup: {doi!r}")
        if self.fixture_dir is not None:
            return self._resolve_fixture(doi)
        return self._resolve_remote(doi)

    def _resolve_fixture(self, doi: str) -> WorkMetadata:
        name = urllib.parse.quote(doi, safe="") + ".json"
        path = Path(self.fixture_dir) / name
        if not path.exists():
            raise MetadataLookupError(f"no fixture for DOI {doi}")
        return _parse_work(json.loads(path.read_text("utf-8")))

    def _resolve_remote(self, doi: str) -> WorkMetadata:
        url = f"{self.base_url.rstrip('/')}/works/doi:{doi}"
        attempts = 0
        last_error: Exception | None = None
        while attempts <= self.max_retries:
            self.limiter.acquire()
            try:
                resp = httpx.get(url, timeout=self.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                attempts += 1
                if attempts <= self.max_retries:
                    time.sleep(self.backoff_base * (2 ** (attempts - 1)))
                continue
            if resp.status_code == 404:
                raise MetadataLookupError(f"DOI not found: {doi}")
            if resp.status_code >= 500:
                last_error = RuntimeError(f"server error {resp.status_code}")
                attempts += 1
                if attempts <= self.max_retries:
                    time.sleep(self.backoff_base * (2 ** (attempts - 1)))
                continue
            resp.raise_for_status()
            return _parse_work(resp.json())
        raise MetadataTransportError(
            f"lookup failed for {doi}: {last_error}", retries_exhausted=self.max_retries
        )


def _parse_work(payload: dict) -> WorkMetadata:
    doi = (payload.get("doi") or "").removeprefix("https://doi.org/")
    authors = tuple(
        a.get("author", {}).get("display_name", "")
        for a in payload.get("authorships", [])
    )
    venue = ""
    location = payload.get("primary_location") or {}
    source = location.get("source") or {}
    venue = source.get("display_name") or ""
    oa = payload.get("open_access") or {}
    return WorkMetadata(
        doi=doi,
        title=payload.get("title") or payload.get("display_name") or "",
        authors=authors,
        year=payload.get("publication_year"),
        venue=venue,
        open_access_url=oa.get("oa_url"),
    )
