"""Text and record similarity metrics used to score extraction quality.

Three text metrics are combined: a matching-blocks ratio (recursively
pair off the longest common substrings and count matched characters),
and bigram/trigram Jaccard overlap. Numeric field values are compared
by symmetric relative difference. Field-level scores aggregate into a
record-level score through configurable weights.
"""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass, field

from .records import Record

_WS_RE = re.compile(r"\s+")

# value = leading signed number, optional remainder treated as unit text
_NUMBER_WITH_UNIT_RE = re.compile(
    r"^\s*([+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)\s*(.*?)\s*$"
)


def normalize_text(s: str) -> str:
    """Canonical form used before all text scoring and deduplication:
    NFC, case-fold, whitespace runs collapsed to single spaces."""
    s = unicodedata.normalize("NFC", s)
    s = s.casefold()
    return _WS_RE.sub(" ", s).strip()


@dataclass(frozen=True)
class SimilarityWeights:
    """Aggregation weights for the three text metrics and per-field
    record weights. Field weights default to uniform over whatever
    fields the compared records carry."""

    ratio_w: float = 1.0 / 3.0
    bigram_w: float = 1.0 / 3.0
    trigram_w: float = 1.0 / 3.0
    field_weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for w in (self.ratio_w, self.bigram_w, self.trigram_w):
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"text metric weight out of [0,1]: {w}")
        if abs(self.ratio_w + self.bigram_w + self.trigram_w - 1.0) > 1e-9:
            raise ValueError("text metric weights must sum to 1")
        if self.field_weights:
            for name, w in self.field_weights.items():
                if not 0.0 <= w <= 1.0:
                    raise ValueError(f"field weight out of [0,1]: {name}={w}")
            if abs(sum(self.field_weights.values()) - 1.0) > 1e-9:
                raise ValueError("field weights must sum to 1")


def _longest_block_length(s: str, t: str) -> int:
    """Length of the longest common substring (classic row-DP)."""
    if not s or not t:
        return 0
    best = 0
    prev = [0] * (len(t) + 1)
    for i in range(1, len(s) + 1):
        cur = [0] * (len(t) + 1)
        si = s[i - 1]
        for j in range(1, len(t) + 1):
            if si == t[j - 1]:
                cur[j] = prev[j - 1] + 1
                if cur[j] > best:
                    best = cur[j]
        prev = cur
    return best


def _longest_block_positions(s: str, t: str) -> tuple[int, list[tuple[int, int]]]:
    """Longest common substring length and every (i, j) start pair."""
    if not s or not t:
        return 0, []
    best = 0
    starts: list[tuple[int, int]] = []
    prev = [0] * (len(t) + 1)
    for i in range(1, len(s) + 1):
        cur = [0] * (len(t) + 1)
        si = s[i - 1]
        for j in range(1, len(t) + 1):
            if si == t[j - 1]:
                k = prev[j - 1] + 1
                cur[j] = k
                if k > best:
                    best = k
                    starts = [(i - k, j - k)]
                elif k == best:
                    starts.append((i - k, j - k))
        prev = cur
    return best, starts


def _matched_total(s: str, t: str, memo: dict[tuple[str, str], int]) -> int:
    """Total matched length over the longest-block recursion, maximized
    over tie choices so the result is symmetric in (s, t)."""
    if not s or not t:
        return 0
    key = (s, t) if s <= t else (t, s)
    hit = memo.get(key)
    if hit is not None:
        return hit
    length, starts = _longest_block_positions(s, t)
    if length == 0:
        memo[key] = 0
        return 0
    best = 0
    seen: set[tuple[str, str, str, str]] = set()
    for i, j in starts:
        parts = (s[:i], t[:j], s[i + length:], t[j + length:])
        if parts in seen:
            continue
        seen.add(parts)
        total = (
            length
            + _matched_total(parts[0], parts[1], memo)
            + _matched_total(parts[2], parts[3], memo)
        )
        if total > best:
            best = total
    memo[key] = best
    return best


def ratio_similarity(s: str, t: str) -> float:
    """Matching-blocks ratio 2M/(|s|+|t|), where M is the summed length
    of the longest non-overlapping common blocks. 1.0 when both empty."""
    if not s and not t:
        return 1.0
    m = _matched_total(s, t, {})
    return 2.0 * m / (len(s) + len(t))


def ngram_jaccard(s: str, t: str, n: int) -> float:
    """Jaccard overlap of the sets of adjacent n-character substrings.
    Both sets empty (strings shorter than n): 1.0 iff s == t."""
    if n not in (2, 3):
        raise ValueError(f"n must be 2 or 3, got {n}")
    gs = {s[i : i + n] for i in range(len(s) - n + 1)}
    gt = {t[i : i + n] for i in range(len(t) - n + 1)}
    if not gs and not gt:
        return 1.0 if s == t else 0.0
    return len(gs & gt) / len(gs | gt)


def text_similarity(s: str, t: str, w: SimilarityWeights | None = None) -> float:
    """Weighted aggregate of ratio + bigram/trigram Jaccard, computed on
    normalized text."""
    w = w or SimilarityWeights()
    a, b = normalize_text(s), normalize_text(t)
    return (
        w.ratio_w * ratio_similarity(a, b)
        + w.bigram_w * ngram_jaccard(a, b, 2)
        + w.trigram_w * ngram_jaccard(a, b, 3)
    )


def numeric_similarity(a: float, b: float) -> float:
    """Symmetric relative-difference score, clamped to [0, 1]."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("numeric_similarity requires finite inputs")
    if a == b:
        return 1.0
    return max(0.0, 1.0 - abs(a - b) / max(abs(a), abs(b)))


def parse_number_with_unit(value: str) -> tuple[float, str] | None:
    """Split a value like "1.91 g/cm³" into (1.91, "g/cm³"). None when
    the value does not start with a single plain number."""
    m = _NUMBER_WITH_UNIT_RE.match(value)
    if not m:
        return None
    try:
        num = float(m.group(1))
    except ValueError:
        return None
    unit = normalize_text(m.group(2))
    # A remainder with further ASCII digits means this is not a plain
    # "number + unit" value (ranges, tuples, etc.); score it as text.
    # Superscripts like g/cm³ stay legitimate unit text.
    if any(ch in "0123456789" for ch in unit):
        return None
    return num, unit


def _field_similarity(gold: str, pred: str, w: SimilarityWeights) -> float:
    gold_missing = not gold.strip()
    pred_missing = not pred.strip()
    if gold_missing and pred_missing:
        return 1.0
    if gold_missing or pred_missing:
        return 0.0
    g = parse_number_with_unit(gold)
    p = parse_number_with_unit(pred)
    if g is not None and p is not None and g[1] == p[1]:
        return numeric_similarity(g[0], p[0])
    return text_similarity(gold, pred, w)


def record_similarity(gold: Record, pred: Record, w: SimilarityWeights | None = None) -> float:
    """Weighted per-field similarity between two records of the same
    kind. Numeric comparison applies only when both values parse as a
    plain number with identical unit text."""
    w = w or SimilarityWeights()
    if gold.kind != pred.kind:
        raise ValueError(f"record kind mismatch: {gold.kind} vs {pred.kind}")
    gold_fields = gold.field_values()
    pred_fields = pred.field_values()
    if w.field_weights:
        unknown = set(w.field_weights) - set(gold_fields)
        if unknown:
            raise ValueError(f"field weights name unknown fields: {sorted(unknown)}")
        weights = w.field_weights
    else:
        uniform = 1.0 / len(gold_fields)
        weights = {name: uniform for name in gold_fields}
    # normalize by the weight total so identical records score exactly 1.0
    # even when uniform weights (e.g. 1/7) do not sum to 1.0 in floats
    terms = [
        weight * _field_similarity(gold_fields[name], pred_fields[name], w)
        for name, weight in weights.items()
    ]
    return math.fsum(terms) / math.fsum(weights.values())
