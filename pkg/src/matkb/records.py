"""Record shapes for extracted materials data.

Two record kinds exist: performance measurements (material, parameter,
value) and synthesis procedures (method plus free-text detail fields).
Synthesis fields that the source text does not state carry the sentinel
"Not specified" rather than an empty string.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

NOT_SPECIFIED = "Not specified"

PERFORMANCE_FIELDS = ("doi_or_title", "material_name", "parameter", "value")
SYNTHESIS_FIELDS = (
    "doi_or_title",
    "material_name",
    "method_name",
    "method_details",
    "reagents",
    "conditions",
    "equipment",
)


class RecordError(ValueError):
    """A record violates its shape invariants."""


@dataclass(frozen=True)
class PerformanceRecord:
    doi_or_title: str
    material_name: str
    parameter: str
    value: str
    sentence_indices: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if not self.material_name or not self.parameter or not self.value:
            raise RecordError(
                "performance record requires non-empty material_name, parameter, value"
            )

    @property
    def kind(self) -> str:
        return "performance"

    def field_values(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in PERFORMANCE_FIELDS}

    def to_dict(self) -> dict[str, Any]:
        d = self.field_values()
        d["sentence_indices"] = list(self.sentence_indices)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PerformanceRecord":
        return cls(
            doi_or_title=str(d.get("doi_or_title", "")),
            material_name=str(d["material_name"]),
            parameter=str(d["parameter"]),
            value=str(d["value"]),
            sentence_indices=tuple(d.get("sentence_indices", ())),
        )


@dataclass(frozen=True)
class SynthesisRecord:
    doi_or_title: str
    material_name: str
    method_name: str
    method_details: str = NOT_SPECIFIED
    reagents: str = NOT_SPECIFIED
    conditions: str = NOT_SPECIFIED
    equipment: str = NOT_SPECIFIED
    sentence_indices: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if not self.material_name or not self.method_name:
            raise RecordError(
                "synthesis record requires non-empty material_name and method_name"
            )
        # Empty detail fields are normalized to the sentinel.
        for name in ("method_details", "reagents", "conditions", "equipment"):
            if not getattr(self, name):
                object.__setattr__(self, name, NOT_SPECIFIED)

    @property
    def kind(self) -> str:
        return "synthesis"

    def field_values(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in SYNTHESIS_FIELDS}

    def to_dict(self) -> dict[str, Any]:
        d = self.field_values()
        d["sentence_indices"] = list(self.sentence_indices)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthesisRecord":
        kwargs = {name: str(d.get(name) or NOT_SPECIFIED) for name in SYNTHESIS_FIELDS}
        kwargs["doi_or_title"] = str(d.get("doi_or_title", ""))
        kwargs["material_name"] = str(d["material_name"])
        kwargs["method_name"] = str(d["method_name"])
        return cls(sentence_indices=tuple(d.get("sentence_indices", ())), **kwargs)


Record = PerformanceRecord | SynthesisRecord


def record_from_dict(d: dict[str, Any]) -> Record:
    """Build whichever record kind the dict's keys describe."""
    if "method_name" in d:
        return SynthesisRecord.from_dict(d)
    return PerformanceRecord.from_dict(d)
