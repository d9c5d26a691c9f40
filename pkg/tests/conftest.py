import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from matkb.extraction import ExtractionResult, Status
from matkb.kb import KnowledgeBase
from matkb.records import PerformanceRecord, SynthesisRecord

# Sample rows published with the source study's supplementary data.
PBPC_KEY = "Chem. Mater. 2022, 34, 2238–2248"

PBPC_ROWS = [
    ("PbPc", "density", "1.91 g/cm ³"),
    ("lead phthalocyanine (PbPc)", "adsorption energy", "-76.8 kcal/mol"),
    ("lead phthalocyanine (PbPc)", "adsorption energy", "-47.6 kcal/mol"),
    (
        "lead phthalocyanine (PbPc)",
        "unit cell parameters",
        "a = 52 ± 1 Å, b = 14 ± 1 Å, α = 88 ± 1°",
    ),
    (
        "lead phthalocyanine (PbPc)",
        "unit cell parameters",
        "a = b = 14 ± 1 Å, α = 88 ± 1°",
    ),
    ("lead phthalocyanine", "gas sensitivity", "NO2 sensor measurements"),
]

SYNTH_SAMPLE_KEY = (
    "Synthesis of PbCrO₄ nanorods-Ti₃C₂Tx MXene composites: A sensitive "
    "photoelectrochemical sensor for the detection of cysteine in human blood serum"
)

SYNTH_SAMPLE_ROWS = [
    {
        "material_name": "PbCrO₄ -MXene composite",
        "method_name": "Hydrothermal synthesis of PbCrO₄",
        "method_details": "PbCrO₄ was prepared by hydrothermal method with slight modification.",
        "reagents": "K₂Cr₂O₇ (5 mmol), Pb(CH₃COO)₂ (5 mmol), deionized water",
        "conditions": "150°C for 20 h (hydrothermal), 60°C vacuum drying",
        "equipment": "Teflon-lined autoclave, centrifuge, vacuum dryer, tube furnace",
    },
    {
        "material_name": "PbCrO4-MXene composite",
        "method_name": "Composite preparation of PbCrO4-MXene",
        "method_details": "Sonicated for 1.5 h, centrifuged, washed with water, dried and annealed.",
        "reagents": "PbCrO4 (100 mg), MXene dispersion (5 mg/mL, 1 mL), methanol (1 mL)",
        "conditions": "60°C vacuum drying, 300°C annealing for 2 h",
        "equipment": "Ultrasonic bath, centrifuge, vacuum dryer, tube furnace",
    },
]


def pbpc_extraction_result() -> ExtractionResult:
    return ExtractionResult(
        document_id="pbpc-doc",
        title=PBPC_KEY,
        doi=None,
        performance=tuple(
            PerformanceRecord(PBPC_KEY, material, parameter, value)
            for material, parameter, value in PBPC_ROWS
        ),
        synthesis=(),
        attempt_count=1,
        status=Status.SUCCESS,
    )


def synthesis_extraction_result() -> ExtractionResult:
    return ExtractionResult(
        document_id="synth-doc",
        title=SYNTH_SAMPLE_KEY,
        doi=None,
        performance=(),
        synthesis=tuple(
            SynthesisRecord(doi_or_title=SYNTH_SAMPLE_KEY, **row)
            for row in SYNTH_SAMPLE_ROWS
        ),
        attempt_count=1,
        status=Status.SUCCESS,
    )


class DispatchClient:
    """Test double that answers each agent role from its system prompt.

    `sql_map` maps question text to the SQL the generator should emit;
    `intents` maps question text to the router's answer (default: "how
    many" questions are aggregate, everything else detail).
    """

    def __init__(self, sql_map=None, intents=None, judge="store: useful mapping"):
        self.sql_map = dict(sql_map or {})
        self.intents = dict(intents or {})
        self.judge = judge
        self.calls = []

    def _question(self, user_content):
        if user_content.startswith("Question: "):
            return user_content.split("\n", 1)[0][len("Question: "):]
        return user_content

    def complete(self, messages, **kwargs):
        self.calls.append(messages)
        system = messages[0]["content"]
        user = messages[-1]["content"]
        if "Classify the user's database question" in system:
            if user in self.intents:
                return self.intents[user]
            return "aggregate" if user.lower().startswith("how many") else "detail"
        if "translate questions" in system or "A SQL statement failed" in system:
            question = self._question(user)
            return self.sql_map.get(question, f"SELECT COUNT(*) FROM missing_table")
        if "plausibly answers" in system:
            return "aligned"
        if "Summarize the query outcome" in system:
            return "Query answered."
        if "worth storing" in system:
            return self.judge
        raise AssertionError(f"unrecognized role prompt: {system[:60]}")


@pytest.fixture
def kb(tmp_path):
    kb = KnowledgeBase(f"sqlite:///{tmp_path}/kb.db")
    kb.init_schema()
    yield kb
    kb.close()


@pytest.fixture
def seeded_kb(kb):
    kb.upsert_result(pbpc_extraction_result())
    kb.upsert_result(synthesis_extraction_result())
    return kb
