"""Acceptance gate: every release-blocking criterion, one test per
criterion, each emitting a single PASS line on success.

Runtime-bounded criteria measure wall-clock time and fail when the
budget is exceeded.
"""

import io
import json
import random
import sys
import time

import pytest

from matkb.agents import ModelRoute, SessionConfig, SessionLimits, run_session
from matkb.corpus import ingest_text
from matkb.exemplar import generate_suite, run_benchmark
from matkb.extraction import Status, extract, failure_rate
from matkb.llm import ScriptedChatClient
from matkb.matching import MatchGraph, evaluate, max_matching
from matkb.records import PerformanceRecord
from matkb.safety import safety_check
from matkb.similarity import ngram_jaccard, ratio_similarity

from conftest import DispatchClient, PBPC_ROWS, SYNTH_SAMPLE_ROWS
from oracles import oracle_max_matching, oracle_ngram_jaccard, oracle_ratio
from test_safety import BENIGN, DESTRUCTIVE


def _passed(name: str) -> None:
    print(f"PASS: {name}", file=sys.stderr)


def _random_string(rng, max_len=12, alphabet="abc"):
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, max_len)))


def test_metric_oracle_equivalence():
    """ratio_similarity and ngram_jaccard agree exactly with brute-force
    oracles on 10,000 random pairs (length <= 12, 3-letter alphabet),
    in under 10 seconds."""
    rng = random.Random(20260826)
    start = time.perf_counter()
    for _ in range(10_000):
        s, t = _random_string(rng), _random_string(rng)
        assert ratio_similarity(s, t) == oracle_ratio(s, t), (s, t)
        assert ngram_jaccard(s, t, 2) == oracle_ngram_jaccard(s, t, 2), (s, t)
        assert ngram_jaccard(s, t, 3) == oracle_ngram_jaccard(s, t, 3), (s, t)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"metric oracle run took {elapsed:.2f}s"
    _passed(f"metric oracle equivalence, 10,000 pairs in {elapsed:.2f}s")


def test_matching_oracle_equivalence():
    """max_matching cardinality equals the brute-force injective-assignment
    maximum on 1,000 random graphs (<= 6 gold x 6 pred); P/R/F1 identities
    hold to 1e-12; under 5 seconds."""
    rng = random.Random(7)
    start = time.perf_counter()
    for _ in range(1_000):
        gold_n = rng.randint(0, 6)
        pred_n = rng.randint(0, 6)
        edges = []
        for g in range(gold_n):
            for p in range(pred_n):
                if rng.random() < 0.4:
                    edges.append((g, p, round(rng.uniform(0.65, 1.0), 6)))
        graph = MatchGraph(
            gold_count=gold_n, pred_count=pred_n, edges=tuple(edges), threshold=0.65
        )
        report = max_matching(graph)
        best_card, _best_sim = oracle_max_matching(gold_n, pred_n, edges)
        assert report.tp == best_card
        assert report.fp == pred_n - report.tp
        assert report.fn == gold_n - report.tp
        precision = report.tp / pred_n if pred_n else 0.0
        recall = report.tp / gold_n if gold_n else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        assert abs(report.precision - precision) <= 1e-12
        assert abs(report.recall - recall) <= 1e-12
        assert abs(report.f1 - f1) <= 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"matching oracle run took {elapsed:.2f}s"
    _passed(f"matching oracle equivalence, 1,000 graphs in {elapsed:.2f}s")


def test_merge_penalty():
    """One prediction that merges n gold facts is held to recall <= 1/n
    for n in 2..5."""
    rng = random.Random(11)
    for n in range(2, 6):
        for _ in range(50):
            values = [f"{rng.uniform(1, 9):.2f} eV" for _ in range(n)]
            gold = [
                PerformanceRecord("doc", f"material-{rng.randint(1, 3)}", "band gap", v)
                for v in values
            ]
            merged = PerformanceRecord(
                "doc", gold[0].material_name, "band gap", "; ".join(values)
            )
            report = evaluate(gold, [merged], threshold=0.65)
            assert report.recall <= 1.0 / n + 1e-12, (n, report.recall)
    _passed("merge penalty: recall <= 1/n for n in 2..5 merged facts")


def test_safety_gauntlet(seeded_kb, tmp_path):
    """The full destructive corpus is denied and the full benign corpus
    allowed; 1,000 adversarial mock-driven sessions leave every data
    table's row count unchanged."""
    assert len(DESTRUCTIVE) >= 40 and len(BENIGN) >= 40
    for sql in DESTRUCTIVE:
        assert not safety_check(sql).allowed, sql
    for sql in BENIGN:
        assert safety_check(sql).allowed, sql

    before = seeded_kb.table_counts()
    before.pop("audit_log")
    limits = SessionLimits(max_repair_rounds=1)
    for i in range(1_000):
        sql = DESTRUCTIVE[i % len(DESTRUCTIVE)]
        client = ScriptedChatClient(["detail", sql, sql])
        config = SessionConfig(
            kb=seeded_kb,
            route=ModelRoute.uniform(client),
            limits=limits,
            export_dir=tmp_path / "exports",
        )
        session = run_session("show everything in the data", config)
        assert not session.succeeded
    after = seeded_kb.table_counts()
    assert after.pop("audit_log") >= 1_000  # sessions are audited, data untouched
    assert after == before
    _passed(
        "safety gauntlet: "
        f"{len(DESTRUCTIVE)} destructive denied, {len(BENIGN)} benign allowed, "
        "1,000 adversarial sessions changed no data row counts"
    )


def test_sample_fixture_round_trip(seeded_kb, tmp_path):
    """Loading the published sample rows and querying through the full
    session pipeline returns the PbPc density value and the synthesis
    method names."""
    def detail_session(query, sql):
        client = ScriptedChatClient(["detail", sql, "aligned", "ok"])
        config = SessionConfig(
            kb=seeded_kb, route=ModelRoute.uniform(client), export_dir=tmp_path / "e"
        )
        return run_session(query, config)

    density = detail_session(
        "what is the density of PbPc",
        "SELECT value FROM performance_records "
        "WHERE material_name = 'PbPc' AND parameter = 'density'",
    )
    assert density.succeeded
    assert [list(r) for r in density.result.rows] == [["1.91 g/cm ³"]]
    with open(density.export_path, encoding="utf-8-sig") as fh:
        assert "1.91 g/cm ³" in fh.read()

    methods = detail_session(
        "which synthesis methods were used",
        "SELECT method_name FROM synthesis_records ORDER BY id",
    )
    assert methods.succeeded
    got = [r[0] for r in methods.result.rows]
    assert got == [row["method_name"] for row in SYNTH_SAMPLE_ROWS]

    # All six performance rows from the sample table survive the round trip.
    all_rows = detail_session(
        "show all performance rows",
        "SELECT material_name, parameter, value FROM performance_records ORDER BY id",
    )
    assert [tuple(r) for r in all_rows.result.rows] == PBPC_ROWS
    _passed(
        "sample fixture round trip: (PbPc, density) -> '1.91 g/cm ³' "
        "and synthesis method names intact through run_session"
    )


def _valid_extraction_payload():
    return json.dumps(
        {
            "title": "doc",
            "doi": None,
            "performance": [
                {
                    "material_name": "PbPc",
                    "parameter": "density",
                    "value": "1.91 g/cm ³",
                    "sentences": [0],
                }
            ],
            "synthesis": [],
        }
    )


def _doc():
    return ingest_text(
        io.BytesIO("The density of PbPc is 1.91 g/cm ³.".encode("utf-8")),
        doc_id="d1",
        title="doc",
    )


def test_extraction_determinism():
    """Scripted-endpoint extraction is bit-reproducible, and one schema
    failure in twenty documents gives failure_rate exactly 0.05."""
    def run_batch():
        results = []
        for i in range(20):
            if i == 7:
                client = ScriptedChatClient(["not json", "{bad", "{{{"])
            else:
                client = ScriptedChatClient([_valid_extraction_payload()])
            results.append(extract(_doc(), client))
        return results

    first = run_batch()
    second = run_batch()
    assert [r.to_dict() for r in first] == [r.to_dict() for r in second]
    assert [r.status for r in first].count(Status.SCHEMA_FAILURE) == 1
    assert [r.attempt_count for r in first] == [r.attempt_count for r in second]
    assert failure_rate(first) == 0.05
    assert failure_rate(first) == failure_rate(second)
    _passed(
        "extraction determinism: 20-document batch bit-reproducible, "
        "19/20 success -> failure_rate 0.05 exactly"
    )


@pytest.mark.parametrize("rounds", [1, 2, 3])
def test_repair_loop_bound(seeded_kb, tmp_path, rounds):
    """A never-fixing mock yields exactly max_repair_rounds repaired
    candidates before the session fails."""
    responses = ["detail", "SELECT * FROM nope_0"]
    responses += [f"SELECT * FROM nope_{i + 1}" for i in range(rounds + 3)]
    client = ScriptedChatClient(responses)
    config = SessionConfig(
        kb=seeded_kb,
        route=ModelRoute.uniform(client),
        limits=SessionLimits(max_repair_rounds=rounds),
        export_dir=tmp_path / "exports",
    )
    session = run_session("show the rows", config)
    assert not session.succeeded
    repaired = [c for c in session.candidates if c.origin == "repaired"]
    assert len(repaired) == rounds
    assert len(session.candidates) == rounds + 1
    _passed(f"repair loop bound: exactly {rounds} repaired candidates for max_repair_rounds={rounds}")


def _benchmark_config(kb, suite, tmp_path, corrupt=()):
    sql_map = {}
    intents = {}
    for q in suite.questions:
        sql_map[q.question] = q.oracle_sql
        intents[q.question] = (
            "aggregate" if q.question.startswith("how many") else "detail"
        )
    for question in corrupt:
        sql_map[question] = "SELECT COUNT(*) FROM articles WHERE year = -1"
        intents[question] = "aggregate"
    return SessionConfig(
        kb=kb,
        route=ModelRoute.uniform(DispatchClient(sql_map=sql_map, intents=intents)),
        export_dir=tmp_path / "exports",
    )


def test_benchmark_harness(seeded_kb, tmp_path):
    """The generated three-tier suite (20 questions per tier) scores
    1.0/1.0/1.0 with an all-correct mock; injecting 10% scripted failures
    measures accuracy within one question of the injected rate."""
    suite = generate_suite(seeded_kb, per_tier=20)
    by_tier = suite.by_tier()
    assert all(len(qs) >= 20 for qs in by_tier.values())

    clean = run_benchmark(suite, _benchmark_config(seeded_kb, suite, tmp_path))
    assert clean.accuracy == {"simple": 1.0, "medium": 1.0, "complex": 1.0}

    rng = random.Random(3)
    rate = 0.10
    corrupt = []
    for tier, questions in by_tier.items():
        k = round(rate * len(questions))
        corrupt += [q.question for q in rng.sample(questions, k)]
    faulty = run_benchmark(
        suite, _benchmark_config(seeded_kb, suite, tmp_path, corrupt=corrupt)
    )
    for tier, questions in by_tier.items():
        n = len(questions)
        injected = 1.0 - round(rate * n) / n
        assert abs(faulty.accuracy[tier] - injected) <= 1.0 / n + 1e-12, (
            tier,
            faulty.accuracy[tier],
            injected,
        )
    _passed(
        "benchmark harness: 1.0/1.0/1.0 clean; 10% fault injection measured "
        f"as {faulty.accuracy} (within one question per tier)"
    )
