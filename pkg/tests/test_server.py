import io
import json

import pytest
from fastapi.testclient import TestClient

from matkb.agents import ModelRoute
from matkb.corpus import ingest_text
from matkb.llm import ScriptedChatClient
from matkb.server import ServiceConfig, create_app

from conftest import (
    DispatchClient,
    pbpc_extraction_result,
    synthesis_extraction_result,
)


class RecordingClient(DispatchClient):
    """DispatchClient that also records the model kwarg per call."""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.models_used = []

    def complete(self, messages, **kwargs):
        self.models_used.append(kwargs.get("model", ""))
        return super().complete(messages, **kwargs)


SQL_MAP = {
    "how many performance records are there": "SELECT COUNT(*) FROM performance_records",
    "how many articles are there": "SELECT COUNT(*) FROM articles",
    "show the performance records": (
        "SELECT material_name, parameter, value FROM performance_records ORDER BY id"
    ),
    "show broken": "SELECT * FROM no_such_table",
}


@pytest.fixture
def service(tmp_path):
    config = ServiceConfig(
        db_url=f"sqlite:///{tmp_path}/service.db",
        export_dir=tmp_path / "exports",
        learning_mode="passive",
        model_routes={"default": {"model": "default-model"}},
    )
    client = RecordingClient(
        sql_map={**SQL_MAP, "show broken": "SELECT * FROM no_such_table"}
    )
    app = create_app(config, route=ModelRoute.uniform(client, "default-model"))
    app.state.kb.upsert_result(pbpc_extraction_result())
    app.state.kb.upsert_result(synthesis_extraction_result())
    http = TestClient(app)
    yield http, app, client
    app.state.kb.close()


class TestQuery:
    def test_empty_query_400(self, service):
        http, _, _ = service
        assert http.post("/query", json={"query": "  "}).status_code == 400
        assert http.post("/query", json={}).status_code == 400

    def test_aggregate_query(self, service):
        http, _, _ = service
        resp = http.post("/query", json={"query": "how many performance records are there"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["succeeded"] is True
        assert body["intent"] == "aggregate"
        assert body["answer"] == 6
        assert body["storable"] is True
        assert "export_id" not in body
        assert body["trace"]["candidates"][0]["outcome"] == "executed"

    def test_detail_query_and_export_download(self, service):
        http, _, _ = service
        resp = http.post("/query", json={"query": "show the performance records"})
        body = resp.json()
        assert body["succeeded"] is True
        assert body["intent"] == "detail"
        export_id = body["export_id"]
        dl = http.get(f"/export/{export_id}")
        assert dl.status_code == 200
        assert dl.headers["content-type"].startswith("text/csv")
        assert f'filename="{export_id}.csv"' in dl.headers["content-disposition"]
        assert "1.91 g/cm ³" in dl.text

    def test_failed_session_is_200_with_trace(self, service):
        http, _, _ = service
        resp = http.post("/query", json={"query": "show broken"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["succeeded"] is False
        assert body["storable"] is False
        assert "repair rounds exhausted" in body["trace"]["failure_reason"]

    def test_destructive_request_denied_in_trace(self, service):
        http, app, _ = service
        before = app.state.kb.table_counts()["performance_records"]
        resp = http.post("/query", json={"query": "delete all performance records"})
        body = resp.json()
        assert body["succeeded"] is False
        assert body["intent"] == "unsupported"
        assert app.state.kb.table_counts()["performance_records"] == before

    def test_active_mode_stores_judged_example(self, service):
        http, app, _ = service
        resp = http.post(
            "/query",
            json={
                "query": "how many performance records are there",
                "learning_mode": "active",
            },
        )
        body = resp.json()
        assert body["storable"] is False
        assert body["stored_example"]["sql"] == "SELECT COUNT(*) FROM performance_records"
        assert len(app.state.kb.all_examples()) == 1


class TestExamples:
    def test_unknown_session_404(self, service):
        http, _, _ = service
        assert http.post("/examples", json={"session_id": "nope"}).status_code == 404

    def test_failed_session_409(self, service):
        http, _, _ = service
        body = http.post("/query", json={"query": "show broken"}).json()
        resp = http.post("/examples", json={"session_id": body["session_id"]})
        assert resp.status_code == 409

    def test_first_store_201_then_200(self, service):
        http, app, _ = service
        body = http.post(
            "/query", json={"query": "how many performance records are there"}
        ).json()
        first = http.post("/examples", json={"session_id": body["session_id"]})
        assert first.status_code == 201
        assert first.json()["mode"] == "passive"
        second = http.post("/examples", json={"session_id": body["session_id"]})
        assert second.status_code == 200
        assert second.json()["id"] == first.json()["id"]
        assert len(app.state.kb.all_examples()) == 1

    def test_stored_examples_feed_generation(self, service):
        http, _, client = service
        body = http.post(
            "/query", json={"query": "how many performance records are there"}
        ).json()
        http.post("/examples", json={"session_id": body["session_id"]})
        http.post("/query", json={"query": "how many articles are there"})
        generator_calls = [
            c for c in client.calls if "translate questions" in c[0]["content"]
        ]
        assert "Question: how many performance records are there" in generator_calls[-1][0]["content"]


class TestExport:
    def test_unknown_export_404(self, service):
        http, _, _ = service
        assert http.get("/export/doesnotexist").status_code == 404


class TestAudit:
    def test_audit_newest_first(self, service):
        http, _, _ = service
        http.post("/query", json={"query": "how many performance records are there"})
        http.post("/query", json={"query": "how many articles are there"})
        entries = http.get("/audit", params={"limit": 10}).json()["entries"]
        assert len(entries) == 2
        assert entries[0]["user_query"] == "how many articles are there"
        ids = [e["id"] for e in entries]
        assert ids == sorted(ids, reverse=True)

    def test_audit_limit(self, service):
        http, _, _ = service
        for _ in range(3):
            http.post("/query", json={"query": "how many articles are there"})
        entries = http.get("/audit", params={"limit": 2}).json()["entries"]
        assert len(entries) == 2


class TestModels:
    def test_get_models(self, service):
        http, _, _ = service
        routes = http.get("/models").json()["routes"]
        assert set(routes) == {
            "router", "generator", "repairer", "validator", "summarizer", "learner",
        }
        assert routes["generator"] == "default-model"

    def test_put_invalid_payloads_422(self, service):
        http, _, _ = service
        assert http.put("/models", json={"routes": "x"}).status_code == 422
        assert http.put("/models", json={"routes": {"bogus": "m"}}).status_code == 422
        assert http.put("/models", json={"routes": {"generator": ""}}).status_code == 422
        assert http.put("/models", json={}).status_code == 422

    def test_hot_swap_affects_next_session(self, service):
        http, _, client = service
        resp = http.put("/models", json={"routes": {"generator": "stronger-model"}})
        assert resp.status_code == 200
        assert resp.json()["routes"]["generator"] == "stronger-model"
        client.models_used.clear()
        http.post("/query", json={"query": "how many articles are there"})
        assert "stronger-model" in client.models_used
        assert http.get("/models").json()["routes"]["generator"] == "stronger-model"


class TestExtract:
    def make_document_payload(self):
        body = "The density of PbPc is 1.91 g/cm ³. It was measured carefully."
        doc = ingest_text(io.BytesIO(body.encode("utf-8")), doc_id="d1")
        return doc.to_dict()

    def test_no_endpoint_503(self, tmp_path):
        config = ServiceConfig(db_url=f"sqlite:///{tmp_path}/x.db", export_dir=tmp_path / "e")
        app = create_app(
            config, route=ModelRoute.uniform(ScriptedChatClient(default="detail"))
        )
        http = TestClient(app)
        resp = http.post("/extract", json={"document": self.make_document_payload()})
        assert resp.status_code == 503
        app.state.kb.close()

    def test_extract_round_trip(self, tmp_path):
        payload = {
            "title": "PbPc study",
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
        extraction_client = ScriptedChatClient([json.dumps(payload)])
        config = ServiceConfig(db_url=f"sqlite:///{tmp_path}/x.db", export_dir=tmp_path / "e")
        app = create_app(
            config,
            route=ModelRoute.uniform(ScriptedChatClient(default="detail")),
            extraction_client=extraction_client,
        )
        http = TestClient(app)
        resp = http.post("/extract", json={"document": self.make_document_payload()})
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "success"
        assert body["performance"][0]["value"] == "1.91 g/cm ³"
        app.state.kb.close()

    def test_invalid_document_400(self, tmp_path):
        config = ServiceConfig(db_url=f"sqlite:///{tmp_path}/x.db", export_dir=tmp_path / "e")
        app = create_app(
            config,
            route=ModelRoute.uniform(ScriptedChatClient(default="detail")),
            extraction_client=ScriptedChatClient(default="{}"),
        )
        http = TestClient(app)
        resp = http.post("/extract", json={"document": {"nonsense": True}})
        assert resp.status_code == 400
        app.state.kb.close()


class TestServiceConfig:
    def test_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps(
                {
                    "db_url": "sqlite:///kb.db",
                    "learning_mode": "active",
                    "retrieval_k": 5,
                    "limits": {"max_repair_rounds": 2, "row_cap": 100},
                    "model_routes": {"default": {"model": "m", "base_url": "http://x"}},
                }
            )
        )
        config = ServiceConfig.from_file(path)
        assert config.learning_mode == "active"
        assert config.retrieval_k == 5
        assert config.limits.max_repair_rounds == 2
        assert config.limits.row_cap == 100
        route = config.build_route()
        assert route.model("generator") == "m"
