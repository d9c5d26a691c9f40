"""HTTP API binding the pipeline into a deployable service.

JSON over HTTP; the full session trace is returned verbatim so the
console can display it. The service is stateless between requests
except for the database and the export directory: restarting loses no
stored data. Sessions are additionally kept in memory so the passive
learning opt-in (/examples) can find recent ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import Response

from .agents import ModelRoute, ROLES, SessionConfig, SessionLimits, run_session
from .corpus import Document
from .exemplar import ExampleStore
from .extraction import extract
from .kb import KnowledgeBase
from .llm import HttpChatClient


@dataclass
class ServiceConfig:
    db_url: str
    export_dir: Path = Path("exports")
    learning_mode: str = "passive"  # "active" | "passive"
    retrieval_k: int = 3
    limits: SessionLimits = field(default_factory=SessionLimits)
    # role -> {"model": ..., "base_url": ..., "api_key_env": ...}
    model_routes: dict[str, dict] = field(default_factory=dict)
    extraction_endpoint: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        raw = json.loads(Path(path).read_text("utf-8"))
        limits = raw.get("limits", {})
        return cls(
            db_url=raw["db_url"],
            export_dir=Path(raw.get("export_dir", "exports")),
            learning_mode=raw.get("learning_mode", "passive"),
            retrieval_k=raw.get("retrieval_k", 3),
            limits=SessionLimits(
                max_repair_rounds=limits.get("max_repair_rounds", 3),
                row_cap=limits.get("row_cap", 10_000),
                statement_timeout_s=limits.get("statement_timeout_s", 30.0),
            ),
            model_routes=raw.get("model_routes", {}),
            extraction_endpoint=raw.get("extraction_endpoint", {}),
        )

    def build_route(self) -> ModelRoute:
        clients = {}
        models = {}
        for role in ROLES:
            spec = self.model_routes.get(role) or self.model_routes.get("default") or {}
            clients[role] = HttpChatClient(
                base_url=spec.get("base_url", "http://localhost:11434"),
                model=spec.get("model", ""),
                api_key_env=spec.get("api_key_env", "MATKB_API_KEY"),
            )
            models[role] = spec.get("model", "")
        return ModelRoute(clients=clients, models=models)


def create_app(
    config: ServiceConfig,
    route: ModelRoute | None = None,
    extraction_client=None,
) -> FastAPI:
    """Application factory. Tests pass scripted clients via `route` and
    `extraction_client`; production builds HTTP clients from config."""
    app = FastAPI(title="matkb", version="0.1.0")
    kb = KnowledgeBase(config.db_url)
    kb.init_schema()
    store = ExampleStore(kb)
    state = {
        "route": route or config.build_route(),
        "models": {
            r: (
                config.model_routes.get(r)
                or config.model_routes.get("default")
                or {}
            ).get("model", "")
            for r in ROLES
        },
        "sessions": {},
        "extraction_client": extraction_client,
    }
    config.export_dir.mkdir(parents=True, exist_ok=True)

    def _session_config(query: str) -> SessionConfig:
        examples = [e.to_dict() for e in store.retrieve_examples(query, config.retrieval_k)]
        return SessionConfig(
            kb=kb,
            route=state["route"],
            limits=config.limits,
            export_dir=config.export_dir,
            examples=examples,
        )

    @app.post("/query")
    def query(payload: dict = Body(...)):
        text = (payload.get("query") or "").strip()
        if not text:
            raise HTTPException(status_code=400, detail="empty query")
        mode = payload.get("learning_mode") or config.learning_mode
        session = run_session(text, _session_config(text))
        state["sessions"][session.id] = session
        storable = False
        stored_example = None
        if session.succeeded:
            if mode == "active":
                should_store, _rationale = store.judge_learning_value(
                    session,
                    state["route"].client("learner"),
                    state["route"].model("learner"),
                )
                if should_store:
                    stored_example = store.store_example(session, mode="active").to_dict()
            else:
                storable = True
        body = {
            "session_id": session.id,
            "intent": session.intent.value if session.intent else None,
            "validation": session.validation,
            "succeeded": session.succeeded,
            "storable": storable,
            "stored_example": stored_example,
            "trace": session.to_dict(),
        }
        if session.answer is not None:
            body["answer"] = session.answer
        if session.export_id:
            body["export_id"] = session.export_id
        return body

    @app.post("/examples", status_code=201)
    def save_example(payload: dict = Body(...)):
        session_id = payload.get("session_id", "")
        session = state["sessions"].get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        if not session.succeeded:
            raise HTTPException(status_code=409, detail="session not eligible")
        existing = {e["sql"] for e in kb.all_examples()}
        entry = store.store_example(session, mode="passive")
        already = session.executed_sql in existing
        return Response(
            content=json.dumps(entry.to_dict()),
            media_type="application/json",
            status_code=200 if already else 201,
        )

    @app.get("/export/{export_id}")
    def download_export(export_id: str):
        path = config.export_dir / f"{export_id}.csv"
        if not path.exists():
            raise HTTPException(status_code=404, detail="unknown export id")
        return Response(
            content=path.read_bytes(),
            media_type="text/csv",
            headers={
                "Content-Disposition": f'attachment; filename="{export_id}.csv"'
            },
        )

    @app.get("/audit")
    def audit(limit: int = 50):
        return {"entries": kb.audit_page(limit)}

    @app.get("/models")
    def get_models():
        return {"routes": state["models"]}

    @app.put("/models")
    def put_models(payload: dict = Body(...)):
        routes = payload.get("routes")
        if not isinstance(routes, dict):
            raise HTTPException(status_code=422, detail="routes must be an object")
        unknown = set(routes) - set(ROLES)
        if unknown:
            raise HTTPException(
                status_code=422, detail=f"unknown roles: {sorted(unknown)}"
            )
        for role, model in routes.items():
            if not isinstance(model, str) or not model:
                raise HTTPException(
                    status_code=422, detail=f"invalid model for role {role}"
                )
            state["models"][role] = model
            state["route"].models[role] = model
        return {"routes": state["models"]}

    @app.post("/extract")
    def extract_document(payload: dict = Body(...)):
        client = state["extraction_client"]
        if client is None:
            spec = config.extraction_endpoint
            if not spec:
                raise HTTPException(status_code=503, detail="no extraction endpoint configured")
            client = HttpChatClient(
                base_url=spec.get("base_url", ""),
                model=spec.get("model", ""),
                api_key_env=spec.get("api_key_env", "MATKB_API_KEY"),
            )
        try:
            doc = Document.from_dict(payload["document"])
        except (KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid document: {exc}")
        result = extract(doc, client)
        return result.to_dict()

    app.state.kb = kb
    app.state.store = store
    app.state.service_state = state
    return app
