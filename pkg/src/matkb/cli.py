"""Command-line entry points: score, ingest, extract, load, bench, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .agents import SessionConfig, SessionLimits
from .exemplar import BenchmarkSuite, run_benchmark
from .extraction import ExtractionResult, extract as run_extract
from .kb import CurationPolicy, KnowledgeBase
from .llm import HttpChatClient, ScriptedChatClient
from .matching import evaluate
from .records import record_from_dict
from .similarity import SimilarityWeights


@click.group()
def main() -> None:
    """Literature-derived 2D-materials knowledge base toolkit."""


def _load_records(path: str):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_dict(json.loads(line)))
    return records


@main.command()
@click.argument("gold", type=click.Path(exists=True))
@click.argument("predictions", type=click.Path(exists=True))
@click.option("--threshold", default=0.65, show_default=True)
@click.option("--weights", "weights_file", type=click.Path(exists=True), default=None)
def score(gold: str, predictions: str, threshold: float, weights_file: str | None) -> None:
    """Score newline-delimited JSON prediction records against gold."""
    weights = None
    if weights_file:
        raw = json.loads(Path(weights_file).read_text("utf-8"))
        weights = SimilarityWeights(
            ratio_w=raw.get("ratio_w", 1 / 3),
            bigram_w=raw.get("bigram_w", 1 / 3),
            trigram_w=raw.get("trigram_w", 1 / 3),
            field_weights=raw.get("field_weights", {}),
        )
    report = evaluate(_load_records(gold), _load_records(predictions), threshold, weights)
    click.echo(json.dumps(report.to_dict(), indent=2))
    click.echo()
    click.echo(f"{'metric':<12}{'value':>10}")
    click.echo("-" * 22)
    for name in ("tp", "fp", "fn"):
        click.echo(f"{name:<12}{getattr(report, name):>10}")
    for name in ("precision", "recall", "f1"):
        click.echo(f"{name:<12}{getattr(report, name):>10.4f}")


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def ingest(paths: tuple[str, ...], out_dir: str) -> None:
    """Ingest plain-text files into Document JSON files."""
    from .corpus import ingest_text

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for path in paths:
        doc = ingest_text(path)
        target = out / f"{Path(path).stem}.json"
        target.write_text(json.dumps(doc.to_dict(), ensure_ascii=False, indent=2), "utf-8")
        click.echo(f"{path} -> {target} ({len(doc.sentences)} sentences)")


@main.command(name="extract")
@click.argument("docs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--endpoint", required=True, help="OpenAI-compatible base URL")
@click.option("--model", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--api-key-env", default="MATKB_API_KEY", show_default=True)
def extract_cmd(docs: tuple[str, ...], endpoint: str, model: str, out_dir: str, api_key_env: str) -> None:
    """Run schema-constrained extraction on Document JSON files."""
    from .corpus import Document

    client = HttpChatClient(base_url=endpoint, model=model, api_key_env=api_key_env)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for path in docs:
        doc = Document.from_dict(json.loads(Path(path).read_text("utf-8")))
        result = run_extract(doc, client)
        target = out / f"{Path(path).stem}.result.json"
        target.write_text(json.dumps(result.to_dict(), ensure_ascii=False, indent=2), "utf-8")
        click.echo(
            f"{path}: {result.status.value}, "
            f"{len(result.performance)} performance, {len(result.synthesis)} synthesis"
        )


@main.command()
@click.argument("results", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--db", "db_url", required=True)
@click.option("--max-value-chars", default=2000, show_default=True)
def load(results: tuple[str, ...], db_url: str, max_value_chars: int) -> None:
    """Load extraction result JSON files into the knowledge base."""
    kb = KnowledgeBase(db_url)
    kb.init_schema()
    policy = CurationPolicy(max_value_chars=max_value_chars)
    for path in results:
        result = ExtractionResult.from_dict(json.loads(Path(path).read_text("utf-8")))
        counts = kb.upsert_result(result, policy)
        click.echo(
            f"{path}: inserted={counts.inserted} "
            f"deduplicated={counts.deduplicated} rejected={counts.rejected}"
        )


@main.command()
@click.option("--suite", "suite_file", required=True, type=click.Path(exists=True))
@click.option("--db", "db_url", required=True)
@click.option("--mock", "mock_script", default="none", show_default=True,
              help="Path to a JSON list of scripted model responses, or 'none'")
@click.option("--endpoint", default=None, help="OpenAI-compatible base URL when not mocking")
@click.option("--model", default="")
def bench(suite_file: str, db_url: str, mock_script: str, endpoint: str | None, model: str) -> None:
    """Run the three-tier benchmark suite."""
    from .agents import ModelRoute

    suite = BenchmarkSuite.from_json(Path(suite_file).read_text("utf-8"))
    kb = KnowledgeBase(db_url)
    kb.init_schema()
    if mock_script != "none":
        responses = json.loads(Path(mock_script).read_text("utf-8"))
        client = ScriptedChatClient(responses=list(responses))
    elif endpoint:
        client = HttpChatClient(base_url=endpoint, model=model)
    else:
        raise click.UsageError("provide --endpoint or --mock")
    config = SessionConfig(
        kb=kb,
        route=ModelRoute.uniform(client, model),
        limits=SessionLimits(),
        export_dir=Path("exports"),
    )
    report = run_benchmark(suite, config)
    click.echo(json.dumps(report.accuracy, indent=2))


@main.command()
@click.option("--config", "config_file", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(config_file: str, host: str, port: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .server import ServiceConfig, create_app

    app = create_app(ServiceConfig.from_file(config_file))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
