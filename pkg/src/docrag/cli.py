"""Operator CLI. A thin client over the HTTP service: commands run against
an in-process app by default, or a remote instance with --server.

Exit codes: 0 success, 1 pipeline degraded, 2 usage or config error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        _fail(f"service unreachable: {exc}", 2)
    if response.status_code == 400 or response.status_code == 422:
        detail = response.json().get("detail", response.text)
        _fail(str(detail), 2)
    if response.status_code != 200:
        _fail(f"service error {response.status_code}: {response.text[:200]}", 1)
    return response.json()


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Parse document pages into a retrieval store and answer questions over it."""
    ctx.obj = {"server": server}


@main.command()
@click.option("--manifest", required=True, type=click.Path(), help="Corpus manifest JSON.")
@click.option("--store", "out_store", required=True, type=click.Path(),
              help="Output ragstore JSONL path.")
@click.option("--config", type=click.Path(), default=None)
@click.option("--policy", type=click.Choice(["always", "on_failure_only"]), default=None)
@click.option("--embedder", type=click.Choice(["gateway", "hashing"]), default=None)
@click.option("--workers", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.option("--dry-run", is_flag=True, help="Print the plan and write nothing.")
@click.pass_context
def ingest(ctx, manifest, out_store, config, policy, embedder, workers, as_json, dry_run):
    """Build a ragstore from a page corpus."""
    payload = {
        "manifest": str(Path(manifest).resolve()),
        "out_store": str(Path(out_store).resolve()),
        "config": str(Path(config).resolve()) if config else None,
        "policy": policy,
        "embedder": embedder,
        "workers": workers,
        "dry_run": dry_run,
    }
    data = _post(_client(ctx.obj["server"]), "/ingest", payload)
    if dry_run:
        click.echo(json.dumps(data, indent=None if as_json else 2))
        sys.exit(0)
    report = data["report"]
    report_path = Path(payload["out_store"] + ".report.json")
    report_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if as_json:
        click.echo(json.dumps(data))
    else:
        click.echo(
            f"ingested {report['pages_ok']} page(s) ({report['pages_failed']} failed), "
            f"{report['regions_extracted']} region(s), {report['records']} record(s) "
            f"-> {', '.join(data['stores'])}"
        )
        for failure in report["failures"]:
            click.echo(f"  failed {failure['page']}: {failure['error']}", err=True)
    sys.exit(0 if report["records"] >= 1 else 1)


@main.command()
@click.argument("question")
@click.option("--store", required=True, type=click.Path(), help="Ragstore JSONL path.")
@click.option("--k", type=int, default=None)
@click.option("--config", type=click.Path(), default=None)
@click.option("--embedder", type=click.Choice(["gateway", "hashing"]), default=None)
@click.option("--retrieve-only", is_flag=True, help="Print hits without calling the LLM.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def query(ctx, question, store, k, config, embedder, retrieve_only, as_json):
    """Answer a question over a built ragstore."""
    payload = {
        "store": str(Path(store).resolve()),
        "question": question,
        "k": k if k is not None else 10,
        "retrieve_only": retrieve_only,
        "config": str(Path(config).resolve()) if config else None,
        "embedder": embedder,
    }
    data = _post(_client(ctx.obj["server"]), "/query", payload)
    if as_json:
        click.echo(json.dumps(data))
    else:
        if data["answer"] is not None:
            click.echo(data["answer"])
        elif data["degraded"]:
            click.echo("(generation unavailable; retrieval hits follow)", err=True)
        for hit in data["hits"]:
            click.echo(
                f"[{hit['rank']}] {hit['doc_id']} p{hit['page_index']} "
                f"score={hit['score']:.4f} {hit['record_id']}"
            )
    sys.exit(1 if data["degraded"] else 0)


@main.command("eval")
@click.option("--mode", required=True, type=click.Choice(["generation", "retrieval"]))
@click.option("--store", required=True, type=click.Path())
@click.option("--qa", required=True, type=click.Path(), help="QA JSONL file.")
@click.option("--k", type=int, default=None)
@click.option("--metric", type=click.Choice(["accuracy", "l3score"]), default=None)
@click.option("--context", type=click.Choice(["gold_page", "retrieval"]), default=None)
@click.option("--config", type=click.Path(), default=None)
@click.option("--embedder", type=click.Choice(["gateway", "hashing"]), default=None)
@click.option("--json", "as_json", is_flag=True, help="Full report including per-item values.")
@click.pass_context
def eval_cmd(ctx, mode, store, qa, k, metric, context, config, embedder, as_json):
    """Score generation accuracy/L3Score or retrieval MRR@10 over a QA set."""
    payload = {
        "mode": mode,
        "store": str(Path(store).resolve()),
        "qa": str(Path(qa).resolve()),
        "k": k,
        "metric": metric,
        "context": context,
        "config": str(Path(config).resolve()) if config else None,
        "embedder": embedder,
    }
    data = _post(_client(ctx.obj["server"]), "/eval", payload)
    if as_json:
        click.echo(json.dumps(data))
    else:
        click.echo(json.dumps({
            data["metric"]: data["value"],
            "stderr": data["stderr"],
            "count": data["count"],
            "skipped": len(data["skipped"]),
        }))
    sys.exit(0)


@main.command("mock-serve")
@click.option("--fixtures", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of fixture files (<key>.txt / <key>.json).")
@click.option("--port", type=int, default=8080)
@click.option("--host", default="127.0.0.1")
@click.option("--dims", type=int, default=256, help="Embedding dimension served.")
def mock_serve_cmd(fixtures, port, host, dims):
    """Run the deterministic mock model gateway in the foreground."""
    import uvicorn

    from .gateway.mock import MockGateway, create_mock_app, load_fixtures

    try:
        loaded = load_fixtures(fixtures)
    except (OSError, ValueError) as exc:
        _fail(f"cannot load fixtures: {exc}", 2)
    app = create_mock_app(MockGateway(loaded, dims=dims))
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
