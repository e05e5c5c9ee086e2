"""Thin command-line client over the pipeline and the HTTP service.

Exit codes: 0 ok, 2 usage error, 3 missing index, 4 provider failure.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .config import load_config
from .errors import (AnswerSynthesisError, EmptyCorpusError, MissingIndexError,
                     ProviderError)
from .pipeline import build_index, load_index, make_retriever, run_bench

EXIT_MISSING_INDEX = 3
EXIT_PROVIDER_FAILURE = 4


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Graph-indexed corpus retrieval: build an index, then query it."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON-lines corpus ({doc_id, text} or {doc_id, chunk_id, text}).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--resume", is_flag=True, help="Reuse the decomposition checkpoint.")
def index(corpus: str, out_dir: str, config_path: str | None, resume: bool) -> None:
    """Build the graph index from a corpus."""
    config = load_config(config_path)
    try:
        built = build_index(corpus, out_dir, config, resume=resume)
    except EmptyCorpusError as exc:
        raise click.UsageError(str(exc)) from exc
    except ProviderError as exc:
        _fail(EXIT_PROVIDER_FAILURE, str(exc))
        return
    _print_stats(built.stats.to_json())
    click.echo(f"index written to {built.out_dir}")


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path())
@click.argument("query_text")
@click.option("--budget", type=int, default=None, help="Context token budget.")
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the retrieval trace JSON here.")
@click.option("--server", "server_url", default=None,
              help="Send the query to a running service instead of loading the index.")
def query(index_dir: str, query_text: str, budget: int | None,
          trace_path: str | None, server_url: str | None) -> None:
    """Answer a question against a built index."""
    if server_url:
        _query_server(server_url, query_text, budget, trace_path)
        return
    try:
        loaded = load_index(index_dir)
        retriever = make_retriever(loaded)
        answer, result = retriever.answer(query_text, budget=budget)
    except MissingIndexError as exc:
        _fail(EXIT_MISSING_INDEX, str(exc))
        return
    except AnswerSynthesisError as exc:
        click.echo(f"retrieval succeeded ({exc.token_count} context tokens) "
                   f"but synthesis failed", err=True)
        _fail(EXIT_PROVIDER_FAILURE, str(exc))
        return
    except ProviderError as exc:
        _fail(EXIT_PROVIDER_FAILURE, str(exc))
        return
    if trace_path:
        Path(trace_path).write_text(
            json.dumps(result.trace, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    for notice in result.trace.get("notices", []):
        click.echo(f"notice: {notice}", err=True)
    click.echo(answer)


def _query_server(server_url: str, query_text: str, budget: int | None,
                  trace_path: str | None) -> None:
    import httpx

    try:
        resp = httpx.post(f"{server_url.rstrip('/')}/query",
                          json={"query": query_text, "budget": budget,
                                "include_trace": trace_path is not None},
                          timeout=120.0)
    except httpx.HTTPError as exc:
        _fail(EXIT_PROVIDER_FAILURE, f"service unreachable: {exc}")
        return
    if resp.status_code != 200:
        _fail(EXIT_PROVIDER_FAILURE, f"service returned {resp.status_code}: {resp.text[:300]}")
        return
    data = resp.json()
    if trace_path and data.get("trace") is not None:
        Path(trace_path).write_text(
            json.dumps(data["trace"], sort_keys=True, indent=2) + "\n", encoding="utf-8")
    click.echo(data["answer"])


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path())
def stats(index_dir: str) -> None:
    """Print the per-type node and edge census of an index."""
    stats_path = Path(index_dir) / "stats.json"
    if not stats_path.exists():
        _fail(EXIT_MISSING_INDEX, f"no index stats at {stats_path}")
        return
    _print_stats(json.loads(stats_path.read_text(encoding="utf-8")))


def _print_stats(data: dict) -> None:
    counts = data["node_counts"]
    click.echo(f"tokenizer: {data['tokenizer']}")
    click.echo("type   " + "  ".join(f"{t:>6}" for t in "TSNRAOH"))
    click.echo("count  " + "  ".join(f"{counts.get(t, 0):>6}" for t in "TSNRAOH"))
    edges = data["edges"]
    click.echo(f"nodes {data['total_nodes']}  structural {edges['structural']}  "
               f"hnsw {edges['hnsw_inserted']}  overlap {edges['overlap']}  "
               f"total {edges['total']}")
    if data.get("failed_chunks"):
        click.echo(f"failed chunks: {data['failed_chunks']}")


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path())
@click.option("--queries", "queries_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='JSON-lines file of {"query": ...} records.')
@click.option("--budget", type=int, default=None)
@click.option("--concurrency", type=int, default=1)
def bench(index_dir: str, queries_path: str, budget: int | None, concurrency: int) -> None:
    """Run a query file and report latency and retrieval-token statistics."""
    queries: list[str] = []
    with open(queries_path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                queries.append(json.loads(line)["query"])
    if not queries:
        raise click.UsageError(f"query file {queries_path} is empty")
    try:
        loaded = load_index(index_dir)
        retriever = make_retriever(loaded)
    except MissingIndexError as exc:
        _fail(EXIT_MISSING_INDEX, str(exc))
        return
    summary = run_bench(retriever, queries, budget=budget, concurrency=concurrency)
    click.echo(f"tokens counted by: {retriever.tokenizer.name}")
    click.echo(f"{'query':<48} {'seconds':>8} {'tokens':>7}")
    for row in summary.rows:
        label = (row.query[:45] + "...") if len(row.query) > 48 else row.query
        if row.error:
            click.echo(f"{label:<48} {'-':>8} {'-':>7}  FAILED: {row.error[:60]}")
        else:
            click.echo(f"{label:<48} {row.seconds:>8.3f} {row.token_count:>7}")
    click.echo(f"queries {len(summary.rows)}  failures {summary.failures}  "
               f"mean {summary.mean_seconds:.3f}s  median {summary.median_seconds:.3f}s  "
               f"mean tokens {summary.mean_tokens:.1f}")


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8080)
def serve(index_dir: str, host: str, port: int) -> None:
    """Run the HTTP query service over a built index."""
    import uvicorn

    from .service.app import create_app

    try:
        app = create_app(index_dir)
    except MissingIndexError as exc:
        _fail(EXIT_MISSING_INDEX, str(exc))
        return
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
