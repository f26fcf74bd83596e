"""Command-line entry point: ingest, analyze, classify, eval, serve.

Exit codes: 0 success, 1 usage, 2 parse/io, 3 network or bind,
4 validation. A False classification is a valid answer and exits 0.
"""

from __future__ import annotations

import json
import sys

import click

from . import clients, corpus, evalharness
from .config import CliConfig
from .distribution import PolicySpec, policy_value, report
from .errors import (
    ClientError,
    CorruptIndexError,
    CtxGateError,
    EmptyQuerySetError,
    IoError,
    ParseError,
    VersionUnsupportedError,
)
from .gate import GateConfig, build_gate
from .router import default_templates, route

EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NETWORK = 3
EXIT_VALIDATION = 4


def _decision_dict(decision, deterministic: bool = True) -> dict:
    d = decision.as_dict()
    if deterministic:
        d.pop("elapsed_ms")  # wall time would break byte-identical CI output
    return d


def _embedder_from_config(cfg: CliConfig) -> clients.EmbedderConfig | None:
    if not cfg.get("embedder_base_url"):
        return None
    return clients.EmbedderConfig(
        base_url=cfg.get("embedder_base_url"),
        model=cfg.get("embedder_model"),
        api_key_env=cfg.get("embedder_api_key_env"),
        timeout=cfg.get("embedder_timeout"),
        max_batch=cfg.get("embedder_max_batch"),
    )


def _strategy(cfg: CliConfig) -> corpus.NegativePairStrategy:
    return corpus.NegativePairStrategy(
        kind=cfg.get("negative_strategy"),
        n=cfg.get("negative_sample_n"),
        seed=cfg.get("seed"),
    )


def _gate_config(cfg: CliConfig) -> GateConfig:
    return GateConfig(
        policy=PolicySpec.parse(cfg.get("policy")),
        threshold=cfg.get("threshold"),
        distribution_source=cfg.get("distribution_source"),
    )


common_options = [
    click.option("--config", "config_file", type=click.Path(), default=None,
                 help="YAML config file."),
    click.option("--policy", default=None, help="min|max|mean|median|q1|q3|p<N>."),
    click.option("-T", "--threshold", type=float, default=None,
                 help="Risk slack subtracted from the policy value."),
    click.option("--source", "distribution_source", default=None,
                 type=click.Choice(["positive", "negative", "combined"])),
]


def with_options(opts):
    def deco(f):
        for opt in reversed(opts):
            f = opt(f)
        return f
    return deco


def _load_cfg(config_file, **flags) -> CliConfig:
    return CliConfig.load(config_file, {k: v for k, v in flags.items() if v is not None})


@click.group()
def cli():
    """Retrieval-decision gate for RAG pipelines."""


@cli.command("ingest")
@click.argument("corpus_path", type=click.Path())
@click.option("-o", "--out", "index_path", required=True, type=click.Path())
@click.option("--embed-missing", is_flag=True, default=False)
@click.option("--negative-strategy", default=None,
              type=click.Choice(["all_cross", "cross_topic", "sampled"]))
@with_options(common_options)
def cmd_ingest(corpus_path, index_path, embed_missing, negative_strategy,
               config_file, policy, threshold, distribution_source):
    """Build and fit an index from a JSONL corpus file."""
    cfg = _load_cfg(config_file, negative_strategy=negative_strategy,
                    policy=policy, threshold=threshold,
                    distribution_source=distribution_source)
    embedder_cfg = _embedder_from_config(cfg)
    embedder = None
    fingerprint = None
    if embed_missing:
        if embedder_cfg is None:
            raise click.UsageError("--embed-missing needs an embedder config")
        embedder = lambda texts: clients.embed_texts(embedder_cfg, texts)
        fingerprint = embedder_cfg.fingerprint
    index = corpus.ingest_file(corpus_path, embed_missing=embed_missing,
                               embedder=embedder, embedder_fingerprint=fingerprint)
    index = corpus.fit_distributions(index, _strategy(cfg))
    gate_cfg = _gate_config(cfg)
    from dataclasses import replace
    index = replace(index, cutoff_cache=policy_value(index.positive_samples,
                                                     gate_cfg.policy) - gate_cfg.threshold)
    corpus.save_index(index, index_path)
    click.echo(f"contexts: {len(index.contexts)}")
    click.echo(f"pseudo_queries: {len(index.pseudo_queries)}")
    click.echo(f"dim: {index.dim}")
    click.echo(f"fingerprint: {index.embedder_fingerprint}")
    click.echo(f"positive_samples: {index.positive_samples.count}")
    click.echo(f"negative_samples: {index.negative_samples.count}")
    click.echo(f"index written to {index_path}")


@cli.command("analyze")
@click.argument("index_path", type=click.Path())
@click.option("--format", "fmt", default="table", type=click.Choice(["table", "machine"]))
def cmd_analyze(index_path, fmt):
    """Print the distribution statistics table for a fitted index."""
    index = corpus.load_index(index_path)
    if not index.fitted or index.negative_samples is None:
        raise CtxGateError("index has no fitted distributions")
    analysis = report(index.positive_samples, index.negative_samples)
    if fmt == "machine":
        click.echo(json.dumps(analysis.as_dict(), sort_keys=True))
    else:
        click.echo(analysis.as_table())


@cli.command("classify")
@click.argument("index_path", type=click.Path())
@click.option("--query", "query_text", default=None, help="Query text (needs embedder).")
@click.option("--embedding-file", default=None, type=click.Path(),
              help="JSONL vector file; every record is classified.")
@click.option("-k", type=int, default=None)
@click.option("--route", "do_route", is_flag=True, default=False)
@click.option("--format", "fmt", default="machine", type=click.Choice(["table", "machine"]))
@with_options(common_options)
def cmd_classify(index_path, query_text, embedding_file, k, do_route, fmt,
                 config_file, policy, threshold, distribution_source):
    """Classify one query (or a file of embeddings) as retrieve / direct."""
    if (query_text is None) == (embedding_file is None):
        raise click.UsageError("give exactly one of --query / --embedding-file")
    cfg = _load_cfg(config_file, policy=policy, threshold=threshold,
                    distribution_source=distribution_source, k=k)
    index = corpus.load_index(index_path)
    gate = build_gate(index, _gate_config(cfg))
    if embedding_file is not None:
        items = clients.load_vectors(embedding_file, expected_dim=index.dim)
    else:
        embedder_cfg = _embedder_from_config(cfg)
        if embedder_cfg is None:
            raise click.UsageError("--query needs an embedder config")
        items = [("query", clients.embed_texts(embedder_cfg, [query_text])[0])]
    templates = default_templates() if do_route else None
    for rid, emb in items:
        if do_route:
            plan = route(gate, index, query_text or rid, emb,
                         k=cfg.get("k"), templates=templates)
            out = plan.as_dict()
            out["decision"].pop("elapsed_ms")
            out["id"] = rid
            click.echo(json.dumps(out, sort_keys=True) if fmt == "machine"
                       else f"{rid}: mode={plan.mode} score={plan.decision.score:.4f} "
                            f"cutoff={plan.decision.cutoff:.4f}")
        else:
            d = gate.classify(emb)
            body = _decision_dict(d)
            body["id"] = rid
            click.echo(json.dumps(body, sort_keys=True) if fmt == "machine"
                       else f"{rid}: retrieve={d.retrieve} score={d.score:.4f} "
                            f"cutoff={d.cutoff:.4f} margin={d.margin:+.4f} "
                            f"best={d.best_context_id}")


@cli.command("eval")
@click.option("--index", "index_path", default=None, type=click.Path())
@click.option("--queries", "queries_path", default=None, type=click.Path(),
              help="Labeled query JSONL file.")
@click.option("--synthetic", is_flag=True, default=False,
              help="Generate the default synthetic corpus and queries.")
@click.option("--synthetic-seed", type=int, default=0)
@click.option("--sweep-policies", default=None,
              help="Comma-separated policy list for a sweep.")
@click.option("--sweep-thresholds", default=None,
              help="Comma-separated threshold list for a sweep.")
@click.option("--format", "fmt", default="table", type=click.Choice(["table", "machine"]))
@with_options(common_options)
def cmd_eval(index_path, queries_path, synthetic, synthetic_seed,
             sweep_policies, sweep_thresholds, fmt,
             config_file, policy, threshold, distribution_source):
    """Score routing decisions against labeled queries."""
    cfg = _load_cfg(config_file, policy=policy, threshold=threshold,
                    distribution_source=distribution_source)
    if synthetic:
        spec = evalharness.SyntheticSpec(seed=synthetic_seed)
        records, queries = evalharness.generate_synthetic(spec)
        index = corpus.ingest(enumerate(records, start=1))
        index = corpus.fit_distributions(index, _strategy(cfg))
    else:
        if not index_path or not queries_path:
            raise click.UsageError("--index and --queries required without --synthetic")
        index = corpus.load_index(index_path)
        queries = evalharness.load_labeled_queries(queries_path)
    gate_cfg = _gate_config(cfg)
    if sweep_policies or sweep_thresholds:
        policies = [PolicySpec.parse(p) for p in
                    (sweep_policies or cfg.get("policy")).split(",")]
        thresholds = [float(t) for t in
                      (sweep_thresholds or str(cfg.get("threshold"))).split(",")]
        rows = evalharness.sweep(index, queries, policies, thresholds,
                                 gate_cfg.distribution_source)
        if fmt == "machine":
            click.echo(json.dumps(
                [{"policy": str(p), "threshold": t, **m.as_dict()} for p, t, m in rows],
                sort_keys=True))
        else:
            click.echo(evalharness.sweep_table(rows))
        return
    metrics = evalharness.evaluate_gate(index, gate_cfg, queries)
    if fmt == "machine":
        click.echo(json.dumps(metrics.as_dict(), sort_keys=True))
    else:
        for key, val in metrics.as_dict().items():
            click.echo(f"{key}: {val}")


@cli.command("synth")
@click.option("--out-corpus", required=True, type=click.Path())
@click.option("--out-queries", required=True, type=click.Path())
@click.option("--topics", type=int, default=17)
@click.option("--contexts-per-topic", type=int, default=10)
@click.option("--pseudo-queries-per-context", type=int, default=3)
@click.option("--dim", type=int, default=64)
@click.option("--seed", type=int, default=0)
def cmd_synth(out_corpus, out_queries, topics, contexts_per_topic,
              pseudo_queries_per_context, dim, seed):
    """Write a synthetic corpus + labeled query file."""
    spec = evalharness.SyntheticSpec(
        topics=topics, contexts_per_topic=contexts_per_topic,
        pseudo_queries_per_context=pseudo_queries_per_context, dim=dim, seed=seed)
    evalharness.write_synthetic(spec, out_corpus, out_queries)
    click.echo(f"corpus written to {out_corpus}")
    click.echo(f"queries written to {out_queries}")


@cli.command("serve")
@click.argument("index_path", type=click.Path())
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@with_options(common_options)
def cmd_serve(index_path, host, port, config_file, policy, threshold,
              distribution_source):
    """Serve the HTTP API over a loaded index until terminated."""
    import uvicorn

    from .service import create_app, load_snapshot

    cfg = _load_cfg(config_file, host=host, port=port, policy=policy,
                    threshold=threshold, distribution_source=distribution_source)
    index = corpus.load_index(index_path)
    snapshot = load_snapshot(index, _gate_config(cfg),
                             embedder=_embedder_from_config(cfg))
    click.echo(f"serving index fingerprint={index.embedder_fingerprint} "
               f"contexts={len(index.contexts)} on "
               f"{cfg.get('host')}:{cfg.get('port')}")
    try:
        uvicorn.run(create_app(snapshot), host=cfg.get("host"), port=cfg.get("port"))
    except SystemExit as e:
        raise
    except OSError as e:
        raise ClientError(f"cannot bind {cfg.get('host')}:{cfg.get('port')}: {e}") from e


@cli.group("config")
def cmd_config():
    """Inspect effective configuration."""


@cmd_config.command("show")
@click.option("--config", "config_file", type=click.Path(), default=None)
def cmd_config_show(config_file):
    cfg = CliConfig.load(config_file)
    click.echo(cfg.show())


def main(argv=None) -> int:
    """Entry point mapping errors to the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except (click.UsageError, click.ClickException) as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return EXIT_USAGE
    except (ParseError, IoError, CorruptIndexError, VersionUnsupportedError,
            EmptyQuerySetError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_PARSE
    except ClientError as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_NETWORK
    except (CtxGateError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
