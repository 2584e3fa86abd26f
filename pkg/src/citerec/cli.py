"""Command-line front end for the full pipeline.

Subcommands: synth, ingest, train-encoder, build-index, recall, cf-dump,
rerank-train, rerank, intent (train / predict / eval), eval, gen, citeval.

Settings resolve with CLI flag > config file > built-in default. The
effective configuration is echoed into a header record at the top of every
output file, and re-running a command with identical inputs and settings
reproduces its outputs byte for byte (with --threads 1, the default).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .backends import generation_client_from_env, judge_client_from_env
from .citeval import JudgeRunner, pearson_r
from .corpus import (Corpus, build_queries, load_contexts, load_corpus,
                     load_papers, validate_corpus)
from .encoder import EncoderConfig, train_encoder
from .errors import CiterecError
from .genprep import (GenerationRequest, RemoteGenerationBackend,
                      StubGenerationBackend, generate_citation)
from .graph import build_graph, cf_blend, cscf_scores, sccf_scores
from .intent import (IntentLabel, IntentModel, classify_intent,
                     cross_validate, holdout_eval, predict_intent,
                     train_intent)
from .metrics import evaluate_pipeline
from .persist import (load_encoder_weights, load_index, save_encoder_weights,
                      save_index)
from .rerank import (RerankModel, build_training_triples, rerank_list,
                     train_reranker)
from .retrieval import FusionWeights, RankedList, build_index, recall
from .synth import SynthSpec, generate, load_intent_sentences, write_synth

log = logging.getLogger("citerec")

_DEFAULTS = {
    "w1": 0.8,
    "w2": 0.2,
    "alpha": 0.5,
    "k": "10,100,200,500,1000,2000",
    "recall_k": 2000,
    "epochs": 30,
    "margin": 0.2,
    "lr": 0.05,
    "seed": 42,
    "d_model": 64,
    "n_heads": 4,
    "layers_paragraph": 1,
    "layers_document": 1,
    "vocab_buckets": 4096,
    "max_tokens": 128,
    "pe": "on",
    "rerank_depth": 100,
    "negatives": 5,
    "rerank_epochs": 200,
    "rerank_lr": 2.0,
    "intent_epochs": 40,
    "batch_size": 64,
    "intent_lr": 1e-4,
    "buckets": 8192,
    "hidden": 256,
    "dropout": 0.1,
    "folds": 10,
    "threads": 1,
    "format": "text",
    "papers": 200,
    "clusters": 3,
    "intra": 0.08,
    "inter": 0.005,
    "contexts_per_paper": 2,
    "intent_sentences": 300,
}


def _load_config_file(path) -> dict[str, str]:
    entries: dict[str, str] = {}
    if path is None:
        return entries
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CiterecError(f"bad config line: {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


class Settings:
    """Resolved settings with flag > config file > default precedence."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._file = _load_config_file(self._args.get("config"))
        self.used: dict = {}

    def get(self, key: str, cast=str):
        flag_value = self._args.get(key)
        if flag_value is not None:
            value = flag_value
        elif key in self._file:
            value = cast(self._file[key])
        else:
            value = _DEFAULTS[key]
        self.used[key] = value
        return value

    def header(self, command: str) -> dict:
        if "seed" not in self.used:
            self.get("seed", int)
        config = {k: self.used[k] for k in sorted(self.used)}
        blob = json.dumps(config, sort_keys=True, default=str)
        return {
            "version": __version__,
            "command": command,
            "config": config,
            "config_hash": hashlib.sha256(blob.encode()).hexdigest()[:12],
            "seed": self.used["seed"],
        }


def _emit_header(fh, header: dict) -> None:
    fh.write(json.dumps({"header": header}, sort_keys=True, default=str) + "\n")


def _read_records(path):
    """Read a JSONL file, skipping the header record."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "header" in obj:
                continue
            rows.append(obj)
    return rows


def _log_audit(settings: Settings, command: str) -> None:
    header = settings.header(command)
    log.info("citerec %s %s config_hash=%s seed=%s", header["version"],
             command, header["config_hash"], header["seed"])


def _encoder_config(settings: Settings) -> EncoderConfig:
    return EncoderConfig(
        d_model=settings.get("d_model", int),
        n_heads=settings.get("n_heads", int),
        n_layers_paragraph=settings.get("layers_paragraph", int),
        n_layers_document=settings.get("layers_document", int),
        vocab_buckets=settings.get("vocab_buckets", int),
        max_tokens=settings.get("max_tokens", int),
        seed=settings.get("seed", int),
        positional=settings.get("pe", str) != "off",
    )


def _map_queries(fn, queries, threads: int):
    """Apply fn to each query; results keyed by query_id. Aggregation is
    order-independent, so threading never changes the output."""
    if threads <= 1:
        return {q.query_id: fn(q) for q in queries}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = pool.map(lambda q: (q.query_id, fn(q)), queries)
        return dict(results)


def _ranking_record(query_id: str, ranked: RankedList) -> str:
    return json.dumps(
        {"query_id": query_id,
         "ranking": [[pid, score] for pid, score in ranked.entries]},
        sort_keys=True)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    settings = Settings(args)
    spec = SynthSpec(
        n_papers=settings.get("papers", int),
        n_clusters=settings.get("clusters", int),
        intra_p=settings.get("intra", float),
        inter_p=settings.get("inter", float),
        contexts_per_paper=settings.get("contexts_per_paper", int),
        n_intent_sentences=settings.get("intent_sentences", int),
        seed=settings.get("seed", int),
    )
    _log_audit(settings, "synth")
    data = generate(spec)
    paths = write_synth(data, args.out)
    print(json.dumps({"written": paths, "papers": len(data.papers),
                      "contexts": len(data.contexts),
                      "intent_sentences": len(data.intent_sentences)},
                     sort_keys=True))
    return 0


def cmd_ingest(args) -> int:
    settings = Settings(args)
    _log_audit(settings, "ingest")
    papers = load_papers(args.papers)
    queries = []
    dropped = 0
    if args.contexts:
        contexts = load_contexts(args.contexts)
        queries, dropped = build_queries(papers, contexts)
    corpus = Corpus(papers=papers, queries=queries)
    report = validate_corpus(corpus)
    print(json.dumps({
        "papers": report.n_papers,
        "queries": report.n_queries,
        "dropped_queries": dropped,
        "papers_with_dangling_refs": len(report.dangling_references),
        "dangling_references": report.n_dangling,
    }, sort_keys=True))
    return 0


def cmd_train_encoder(args) -> int:
    settings = Settings(args)
    config = _encoder_config(settings)
    epochs = settings.get("epochs", int)
    margin = settings.get("margin", float)
    lr = settings.get("lr", float)
    _log_audit(settings, "train-encoder")
    corpus = load_corpus(args.papers, args.contexts)
    graph = build_graph(corpus)
    result = train_encoder(corpus, graph, config, epochs=epochs,
                           margin=margin, lr=lr)
    save_encoder_weights(result.weights, config, args.out)
    print(json.dumps({"out": str(args.out), "epochs": epochs,
                      "epoch_losses": [round(x, 6) for x in
                                       result.epoch_losses]},
                     sort_keys=True))
    return 0


def cmd_build_index(args) -> int:
    settings = Settings(args)
    _log_audit(settings, "build-index")
    weights, config = load_encoder_weights(args.encoder)
    corpus = load_corpus(args.papers)
    index = build_index(corpus, weights, config)
    save_index(index, args.out)
    print(json.dumps({"out": str(args.out), "papers": len(index.ids),
                      "d_model": config.d_model,
                      "weights_fingerprint": index.weights_fingerprint},
                     sort_keys=True))
    return 0


def _load_queries_for_index(index, queries_path):
    contexts = load_contexts(queries_path)
    queries, dropped = build_queries(index.papers, contexts)
    if dropped:
        log.warning("dropped %d queries", dropped)
    return queries


def cmd_recall(args) -> int:
    settings = Settings(args)
    fusion = FusionWeights(w1=settings.get("w1", float),
                           w2=settings.get("w2", float))
    alpha = settings.get("alpha", float)
    k = settings.get("recall_k", int)
    threads = settings.get("threads", int)
    _log_audit(settings, "recall")
    index = load_index(args.index)
    queries = _load_queries_for_index(index, args.queries)
    rankings = _map_queries(
        lambda q: recall(q, index, fusion, k=k, cf_alpha=alpha),
        queries, threads)
    with open(args.out, "w", encoding="utf-8") as fh:
        _emit_header(fh, settings.header("recall"))
        for q in sorted(queries, key=lambda q: q.query_id):
            fh.write(_ranking_record(q.query_id, rankings[q.query_id]) + "\n")
    print(json.dumps({"out": args.out, "queries": len(queries), "k": k},
                     sort_keys=True))
    return 0


def cmd_cf_dump(args) -> int:
    settings = Settings(args)
    alpha = settings.get("alpha", float)
    _log_audit(settings, "cf-dump")
    index = load_index(args.index)
    queries = _load_queries_for_index(index, args.queries)
    with open(args.out, "w", encoding="utf-8") as fh:
        _emit_header(fh, settings.header("cf-dump"))
        for q in sorted(queries, key=lambda q: q.query_id):
            sccf = sccf_scores(q.profile, index.graph, exclude=q.citing_id)
            cscf = cscf_scores(q.profile, index.graph, exclude=q.citing_id)
            blended = cf_blend(sccf, cscf, alpha)
            fh.write(json.dumps({
                "query_id": q.query_id,
                "sccf": sccf.ranking(),
                "cscf": cscf.ranking(),
                "blended": blended.ranking(),
            }, sort_keys=True) + "\n")
    print(json.dumps({"out": args.out, "queries": len(queries)},
                     sort_keys=True))
    return 0


def _save_rerank_model(model: RerankModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"schema_version": model.schema_version,
                   "weights": model.weights.tolist(),
                   "bias": model.bias}, fh, sort_keys=True)
        fh.write("\n")


def _load_rerank_model(path) -> RerankModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return RerankModel(weights=np.asarray(obj["weights"], dtype=np.float64),
                       bias=float(obj["bias"]),
                       schema_version=int(obj["schema_version"]))


def cmd_rerank_train(args) -> int:
    settings = Settings(args)
    fusion = FusionWeights(w1=settings.get("w1", float),
                           w2=settings.get("w2", float))
    alpha = settings.get("alpha", float)
    depth = settings.get("rerank_depth", int)
    negatives = settings.get("negatives", int)
    epochs = settings.get("rerank_epochs", int)
    lr = settings.get("rerank_lr", float)
    seed = settings.get("seed", int)
    threads = settings.get("threads", int)
    _log_audit(settings, "rerank-train")
    index = load_index(args.index)
    queries = _load_queries_for_index(index, args.queries)
    rankings = _map_queries(
        lambda q: recall(q, index, fusion, k=depth, cf_alpha=alpha),
        queries, threads)
    triples = build_training_triples(queries, rankings, index.papers,
                                     negative_rank_hi=depth)
    result = train_reranker(triples, negatives_per_positive=negatives,
                            epochs=epochs, lr=lr, seed=seed)
    _save_rerank_model(result.model, args.out)
    print(json.dumps({
        "out": args.out,
        "training_queries": len(triples),
        "initial_bce": round(result.epoch_losses[0], 6) if result.epoch_losses else None,
        "final_bce": round(result.epoch_losses[-1], 6) if result.epoch_losses else None,
    }, sort_keys=True))
    return 0


def cmd_rerank(args) -> int:
    settings = Settings(args)
    depth = settings.get("rerank_depth", int)
    _log_audit(settings, "rerank")
    index = load_index(args.index)
    queries = {q.query_id: q
               for q in _load_queries_for_index(index, args.queries)}
    rows = _read_records(getattr(args, "in"))
    scorer = None
    model = None
    if args.scorer_cmd:
        import shlex

        from .rerank import ExternalScorer, rerank_list_external

        scorer = ExternalScorer(shlex.split(args.scorer_cmd),
                                timeout=args.scorer_timeout)
        scorer.__enter__()
    elif args.model:
        model = _load_rerank_model(args.model)
    else:
        raise CiterecError("rerank needs --model or --scorer-cmd")
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            _emit_header(fh, settings.header("rerank"))
            for row in rows:
                qid = row["query_id"]
                if qid not in queries:
                    log.warning("skipping unknown query %r", qid)
                    continue
                ranked = RankedList(entries=tuple(
                    (pid, float(score)) for pid, score in row["ranking"]))
                if scorer is not None:
                    out = rerank_list_external(ranked, queries[qid], scorer,
                                               depth, index.papers)
                else:
                    out = rerank_list(ranked, queries[qid], model, depth,
                                      index.papers)
                fh.write(_ranking_record(qid, out) + "\n")
    finally:
        if scorer is not None:
            scorer.close()
    print(json.dumps({"out": args.out, "queries": len(rows), "n": depth},
                     sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    settings = Settings(args)
    fusion = FusionWeights(w1=settings.get("w1", float),
                           w2=settings.get("w2", float))
    alpha = settings.get("alpha", float)
    k_values = [int(x) for x in settings.get("k", str).split(",") if x]
    out_format = settings.get("format", str)
    depth = settings.get("rerank_depth", int)
    threads = settings.get("threads", int)
    _log_audit(settings, "eval")
    index = load_index(args.index)
    queries = _load_queries_for_index(index, args.queries)
    corpus = Corpus(papers=index.papers, queries=queries)
    model = _load_rerank_model(args.rerank) if args.rerank else None
    result = evaluate_pipeline(corpus, index, fusion, k_values,
                               rerank_model=model, rerank_depth=depth,
                               cf_alpha=alpha, threads=threads)
    header = settings.header("eval")
    if out_format == "records":
        sys.stdout.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        sys.stdout.write(json.dumps({
            "mrr": result.mrr,
            "recall_at": {str(k): v for k, v in result.recall_at.items()},
            "query_count": result.query_count,
        }, sort_keys=True) + "\n")
    else:
        print(f"# citerec {header['version']} eval "
              f"config_hash={header['config_hash']} seed={header['seed']}")
        print(result.table())
    if args.dump_ranks:
        with open(args.dump_ranks, "w", encoding="utf-8") as fh:
            _emit_header(fh, header)
            for qid in sorted(result.ranks):
                fh.write(json.dumps({"query_id": qid,
                                     "rank": result.ranks[qid]}) + "\n")
    return 0


def cmd_gen(args) -> int:
    settings = Settings(args)
    _log_audit(settings, "gen")
    index = load_index(args.index)
    queries = {q.query_id: q
               for q in _load_queries_for_index(index, args.queries)}
    if args.backend == "stub":
        backend = StubGenerationBackend()
    else:
        backend = RemoteGenerationBackend(generation_client_from_env())
    rows = _read_records(getattr(args, "in"))
    n_written = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        _emit_header(fh, settings.header("gen"))
        for row in rows:
            qid = row["query_id"]
            if qid not in queries or not row["ranking"]:
                continue
            q = queries[qid]
            top_id = row["ranking"][0][0]
            cited = index.papers[top_id]
            citing = index.papers[q.citing_id]
            intent = q.intent if q.intent is not None else IntentLabel.BACKGROUND
            req = GenerationRequest(
                citing_abstract=citing.abstract,
                context=q.context,
                intent=intent,
                cited_abstract=cited.abstract,
            )
            sentence = generate_citation(req, backend, request_id=qid)
            fh.write(json.dumps({
                "query_id": qid,
                "cited_id": top_id,
                "citing_abstract": citing.abstract,
                "context": q.context,
                "intent": intent.value,
                "cited_abstract": cited.abstract,
                "generated": sentence,
            }, sort_keys=True) + "\n")
            n_written += 1
    print(json.dumps({"out": args.out, "generated": n_written},
                     sort_keys=True))
    return 0


def cmd_citeval(args) -> int:
    settings = Settings(args)
    _log_audit(settings, "citeval")
    backend = "stub" if args.judge == "stub" else judge_client_from_env()
    runner = JudgeRunner(backend=backend, audit_path=args.audit)
    rows = _read_records(getattr(args, "in"))
    reports = []
    with open(args.out, "w", encoding="utf-8") as fh:
        _emit_header(fh, settings.header("citeval"))
        for row in rows:
            report, exchange = runner.score(
                row["citing_abstract"], row["context"], row["intent"],
                row["cited_abstract"], row["generated"])
            record = {"query_id": row.get("query_id"),
                      "parse_failed": exchange.failed}
            if report is not None:
                record.update(report.as_dict())
                reports.append(report)
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        aggregate = {
            "scored": len(reports),
            "parse_failures": runner.n_failed,
            "requests": runner.n_requests,
        }
        if reports:
            aggregate["mean_composite"] = sum(r.composite for r in reports) / len(reports)
            for dim in ("purpose", "accuracy", "context_fit", "density"):
                aggregate[f"mean_{dim}"] = sum(getattr(r, dim)
                                               for r in reports) / len(reports)
        fh.write(json.dumps({"aggregate": aggregate}, sort_keys=True) + "\n")
    print(json.dumps({"out": args.out, **{k: v for k, v in aggregate.items()
                                          if k != "mean_composite"}},
                     sort_keys=True))
    return 0


def cmd_correlate(args) -> int:
    settings = Settings(args)
    _log_audit(settings, "correlate")
    rows = _read_records(getattr(args, "in"))
    xs = [float(r[args.x_field]) for r in rows if args.x_field in r]
    ys = [float(r[args.y_field]) for r in rows if args.y_field in r]
    print(json.dumps({"pearson_r": pearson_r(xs, ys), "n": len(xs)},
                     sort_keys=True))
    return 0


def _save_intent_model(model: IntentModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blobs = []
    for arr in (model.w1, model.b1, model.w2, model.b2):
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    (directory / "model.bin").write_bytes(b"".join(blobs))
    (directory / "manifest.txt").write_text(
        "\n".join([
            f"n_buckets = {model.n_buckets}",
            f"hidden = {model.hidden}",
            f"dropout = {model.dropout}",
        ]) + "\n", encoding="utf-8")


def _load_intent_model(directory) -> IntentModel:
    directory = Path(directory)
    manifest = {}
    for line in (directory / "manifest.txt").read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            manifest[key.strip()] = value.strip()
    n_buckets = int(manifest["n_buckets"])
    hidden = int(manifest["hidden"])
    blob = (directory / "model.bin").read_bytes()
    shapes = [(n_buckets, hidden), (hidden,), (hidden, 3), (3,)]
    arrays = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape)) * 8
        arrays.append(np.frombuffer(blob[offset:offset + size],
                                    dtype="<f8").reshape(shape).copy())
        offset += size
    return IntentModel(n_buckets=n_buckets, hidden=hidden,
                       dropout=float(manifest["dropout"]),
                       w1=arrays[0], b1=arrays[1], w2=arrays[2], b2=arrays[3])


def cmd_intent(args) -> int:
    settings = Settings(args)
    if args.intent_cmd == "train":
        epochs = settings.get("intent_epochs", int)
        _log_audit(settings, "intent train")
        data = load_intent_sentences(args.data)
        result = train_intent(
            data, epochs=epochs,
            batch_size=settings.get("batch_size", int),
            lr=settings.get("intent_lr", float),
            n_buckets=settings.get("buckets", int),
            hidden=settings.get("hidden", int),
            dropout=settings.get("dropout", float),
            seed=settings.get("seed", int))
        _save_intent_model(result.model, args.out)
        print(json.dumps({"out": str(args.out), "epochs": epochs,
                          "final_loss": round(result.epoch_losses[-1], 6)
                          if result.epoch_losses else None}, sort_keys=True))
        return 0
    if args.intent_cmd == "predict":
        _log_audit(settings, "intent predict")
        model = _load_intent_model(args.model)
        probs = classify_intent(args.text, model)
        print(json.dumps({
            "label": predict_intent(args.text, model).value,
            "probabilities": {label.value: float(p) for label, p
                              in zip(IntentLabel, probs)},
        }, sort_keys=True))
        return 0
    if args.intent_cmd == "eval":
        _log_audit(settings, "intent eval")
        data = load_intent_sentences(args.data)
        common_kwargs = dict(
            epochs=settings.get("intent_epochs", int),
            batch_size=settings.get("batch_size", int),
            lr=settings.get("intent_lr", float),
            n_buckets=settings.get("buckets", int),
            hidden=settings.get("hidden", int),
            dropout=settings.get("dropout", float),
            seed=settings.get("seed", int))
        if args.quick:
            pooled = holdout_eval(data, test_fraction=0.2, **common_kwargs)
            mode = {"mode": "holdout-80-20"}
        else:
            folds = settings.get("folds", int)
            pooled = cross_validate(data, folds=folds, **common_kwargs).pooled
            mode = {"mode": "cross-validation", "folds": folds}
        report = {
            **mode,
            "macro_f1": pooled.macro_f1,
            "macro_precision": pooled.macro_precision,
            "macro_recall": pooled.macro_recall,
            "accuracy": pooled.accuracy,
            "confusion": pooled.confusion.tolist(),
        }
        print(json.dumps(report, sort_keys=True))
        if args.plot:
            _plot_confusion(pooled.confusion, args.plot)
        return 0
    raise CiterecError(f"unknown intent subcommand {args.intent_cmd!r}")


def _plot_confusion(confusion, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [label.value for label in IntentLabel]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(confusion, cmap="Blues")
    ax.set_xticks(range(len(labels)), labels, rotation=45)
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(confusion.shape[0]):
        for j in range(confusion.shape[1]):
            ax.text(j, i, str(confusion[i, j]), ha="center", va="center")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citerec",
        description="Local citation recommendation, reranking and "
                    "citation-quality scoring.")
    parser.add_argument("--version", action="version",
                        version=f"citerec {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--threads", type=int, default=None,
                        help="parallel query evaluation; 1 is bit-reproducible")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic benchmark")
    p.add_argument("--papers", type=int, default=None)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--intra", type=float, default=None)
    p.add_argument("--inter", type=float, default=None)
    p.add_argument("--contexts-per-paper", dest="contexts_per_paper",
                   type=int, default=None)
    p.add_argument("--intent-sentences", dest="intent_sentences", type=int,
                   default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common],
                       help="load and validate corpus files")
    p.add_argument("--papers", required=True)
    p.add_argument("--contexts")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-encoder", parents=[common],
                       help="train the retrieval encoder")
    p.add_argument("--papers", required=True)
    p.add_argument("--contexts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--d-model", dest="d_model", type=int, default=None)
    p.add_argument("--n-heads", dest="n_heads", type=int, default=None)
    p.add_argument("--layers-paragraph", dest="layers_paragraph", type=int,
                   default=None)
    p.add_argument("--layers-document", dest="layers_document", type=int,
                   default=None)
    p.add_argument("--vocab-buckets", dest="vocab_buckets", type=int,
                   default=None)
    p.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    p.add_argument("--pe", choices=("on", "off"), default=None,
                   help="positional encodings")
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("build-index", parents=[common],
                       help="embed all papers and build the search index")
    p.add_argument("--papers", required=True)
    p.add_argument("--encoder", required=True,
                   help="directory written by train-encoder")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("recall", parents=[common],
                       help="run fused recall for a query file")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", dest="recall_k", type=int, default=None)
    p.add_argument("--w1", type=float, default=None)
    p.add_argument("--w2", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recall)

    p = sub.add_parser("cf-dump", parents=[common],
                       help="dump per-query collaborative-filtering scores")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cf_dump)

    p = sub.add_parser("rerank-train", parents=[common],
                       help="train the logistic reranker on recall output")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--negatives", type=int, default=None)
    p.add_argument("--epochs", dest="rerank_epochs", type=int, default=None)
    p.add_argument("--lr", dest="rerank_lr", type=float, default=None)
    p.add_argument("--depth", dest="rerank_depth", type=int, default=None)
    p.add_argument("--w1", type=float, default=None)
    p.add_argument("--w2", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.set_defaults(func=cmd_rerank_train)

    p = sub.add_parser("rerank", parents=[common],
                       help="rescore the head of a recall file")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--model", help="logistic model file (default scorer)")
    p.add_argument("--scorer-cmd", dest="scorer_cmd",
                   help="external scorer command; JSON lines over stdio")
    p.add_argument("--scorer-timeout", dest="scorer_timeout", type=float,
                   default=5.0)
    p.add_argument("--in", dest="in", required=True,
                   help="recall output file")
    p.add_argument("--n", dest="rerank_depth", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate recall (optionally + rerank) quality")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", default=None, help="comma-separated K values")
    p.add_argument("--rerank", help="rerank model file")
    p.add_argument("--w1", type=float, default=None)
    p.add_argument("--w2", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--format", choices=("text", "records"), default=None)
    p.add_argument("--dump-ranks", dest="dump_ranks",
                   help="write per-query gold ranks to this file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", parents=[common],
                       help="generate citation sentences for top candidates")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--in", dest="in", required=True,
                   help="recall or rerank output file")
    p.add_argument("--backend", choices=("stub", "remote"), default="stub")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("citeval", parents=[common],
                       help="score generated citations with the rubric judge")
    p.add_argument("--in", dest="in", required=True,
                   help="gen output file")
    p.add_argument("--judge", choices=("stub", "remote"), default="stub")
    p.add_argument("--audit", help="append one record per judge exchange")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_citeval)

    p = sub.add_parser("correlate", parents=[common],
                       help="Pearson correlation between two record fields")
    p.add_argument("--in", dest="in", required=True)
    p.add_argument("--x-field", default="composite")
    p.add_argument("--y-field", default="human")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("intent", parents=[common],
                       help="citation intent classifier")
    isub = p.add_subparsers(dest="intent_cmd", required=True)
    pt = isub.add_parser("train", parents=[common])
    pt.add_argument("--data", required=True)
    pt.add_argument("--epochs", dest="intent_epochs", type=int, default=None)
    pt.add_argument("--out", required=True)
    pt.add_argument("--buckets", type=int, default=None)
    pt.set_defaults(func=cmd_intent, intent_cmd="train")
    pp = isub.add_parser("predict", parents=[common])
    pp.add_argument("--model", required=True)
    pp.add_argument("--text", required=True)
    pp.set_defaults(func=cmd_intent, intent_cmd="predict")
    pe = isub.add_parser("eval", parents=[common])
    pe.add_argument("--data", required=True)
    pe.add_argument("--folds", type=int, default=None)
    pe.add_argument("--quick", action="store_true",
                    help="single stratified 80/20 split instead of k-fold")
    pe.add_argument("--buckets", type=int, default=None)
    pe.add_argument("--plot", help="write a confusion-matrix image here")
    pe.set_defaults(func=cmd_intent, intent_cmd="eval")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CiterecError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
