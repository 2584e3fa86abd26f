"""CLI behavior: pipeline wiring, exit codes, config precedence,
reproducible outputs."""

import json

import pytest

from citerec.cli import main


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """One small pipeline run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synth", "--papers", "40", "--clusters", "2", "--seed",
                 "5", "--out", str(data)]) == 0
    assert main(["train-encoder", "--papers", str(data / "papers.jsonl"),
                 "--contexts", str(data / "contexts.jsonl"),
                 "--epochs", "1", "--d-model", "16", "--n-heads", "2",
                 "--vocab-buckets", "128", "--seed", "5",
                 "--out", str(root / "encoder")]) == 0
    assert main(["build-index", "--papers", str(data / "papers.jsonl"),
                 "--encoder", str(root / "encoder"),
                 "--out", str(root / "index")]) == 0
    return root


def read_records(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            if "header" not in obj:
                rows.append(obj)
    return rows


def read_header(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.loads(fh.readline())["header"]


class TestExitCodes:
    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as exit_info:
            main(["synth", "--does-not-exist", "x", "--out", "/tmp/x"])
        assert exit_info.value.code == 2

    def test_eval_without_index_exits_two_naming_flag(self, capsys):
        with pytest.raises(SystemExit) as exit_info:
            main(["eval", "--queries", "q.jsonl"])
        assert exit_info.value.code == 2
        assert "--index" in capsys.readouterr().err

    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exit_info:
            main(["frobnicate"])
        assert exit_info.value.code == 2

    def test_runtime_error_exits_one_with_parseable_line(self, tmp_path,
                                                         capsys):
        bad = tmp_path / "papers.jsonl"
        bad.write_text("not json\n")
        code = main(["ingest", "--papers", str(bad)])
        assert code == 1
        err_line = capsys.readouterr().err.strip().splitlines()[-1]
        payload = json.loads(err_line)
        assert payload["error"] == "ParseError"


class TestPipeline:
    def test_recall_then_rerank_then_gen_then_citeval(self, pipeline_dir,
                                                      tmp_path):
        data = pipeline_dir / "data"
        index = pipeline_dir / "index"
        queries = str(data / "contexts.jsonl")
        recall_out = tmp_path / "recall.jsonl"
        assert main(["recall", "--index", str(index), "--queries", queries,
                     "--k", "30", "--w1", "0.8", "--w2", "0.2",
                     "--alpha", "0.5", "--out", str(recall_out)]) == 0
        rows = read_records(recall_out)
        assert rows and all(len(r["ranking"]) <= 30 for r in rows)

        model_out = tmp_path / "rerank.json"
        assert main(["rerank-train", "--index", str(index),
                     "--queries", queries, "--epochs", "50",
                     "--out", str(model_out), "--seed", "5"]) == 0

        reranked_out = tmp_path / "reranked.jsonl"
        assert main(["rerank", "--index", str(index), "--queries", queries,
                     "--model", str(model_out), "--in", str(recall_out),
                     "--n", "10", "--out", str(reranked_out)]) == 0
        reranked = read_records(reranked_out)
        by_qid = {r["query_id"]: r for r in rows}
        for r in reranked:
            top10 = {pid for pid, _ in by_qid[r["query_id"]]["ranking"][:10]}
            assert {pid for pid, _ in r["ranking"]} == top10

        gen_out = tmp_path / "gen.jsonl"
        assert main(["gen", "--index", str(index), "--queries", queries,
                     "--in", str(reranked_out), "--backend", "stub",
                     "--out", str(gen_out)]) == 0
        gen_rows = read_records(gen_out)
        assert all(r["generated"] for r in gen_rows)

        citeval_out = tmp_path / "citeval.jsonl"
        audit = tmp_path / "audit.jsonl"
        assert main(["citeval", "--in", str(gen_out), "--judge", "stub",
                     "--audit", str(audit), "--out", str(citeval_out)]) == 0
        scored = read_records(citeval_out)
        aggregate = scored[-1]["aggregate"]
        assert aggregate["scored"] == len(gen_rows)
        assert aggregate["parse_failures"] == 0
        assert "mean_composite" in aggregate
        assert len(read_records(audit)) == len(gen_rows)

    def test_rerank_with_external_scorer(self, pipeline_dir, tmp_path):
        import sys

        data = pipeline_dir / "data"
        queries = str(data / "contexts.jsonl")
        recall_out = tmp_path / "recall.jsonl"
        assert main(["recall", "--index", str(pipeline_dir / "index"),
                     "--queries", queries, "--k", "10",
                     "--out", str(recall_out)]) == 0
        scorer = ("import json, sys\n"
                  "for line in sys.stdin:\n"
                  "    req = json.loads(line)\n"
                  "    print(json.dumps({'score': 0.5}), flush=True)\n")
        out = tmp_path / "external.jsonl"
        assert main(["rerank", "--index", str(pipeline_dir / "index"),
                     "--queries", queries, "--in", str(recall_out),
                     "--scorer-cmd", f'{sys.executable} -c "{scorer}"',
                     "--n", "5", "--out", str(out)]) == 0
        rows = read_records(out)
        assert rows and all(len(r["ranking"]) == 5 for r in rows)

    def test_rerank_without_model_or_scorer_fails(self, pipeline_dir,
                                                  tmp_path, capsys):
        data = pipeline_dir / "data"
        recall_out = tmp_path / "r.jsonl"
        assert main(["recall", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--k", "5", "--out", str(recall_out)]) == 0
        code = main(["rerank", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--in", str(recall_out), "--out", str(tmp_path / "o")])
        assert code == 1
        err = capsys.readouterr().err
        assert "scorer" in err or "model" in err

    def test_eval_text_table(self, pipeline_dir, capsys):
        data = pipeline_dir / "data"
        assert main(["eval", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--k", "5,10"]) == 0
        out = capsys.readouterr().out
        assert "MRR" in out and "R@5" in out and "R@10" in out
        assert out.startswith("# citerec")

    def test_eval_records_format(self, pipeline_dir, capsys):
        data = pipeline_dir / "data"
        assert main(["eval", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--k", "5,10", "--format", "records"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        header = json.loads(lines[0])["header"]
        body = json.loads(lines[1])
        assert header["command"] == "eval"
        assert set(body) == {"mrr", "recall_at", "query_count"}

    def test_cf_dump_emits_per_query_records(self, pipeline_dir, tmp_path):
        data = pipeline_dir / "data"
        out = tmp_path / "cf.jsonl"
        assert main(["cf-dump", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--out", str(out)]) == 0
        rows = read_records(out)
        assert rows and set(rows[0]) == {"query_id", "sccf", "cscf",
                                         "blended"}

    def test_intent_train_and_predict(self, pipeline_dir, tmp_path, capsys):
        data = pipeline_dir / "data"
        model_dir = tmp_path / "intent"
        assert main(["intent", "train", "--data",
                     str(data / "intents.jsonl"), "--epochs", "25",
                     "--buckets", "512", "--seed", "0",
                     "--out", str(model_dir)]) == 0
        capsys.readouterr()
        assert main(["intent", "predict", "--model", str(model_dir),
                     "--text",
                     "our approach outperforms the baseline by a margin"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["label"] == "comparative"

    def test_intent_eval_reports_macro_f1(self, pipeline_dir, capsys):
        data = pipeline_dir / "data"
        assert main(["intent", "eval", "--data", str(data / "intents.jsonl"),
                     "--folds", "4", "--buckets", "512", "--seed", "0"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["macro_f1"] > 0.8
        assert len(report["confusion"]) == 3


class TestReproducibilityAndConfig:
    def test_recall_outputs_byte_identical(self, pipeline_dir, tmp_path):
        data = pipeline_dir / "data"
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert main(["recall", "--index", str(pipeline_dir / "index"),
                         "--queries", str(data / "contexts.jsonl"),
                         "--k", "20", "--threads", "1",
                         "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_threads_do_not_change_output(self, pipeline_dir, tmp_path):
        data = pipeline_dir / "data"
        serial, threaded = tmp_path / "s.jsonl", tmp_path / "t.jsonl"
        assert main(["recall", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--k", "20", "--threads", "1",
                     "--out", str(serial)]) == 0
        assert main(["recall", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--k", "20", "--threads", "4",
                     "--out", str(threaded)]) == 0
        assert read_records(serial) == read_records(threaded)

    def test_config_file_flag_precedence(self, pipeline_dir, tmp_path):
        data = pipeline_dir / "data"
        config = tmp_path / "run.cfg"
        config.write_text("recall_k = 7\nw1 = 0.8\nw2 = 0.2\n")
        out_cfg = tmp_path / "from_config.jsonl"
        assert main(["recall", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--config", str(config), "--out", str(out_cfg)]) == 0
        rows = read_records(out_cfg)
        assert all(len(r["ranking"]) == 7 for r in rows)

        out_flag = tmp_path / "from_flag.jsonl"
        assert main(["recall", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--config", str(config), "--k", "3",
                     "--out", str(out_flag)]) == 0
        rows = read_records(out_flag)
        assert all(len(r["ranking"]) == 3 for r in rows)

    def test_output_header_carries_config_hash_and_seed(self, pipeline_dir,
                                                        tmp_path):
        data = pipeline_dir / "data"
        out = tmp_path / "r.jsonl"
        assert main(["recall", "--index", str(pipeline_dir / "index"),
                     "--queries", str(data / "contexts.jsonl"),
                     "--k", "5", "--seed", "42", "--out", str(out)]) == 0
        header = read_header(out)
        assert header["command"] == "recall"
        assert header["seed"] == 42
        assert header["config"]["recall_k"] == 5
        assert len(header["config_hash"]) == 12
