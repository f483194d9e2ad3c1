"""End-to-end command-line pipeline."""

import json

import pytest

from treesum import cli
from treesum import corpus as cp
from helpers import toy_corpus


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A trained tiny model plus corpora, shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    examples = toy_corpus(n=12, seed=21)
    corpus_path = root / "train.jsonl"
    cp.save_corpus(corpus_path, examples)
    ckpt = root / "model.ckpt"
    status = cli.run([
        "train", "--corpus", str(corpus_path), "--out", str(ckpt),
        "--hidden-size", "12", "--embed-size", "12", "--min-freq", "1",
        "--epochs", "2", "--batch-size", "6", "--seed", "3",
    ])
    assert status == 0
    return {"root": root, "corpus": corpus_path, "ckpt": ckpt,
            "examples": examples}


class TestOracle:
    def test_prints_walkthrough_sequence(self, tmp_path, capsys):
        path = tmp_path / "one.jsonl"
        cp.save_corpus(path, [cp.Example(
            source="a man escaped from prison today".split(),
            summary="a man escaped from prison".split(),
            heads=[2, 3, 0, 5, 3])])
        assert cli.run(["oracle", "--corpus", str(path)]) == 0
        out = capsys.readouterr().out.strip()
        assert out == \
            "GEN(a) GEN(man) RL GEN(escaped) RL GEN(from) GEN(prison) RL RR RR"

    def test_writes_file_with_config_echo(self, tmp_path):
        path = tmp_path / "c.jsonl"
        cp.save_corpus(path, toy_corpus(n=3, seed=5))
        out = tmp_path / "ops.txt"
        assert cli.run(["oracle", "--corpus", str(path),
                        "--out", str(out)]) == 0
        assert len(out.read_text().strip().split("\n")) == 3
        echoed = json.loads((tmp_path / "ops.txt.config").read_text())
        assert echoed["command"] == "oracle"
        assert "max_summary_len" in echoed["config"]

    def test_missing_corpus_fails_cleanly(self, tmp_path, capsys):
        assert cli.run(["oracle", "--corpus",
                        str(tmp_path / "nope.jsonl")]) == 1
        assert "oracle" in capsys.readouterr().err


class TestArgumentHandling:
    def test_unknown_flag_exits_nonzero(self, capsys):
        assert cli.run(["oracle", "--corpus", "x", "--bogus", "1"]) != 0

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        config = tmp_path / "run.conf"
        config.write_text("not_a_key = 7\n")
        corpus = tmp_path / "c.jsonl"
        cp.save_corpus(corpus, toy_corpus(n=2, seed=5))
        assert cli.run(["oracle", "--corpus", str(corpus),
                        "--config", str(config)]) == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_flags_override_config_file(self, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("max_summary_len = 2  # tight cap\n")
        corpus = tmp_path / "c.jsonl"
        cp.save_corpus(corpus, toy_corpus(n=2, seed=5))  # 3-word summaries
        # with the file cap of 2 every example is filtered out
        assert cli.run(["oracle", "--corpus", str(corpus),
                        "--config", str(config)]) == 1
        # the flag raises it back
        assert cli.run(["oracle", "--corpus", str(corpus),
                        "--config", str(config),
                        "--max-summary-len", "10"]) == 0


class TestTrain:
    def test_writes_checkpoint_log_and_config(self, workdir):
        assert workdir["ckpt"].exists()
        log = workdir["root"] / "model.ckpt.log"
        lines = log.read_text().strip().split("\n")
        assert len(lines) == 2
        fields = lines[0].split("\t")
        assert len(fields) == 5  # epoch, train, dev, op acc, word acc
        assert (workdir["root"] / "model.ckpt.config").exists()


class TestDecodeAndEval:
    def test_decode_then_eval_smoke(self, workdir, tmp_path):
        decoded = tmp_path / "decoded.jsonl"
        status = cli.run([
            "decode", "--checkpoint", str(workdir["ckpt"]),
            "--input", str(workdir["corpus"]), "--out", str(decoded),
            "--beam-size", "2", "--max-words", "4",
        ])
        assert status == 0
        records = [json.loads(line)
                   for line in decoded.read_text().strip().split("\n")]
        assert len(records) == 12
        for record in records:
            assert set(record) == {"summary", "ops", "heads", "score"}
            assert len(record["summary"].split()) == \
                len(record["heads"].split())

        report = tmp_path / "report.tsv"
        status = cli.run([
            "eval", "--decoded", str(decoded),
            "--reference", str(workdir["corpus"]), "--out", str(report),
        ])
        assert status == 0
        text = report.read_text()
        assert text.startswith("#index")
        assert "macro" in text
        assert "# relation preservation vs reference" in text
        for sigma in ("1.0", "0.9", "0.8", "0.7"):
            assert f"\n{sigma}\t" in text

    def test_decode_workers_match_serial(self, workdir, tmp_path):
        serial = tmp_path / "serial.jsonl"
        parallel = tmp_path / "parallel.jsonl"
        base = ["decode", "--checkpoint", str(workdir["ckpt"]),
                "--input", str(workdir["corpus"]),
                "--beam-size", "2", "--max-words", "4"]
        assert cli.run(base + ["--out", str(serial)]) == 0
        assert cli.run(base + ["--out", str(parallel),
                               "--workers", "2"]) == 0
        assert serial.read_text() == parallel.read_text()

    def test_eval_with_source_parses_and_embeddings(self, workdir, tmp_path):
        decoded = tmp_path / "decoded.jsonl"
        assert cli.run([
            "decode", "--checkpoint", str(workdir["ckpt"]),
            "--input", str(workdir["corpus"]), "--out", str(decoded),
            "--beam-size", "1", "--max-words", "4"]) == 0
        parses = tmp_path / "source_parses.jsonl"
        with open(parses, "w") as fh:
            for ex in workdir["examples"]:
                n = len(ex.source)
                fh.write(json.dumps(
                    {"words": ex.source, "heads": [0] + [1] * (n - 1)}) + "\n")
        vectors = tmp_path / "vectors.txt"
        vectors.write_text("saw 1.0 0.0\nmet 0.9 0.4359\n")
        report = tmp_path / "report.tsv"
        assert cli.run([
            "eval", "--decoded", str(decoded),
            "--reference", str(workdir["corpus"]),
            "--source-parses", str(parses),
            "--embeddings", str(vectors),
            "--sigmas", "1.0,0.8",
            "--out", str(report)]) == 0
        text = report.read_text()
        assert "relsrc_f" in text
        assert "# relation preservation vs source" in text

    def test_failed_eval_leaves_no_partial_output(self, workdir, tmp_path):
        report = tmp_path / "report.tsv"
        status = cli.run([
            "eval", "--decoded", str(tmp_path / "missing.jsonl"),
            "--reference", str(workdir["corpus"]), "--out", str(report)])
        assert status == 1
        assert not report.exists()
        assert not (tmp_path / "report.tsv.tmp").exists()
