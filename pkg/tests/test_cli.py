import json
import subprocess
import sys

import pytest

from structree import training as tr
from structree.cli import main
from structree.doctree import DepthSpec, read_corpus, synth_corpus, synth_vocab, tokenize, write_corpus
from structree.embeddings import random_store
from structree.models import Model
from structree.numerics import make_rng

from conftest import FIXTURES

SMALL = ["--sections", "3", "--paragraphs", "2", "--sentences", "2", "--words", "4", "--filler", "30"]


@pytest.fixture
def synth_files(tmp_path):
    corpus, emb = tmp_path / "c.jsonl", tmp_path / "e.txt"
    args = ["synth", "--n-docs", "40", "--n-classes", "2", "--dim", "8", "--seed", "3"]
    assert main(args + SMALL + ["--out", str(corpus), "--embeddings-out", str(emb)]) == 0
    return corpus, emb


def test_prepare_filters_and_skips(tmp_path, capsys):
    out = tmp_path / "corpus.jsonl"
    assert main(["prepare", "--input", str(FIXTURES / "articles"), "--filter", "--out", str(out)]) == 0
    trees = read_corpus(out)
    assert len(trees) == 2
    stats = json.loads((tmp_path / "corpus.jsonl.stats.json").read_text())
    assert stats["per_class"] == {"airlines": 1, "artists": 1}
    assert stats["filtered_out"] == 1 and stats["parse_failures"] == 1
    assert stats["classes"] == ["airlines", "artists"]


def test_prepare_without_filter_keeps_stub(tmp_path):
    out = tmp_path / "corpus.jsonl"
    assert main(["prepare", "--input", str(FIXTURES / "articles"), "--out", str(out)]) == 0
    assert len(read_corpus(out)) == 3


def test_prepare_nothing_survives(tmp_path):
    (tmp_path / "in" / "a").mkdir(parents=True)
    (tmp_path / "in" / "a" / "x.txt").write_text("= =\n")
    assert main(["prepare", "--input", str(tmp_path / "in"), "--out", str(tmp_path / "o.jsonl")]) == 2


@pytest.mark.parametrize(
    "args, expected",
    [(["tree-lstm", "700", "128", "24"], 428056), (["tree-lstm", "300", "64", "4"], 93956)],
)
def test_params(capsys, args, expected):
    kind, e, h, l = args
    assert main(["params", "--model", kind, "--e", e, "--h", h, "--l", l]) == 0
    assert capsys.readouterr().out.strip() == str(expected)


def test_train_eval_byte_identical(tmp_path, synth_files, capsys):
    corpus, emb = synth_files
    ckpts = []
    for run in ("a", "b"):
        ck = tmp_path / f"{run}.json"
        args = ["train", "--corpus", str(corpus), "--embeddings", str(emb), "--out", str(ck)]
        assert main(args + ["--hidden-dim", "6", "--epochs", "2", "--batch-size", "8", "--seed", "4"]) == 0
        ckpts.append(ck.read_bytes())
        assert (tmp_path / f"{run}.json.log.jsonl").exists()
    assert ckpts[0] == ckpts[1]
    outs = []
    for run in ("a", "b"):
        out = tmp_path / f"m{run}.json"
        assert main(["eval", "--checkpoint", str(tmp_path / "a.json"), "--corpus", str(corpus),
                     "--embeddings", str(emb), "--split", "test", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert set(json.loads(outs[0])) == {"macro_f1", "accuracy", "auc", "confusion"}


def test_config_file_and_env(tmp_path, synth_files, monkeypatch):
    corpus, emb = synth_files
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 1\nhidden_dim = 5\n")
    monkeypatch.setenv("STRUCTREE_HIDDEN_DIM", "7")
    ck = tmp_path / "ck.json"
    assert main(["train", "--corpus", str(corpus), "--embeddings", str(emb), "--config", str(cfg), "--out", str(ck)]) == 0
    model = Model.load(ck)
    assert model.dims[1] == 7 and model.meta["config"]["epochs"] == 1


def test_eval_memorized_checkpoint(tmp_path, capsys):
    spec = DepthSpec(sections=3, paragraphs=2, sentences=2, words=4, n_filler=30)
    trees = synth_corpus(10, 2, spec, 0)
    store = random_store(synth_vocab(2, spec), 8, make_rng(1))
    everything = list(range(10))
    cfg = tr.TrainConfig(hidden_dim=16, batch_size=10, epochs=200, learning_rate=0.02, weight_decay=0.0)
    res = tr.train(trees, store, cfg, splits=(everything, everything, []))
    corpus, emb, ck = tmp_path / "c.jsonl", tmp_path / "e.txt", tmp_path / "ck.json"
    write_corpus(trees, corpus)
    store.save_word2vec_text(emb)
    res.model.save(ck)
    for split in ("train", "all"):
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(ck), "--corpus", str(corpus), "--embeddings", str(emb), "--split", split]) == 0
        assert json.loads(capsys.readouterr().out)["macro_f1"] == 1.0


def article_setup(tmp_path):
    (tmp_path / "in" / "people").mkdir(parents=True)
    (tmp_path / "in" / "people" / "a.txt").write_text((FIXTURES / "article.txt").read_text())
    corpus = tmp_path / "c.jsonl"
    assert main(["prepare", "--input", str(tmp_path / "in"), "--out", str(corpus)]) == 0
    tree = read_corpus(corpus)[0]
    tokens = sorted({t for nid in tree.leaf_ids for t in tokenize(tree.nodes[nid].text)})
    emb = tmp_path / "e.txt"
    random_store(tokens, 6, make_rng(2)).save_word2vec_text(emb)
    ck = tmp_path / "ck.json"
    Model.create("tree-lstm", 6, 4, 2, seed=1).save(ck)
    return corpus, emb, ck


def test_viz_on_article(tmp_path):
    corpus, emb, ck = article_setup(tmp_path)
    out = tmp_path / "viz"
    assert main(["viz", "--checkpoint", str(ck), "--corpus", str(corpus), "--embeddings", str(emb),
                 "--ids", "0", "--out-dir", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["doc0.html", "doc0.json"]
    assert "Career" in (out / "doc0.html").read_text()


def test_viz_bad_id(tmp_path):
    corpus, emb, ck = article_setup(tmp_path)
    assert main(["viz", "--checkpoint", str(ck), "--corpus", str(corpus), "--embeddings", str(emb),
                 "--ids", "5", "--out-dir", str(tmp_path / "v")]) == 1


def test_missing_checkpoint(tmp_path, synth_files, capsys):
    corpus, emb = synth_files
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.json"), "--corpus", str(corpus), "--embeddings", str(emb)]) == 1
    assert "not found" in capsys.readouterr().err


def test_label_mismatch(tmp_path, capsys):
    spec = DepthSpec(sections=2, paragraphs=1, sentences=1, words=3, n_filler=5)
    corpus = tmp_path / "c.jsonl"
    write_corpus(synth_corpus(8, 4, spec, 0), corpus)
    ck = tmp_path / "ck.json"
    Model.create("tree-lstm", 4, 3, 2).save(ck)
    emb = tmp_path / "e.txt"
    random_store(synth_vocab(4, spec), 4, make_rng(0)).save_word2vec_text(emb)
    assert main(["eval", "--checkpoint", str(ck), "--corpus", str(corpus), "--embeddings", str(emb)]) == 1
    assert "label 3" in capsys.readouterr().err


def test_malformed_corpus(tmp_path, synth_files):
    _, emb = synth_files
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"root": \n')
    ck = tmp_path / "ck.json"
    Model.create("tree-lstm", 8, 3, 2).save(ck)
    assert main(["eval", "--checkpoint", str(ck), "--corpus", str(bad), "--embeddings", str(emb)]) == 2


def test_usage_error_exit_code(capsys):
    assert main(["params", "--model", "tree-lstm"]) == 1
    assert main(["bogus"]) == 1


def test_console_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "structree.cli", "params", "--model", "mlp-unweighted", "--e", "10", "--h", "4", "--l", "2"],
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == str(10 * 4 + 4 + 4 * 4 + 4 + 4 * 2 + 2)
