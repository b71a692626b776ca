import json
import math

import numpy as np
import pytest

import sarkit


def test_preprocess_and_tags():
    assert sarkit.preprocess("Visit http://x.co NOW") == ["visit", "<url>", "now"]
    assert sarkit.TAGS == ("SU", "R", "Q", "P", "ST")


def test_lambda_schedule():
    assert sarkit.lambda_schedule(0.0) == 0.0
    assert sarkit.lambda_schedule(1.0) == pytest.approx(2 / (1 + math.exp(-10)) - 1, abs=1e-12)


def test_crf_against_enumeration():
    rng = np.random.default_rng(0)
    k, n = 3, 4
    nodes = rng.normal(size=(n, k))
    trans = sarkit.crf_initial_transitions(k)
    finite = np.isfinite(trans)
    trans[finite] = rng.normal(size=finite.sum())
    start, stop = k, k + 1

    def score(path):
        s = trans[start, path[0]] + trans[path[-1], stop]
        s += sum(nodes[i, y] for i, y in enumerate(path))
        s += sum(trans[a, b] for a, b in zip(path, path[1:]))
        return s

    paths = np.array(np.meshgrid(*[range(k)] * n)).T.reshape(-1, n)
    scores = np.array([score(p) for p in paths])
    assert sarkit.crf_log_partition(nodes, trans) == pytest.approx(np.logaddexp.reduce(scores), abs=1e-9)
    labels, best = sarkit.viterbi(nodes, trans)
    assert best == pytest.approx(scores.max(), abs=1e-9)
    assert score(labels) == pytest.approx(best, abs=1e-9)


def test_score():
    report = sarkit.score([["SU", "SU", "R", "R"]], [["SU", "SU", "SU", "SU"]])
    assert report["accuracy"] == 0.5
    with pytest.raises(ValueError):
        sarkit.score([["XX"]], [["SU"]])


def test_synth_and_round_trip():
    src, tgt = sarkit.synth(4, seed=3, n_target=2)
    assert len(src.splitlines()) == 4
    assert len(tgt.splitlines()) == 2
    assert sarkit.synth(4, seed=3, n_target=2) == (src, tgt)
    assert sarkit.normalize_corpus(src) == src
    with pytest.raises(ValueError):
        sarkit.synth(2, seed=1, profile='{"colour": 1}')


def test_train_predict_evaluate(tmp_path):
    src, tgt = sarkit.synth(6, seed=2, n_target=3)
    (tmp_path / "train.jsonl").write_text(src)
    (tmp_path / "dev.jsonl").write_text(tgt)
    config = {"epochs": 2, "embedding_dim": 8, "word_hidden": 4, "conv_hidden": 4}
    (tmp_path / "config.json").write_text(json.dumps(config))
    ckpt = str(tmp_path / "m.ckpt")
    code, out, err = sarkit.train(str(tmp_path / "config.json"), str(tmp_path / "train.jsonl"),
                                  str(tmp_path / "dev.jsonl"), ckpt)
    assert code == 0, err

    model = sarkit.Model(ckpt)
    predicted = model.predict(tgt)
    assert len(predicted) == 3
    gold = [json.loads(line) for line in tgt.splitlines()]
    for conv, tags in zip(gold, predicted):
        assert len(tags) == sum(len(c["sentences"]) for c in conv["comments"])
        assert set(tags) <= set(sarkit.TAGS)
    report = sarkit.evaluate(model, tgt)
    assert 0.0 <= report["macro_f1"] <= 1.0
    assert json.loads(model.config_json())["epochs"] == 2

    with pytest.raises(ValueError):
        sarkit.Model(str(tmp_path / "dev.jsonl"))


def test_adapt_usage_error(tmp_path):
    code, _, err = sarkit.adapt("unsup", source="missing.jsonl")
    assert code == 2
    assert err


def test_verify_schedule():
    code, out, _ = sarkit.verify("schedule")
    assert code == 0
    assert out
