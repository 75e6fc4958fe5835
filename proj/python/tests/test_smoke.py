import itertools

import numpy as np
import pytest

import xmlc


def test_preprocess_cleans_text():
    tokens = xmlc.preprocess("Pt [**Name**] given 20mg, BP 120/80. Stable!")
    assert tokens == ["pt", "given", "bp", "<num>", "<num>", "stable"]
    assert len(xmlc.preprocess("a " * 50, max_len=7)) == 7


def test_cooccurrence_matches_recount():
    rng = np.random.default_rng(3)
    L = 6
    labels = [sorted(np.flatnonzero(rng.random(L) < 0.4).tolist()) for _ in range(40)]
    g = xmlc.cooccurrence(labels, L, lambda_=0.5)
    has = np.array([[l in doc for l in range(L)] for doc in labels])
    for i, j in itertools.product(range(L), repeat=2):
        ci = has[:, i].sum()
        p = (has[:, i] & has[:, j]).sum() / ci if ci else 0.0
        assert g["cond_prob"][i, j] == pytest.approx(p, abs=0)
        assert g["adjacency"][i, j] == float(i == j or p >= 0.5)


def test_propagation_rows_are_stochastic():
    adj = np.eye(4) + np.triu(np.ones((4, 4)), 1)
    p = xmlc.propagation_matrix(adj)
    assert np.allclose(p.sum(axis=1), 1.0)


def test_mask_index_candidates():
    labels = [[0, 1], [1], [2]]
    aux = [{"drg": ["A"]}, {"drg": ["A"]}, {"drg": ["B"], "cpt": ["C"]}]
    idx = xmlc.MaskIndex(labels, aux, num_labels=3, tau=0.6)
    assert idx.candidates({"drg": ["A"]}) == [1]
    assert idx.probabilities("drg", "A") == {0: 0.5, 1: 1.0}
    idx.set_tau(0.4)
    assert idx.candidates({"drg": ["A"], "cpt": ["C"]}) == [0, 1, 2]
    assert idx.candidates({"drg": ["unseen"]}) == []
    assert idx.stats(labels, aux)["recall"] == 1.0
    with pytest.raises(xmlc.Error):
        idx.candidates({"icd": ["x"]})


def test_metrics_agree_with_brute_force():
    rng = np.random.default_rng(5)
    scores = rng.random((12, 9))
    gold = [sorted(rng.choice(9, size=rng.integers(1, 4), replace=False).tolist()) for _ in range(12)]
    truth = np.zeros_like(scores, dtype=bool)
    for d, g in enumerate(gold):
        truth[d, g] = True
    m = xmlc.compute_metrics(scores, gold, threshold=0.5, ks=[5, 8])
    pred = scores >= 0.5
    tp, fp, fn = (pred & truth).sum(), (pred & ~truth).sum(), (~pred & truth).sum()
    assert m["micro_f1"] == pytest.approx(2 * tp / (2 * tp + fp + fn), abs=1e-12)
    for k in (5, 8):
        top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
        p = np.mean([truth[d, top[d]].sum() / k for d in range(12)])
        assert m[f"p_at_{k}"] == pytest.approx(p, abs=1e-12)
    assert set(m) >= {"micro_auc", "macro_auc", "macro_f1"}


def test_synthetic_corpus_and_training():
    corpus = xmlc.generate_synthetic(num_labels=20, n_docs=200, seed=2)
    assert sum(len(corpus[s]) for s in ("train", "validation", "test")) == 200
    assert {"doc_id", "text", "labels", "drg", "cpt", "drugs"} <= set(corpus["train"][0])
    result = xmlc.run_synthetic(20, 200, seed=2, settings={**xmlc.DESK, "max_epochs": "2"})
    assert result["epochs"] == 2
    assert 0.0 <= result["micro_f1"] <= 1.0
    with pytest.raises(xmlc.ConfigError):
        xmlc.run_synthetic(20, 200, settings={"learning_rate": "1"})


def test_pipeline_stages(tmp_path):
    synth = tmp_path / "corpus"
    xmlc.run_command("gen-synthetic", {"work_dir": str(tmp_path / "gen"), "synth_dir": str(synth),
                                       "synth_labels": "20", "synth_docs": "200"})
    files = dict(line.split("=", 1) for line in (synth / "corpus.conf").read_text().splitlines()
                 if "=" in line and not line.startswith("#"))
    settings = {**xmlc.DESK, **files, "max_epochs": "2", "work_dir": str(tmp_path / "run")}
    with pytest.raises(xmlc.InputError):
        xmlc.run_command("train", settings)
    for stage in ["preprocess", "build-graph", "build-mask", "train", "evaluate", "predict"]:
        manifest = xmlc.run_command(stage, settings)
        assert manifest["outputs"]
    with pytest.raises(xmlc.StalenessError):
        xmlc.run_command("train", {**settings, "lambda": "0.5"})
    assert "ablate" in xmlc.subcommands()
    assert ("tau", "0.005") in [k[:2] for k in xmlc.config_keys()]
