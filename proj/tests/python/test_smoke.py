import os
import subprocess

import numpy as np
import pytest

import landmark_rerank as lr


def rows(*items):
    return lr.Submission([lr.Prediction(i, None if g is None else lr.Guess(*g)) for i, g in items])


def test_gap_perfect_and_halved():
    truth = {"a": 1, "b": 2}
    assert lr.gap(rows(("a", (1, 0.1)), ("b", (2, 7.0))), truth) == 1.0
    assert lr.gap(rows(("a", (1, 0.9)), ("b", (5, 0.1))), truth) == 0.5


def test_distractor_rows_are_none():
    truth = {"d": None, "l": 3}
    assert lr.gap(rows(("d", (3, 0.9)), ("l", (3, 0.5))), truth) == 0.5


def test_submission_text_round_trip():
    text = "id,landmarks\na,7 0.5\nb,\n"
    sub = lr.parse_submission(text)
    assert len(sub) == 2
    assert sub.rows[0].guess == lr.Guess(7, 0.5)
    assert sub.rows[1].guess is None
    assert lr.format_submission(sub) == text
    assert [r.image for r in lr.ranked(rows(("x", None), ("y", (1, 0.2)))).rows] == ["y", "x"]


def test_errors_map_to_python_exceptions():
    with pytest.raises(lr.ParseError):
        lr.parse_submission("id,landmarks\na,7\n")
    with pytest.raises(lr.LookupError):
        lr.gap(rows(("zz", (1, 1.0))), {"a": 1})
    assert issubclass(lr.UsageError, lr.Error)
    assert issubclass(lr.Error, RuntimeError)


def test_pooling_matches_numpy():
    rng = np.random.default_rng(0)
    fmap = rng.uniform(0.0, 2.0, size=(5, 7, 4))
    np.testing.assert_allclose(lr.gem_pool(fmap, 1.0), fmap.mean(axis=(0, 1)), atol=1e-12)
    np.testing.assert_allclose(lr.mac_pool(fmap), fmap.max(axis=(0, 1)))
    np.testing.assert_allclose(lr.spoc_pool(fmap), fmap.mean(axis=(0, 1)), atol=1e-12)
    r = np.asarray(lr.rmac_pool(fmap, 3))
    assert abs(np.linalg.norm(r) - 1.0) < 1e-12


def test_losses():
    assert abs(lr.contrastive_loss([0.3, 0.4], [0.3, 0.8], False) - 0.125) < 1e-9
    assert abs(lr.triplet_loss([0, 0], [0.1**0.5, 0], [0, 0.2**0.5]) - 0.1) < 1e-9


def test_knn_matches_numpy():
    rng = np.random.default_rng(1)
    train = rng.normal(size=(200, 16)).astype(np.float32)
    test = rng.normal(size=(20, 16)).astype(np.float32)
    train /= np.linalg.norm(train, axis=1, keepdims=True)
    test /= np.linalg.norm(test, axis=1, keepdims=True)
    train_ids = [f"t{i:03d}" for i in range(200)]
    test_ids = [f"q{i:03d}" for i in range(20)]
    result = lr.knn_search(test_ids, test, train_ids, train, 10)
    sims = test.astype(np.float64) @ train.astype(np.float64).T
    for qi, (query, neighbors) in enumerate(result):
        assert query == test_ids[qi]
        expect = np.argsort(-sims[qi], kind="stable")[:10]
        assert [n for n, _ in neighbors] == [train_ids[j] for j in expect]


def test_descriptor_files_round_trip(tmp_path):
    data = np.eye(3, dtype=np.float32)
    lr.save_descriptors(["a", "b", "c"], data, tmp_path / "d.glds")
    ids, back = lr.load_descriptors(tmp_path / "d.glds")
    assert ids == ["a", "b", "c"]
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, data)


def test_step1_on_the_benchmark(tmp_path):
    cfg = lr.write_benchmark(tmp_path, seed=0)
    artifacts = lr.run_pipeline(cfg, "step1")
    truth = lr.load_ground_truth(tmp_path / "truth.csv")
    score = lr.gap(lr.load_submission(artifacts["step1"]), truth)
    assert 0.5 < score <= 1.0
    assert "full" in lr.recipes()
    with pytest.raises(lr.UsageError):
        lr.run_pipeline(cfg, "step9")

    cli = os.environ.get("LMR_CLI")
    if cli:
        out = subprocess.run(
            [cli, "evaluate", "--submission", str(artifacts["step1"]), "--truth", str(tmp_path / "truth.csv")],
            check=True, capture_output=True, text=True,
        ).stdout
        assert abs(float(out.split()[-1]) - score) < 1e-5
