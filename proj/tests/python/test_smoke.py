"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import deepmot


def test_iou_and_pair_distance():
    assert deepmot.iou([0, 0, 2, 2], [0, 0, 2, 2]) == pytest.approx(1.0)
    assert deepmot.iou([0, 0, 2, 2], [1, 0, 2, 2]) == pytest.approx(1.0 / 3.0)
    expected = (1.0 / math.sqrt(20000.0) + 2.0 / 3.0) / 2.0
    assert deepmot.pair_distance([0, 0, 2, 2], [1, 0, 2, 2], 100, 100) == pytest.approx(
        expected, abs=1e-12
    )


def test_distance_matrix_shape():
    tracks = np.array([[10, 10, 20, 20], [50, 50, 20, 20]], dtype=float)
    objects = np.array([[12, 11, 20, 20], [100, 90, 30, 30], [5, 200, 10, 10]], dtype=float)
    d = deepmot.distance_matrix(tracks, objects, 640, 480)
    assert d.shape == (2, 3)
    assert (d >= 0).all() and (d <= 1).all()


def test_hungarian():
    d = np.array([[0.1, 0.9], [0.9, 0.1]])
    assignment = deepmot.solve(d)
    assert (assignment == np.eye(2)).all()
    gated = deepmot.solve_thresholded(np.array([[0.9]]), 0.5)
    assert gated[0, 0] == 0.0


def test_dhn_forward_and_checkpoint(tmp_path):
    net = deepmot.Dhn.init(variant="seq_gru", hidden=8, seed=3)
    d = np.random.default_rng(0).random((3, 4))
    soft = net.forward(d)
    assert soft.shape == (3, 4)
    assert (soft > 0).all() and (soft < 1).all()

    path = str(tmp_path / "model.ntf1")
    net.save(path)
    reloaded = deepmot.Dhn.load(path)
    assert reloaded.variant == "seq_gru"
    assert reloaded.hidden == 8
    # float32 checkpoint quantization keeps outputs close.
    assert np.allclose(reloaded.forward(d), soft, atol=1e-5)


def test_losses():
    d = np.array([[0.1, 1.0, 1.0], [1.0, 0.2, 1.0], [1.0, 1.0, 0.3]])
    mask = np.eye(3)
    assert deepmot.dmotp(d, mask) == pytest.approx(0.8)

    label = np.array([[1.0, 0.0], [0.0, 0.0]])
    uniform = np.full((2, 2), 0.5)
    w0, w1 = 0.25, 0.75
    expected = -(w1 + 3 * w0) * 0.25 * math.log(0.5) / 4.0
    assert deepmot.focal_loss(uniform, label) == pytest.approx(expected, abs=1e-12)

    counts = deepmot.soft_counts(np.array([[0.5]]))
    assert counts["fp"] == pytest.approx(0.5)

    loss = deepmot.deepmot_loss(d, np.eye(3) * 0.9 + 0.05, mask, mask, 3)
    assert loss >= 0.0


def test_discretize():
    soft = np.array([[0.9, 0.1], [0.3, 0.4]])
    hard = deepmot.discretize(soft, "row")
    assert (hard == np.array([[1, 0], [0, 0]])).all()


def test_gen_pairs_labels_are_valid():
    pairs = deepmot.gen_matrix_pairs(5, 2, 5, "mixed", seed=11)
    assert len(pairs) == 5
    for d, a in pairs:
        assert d.shape == a.shape
        assert set(np.unique(a)) <= {0.0, 1.0}
        assert (a.sum(axis=0) <= 1).all() and (a.sum(axis=1) <= 1).all()


def test_evaluate_tracking(tmp_path):
    gt = tmp_path / "gt.txt"
    rows = []
    for frame in range(1, 4):
        rows.append(f"{frame},1,100,100,30,40,1,1,1")
        rows.append(f"{frame},2,400,300,30,40,1,1,1")
    gt.write_text("\n".join(rows) + "\n")
    report = deepmot.evaluate_tracking(str(gt), str(gt))
    assert report["MOTA"] == pytest.approx(1.0)
    assert report["IDF1"] == pytest.approx(1.0)
    assert report["IDS"] == 0
