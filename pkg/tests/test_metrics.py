import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

import oracles
from aiosod.metrics.saliency import (aggregate, centroid, e_measure, evaluate_folder, mae,
                                     max_f_measure, s_measure, score_pair)

maps = st.integers(0, 2**31 - 1).map(lambda s: np.random.default_rng(s))


def blob(h=8, w=8):
    g = np.zeros((h, w))
    g[2:5, 3:7] = 1
    return g


# ---------------------------------------------------------------- worked examples

def test_mae_examples():
    g = blob()
    assert mae(g, g) == 0.0
    assert mae(np.ones((4, 4)), np.zeros((4, 4))) == 1.0
    assert mae(np.array([[1, 0.5], [0, 0]]), np.array([[1, 0], [0, 0]])) == 0.125


def test_max_f_examples():
    g = blob()
    assert max_f_measure(g, g) == 1.0
    assert max_f_measure(1 - g, g) == 0.0


def test_max_f_precision_recall_construction():
    # precision 0.8 and recall 0.6 at every threshold below 1
    g = np.zeros((8, 8))
    g.flat[:20] = 1                      # 20 positives
    p = np.zeros((8, 8))
    p.flat[:12] = 1.0                    # 12 true positives -> recall 0.6
    p.flat[20:23] = 1.0                  # 3 false positives -> precision 12/15 = 0.8
    expected = 1.3 * 0.8 * 0.6 / (0.3 * 0.8 + 0.6)
    assert max_f_measure(p, g) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.7429, abs=5e-5)
    assert max_f_measure(p, g) == oracles.max_f_brute(p, g)


def test_empty_gt_scores_zero_f():
    assert max_f_measure(np.full((4, 4), 0.3), np.zeros((4, 4))) == 0.0


def test_s_measure_examples():
    g = blob()
    assert s_measure(g, g) == pytest.approx(1.0, abs=1e-12)
    assert s_measure(np.zeros((6, 6)), np.zeros((6, 6))) == 1.0
    assert s_measure(np.full((6, 6), 0.25), np.zeros((6, 6))) == 0.75
    assert s_measure(np.full((6, 6), 0.25), np.ones((6, 6))) == 0.25


def test_e_measure_examples():
    g = blob()
    assert e_measure(g, g) == pytest.approx(1.0, abs=1e-12)
    # inverted prediction: every threshold gives alignment -1 or the empty map, best is 1/4
    assert e_measure(1 - g, g) == pytest.approx(0.25, abs=1e-12)
    assert e_measure(1 - g, g) == pytest.approx(oracles.e_measure_ref(1 - g, g), abs=1e-12)
    # all-background ground truth: the empty binarisation always exists, so the max is 1
    assert e_measure(np.full((4, 4), 0.7), np.zeros((4, 4))) == 1.0


def test_size_mismatch_rejected():
    for f in (mae, max_f_measure, s_measure, e_measure):
        with pytest.raises(ValueError, match="differ"):
            f(np.zeros((3, 3)), np.zeros((3, 4)))


def test_centroid_rounds_half_away_from_zero():
    g = np.zeros((4, 4), bool)
    g[0, 1] = g[0, 2] = True             # column centre 2.5 (1-based) -> 3
    assert centroid(g) == (3, 1)
    assert centroid(np.zeros((5, 7), bool)) == (4, 3)


# ---------------------------------------------------------------- oracles

def random_pair(rng, h, w):
    p = rng.random((h, w))
    if rng.random() < 0.3:
        p = np.round(p * 255) / 255       # exact 8-bit levels hit the thresholds
    g = (rng.random((h, w)) < rng.uniform(0.1, 0.9)).astype(float)
    return p, g


def test_mae_and_max_f_match_brute_force_exactly():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        p, g = random_pair(rng, 8, 8)
        assert mae(p, g) == oracles.mae_exact(p, g)
        assert max_f_measure(p, g) == oracles.max_f_brute(p, g)


def test_s_and_e_match_reference_implementations():
    rng = np.random.default_rng(7)
    for _ in range(15):
        p, g = random_pair(rng, 16, 16)
        assert abs(s_measure(p, g) - oracles.s_measure_ref(p, g)) <= 1e-6
        assert abs(e_measure(p, g) - oracles.e_measure_ref(p, g)) <= 1e-6


def test_non_square_and_edge_centroid_against_reference():
    rng = np.random.default_rng(3)
    g = np.zeros((9, 13))
    g[:, 0] = 1                           # centroid on the first column: one empty quadrant
    p = rng.random((9, 13))
    assert abs(s_measure(p, g) - oracles.s_measure_ref(p, g)) <= 1e-6
    assert abs(e_measure(p, g) - oracles.e_measure_ref(p, g)) <= 1e-6


# ---------------------------------------------------------------- properties

@settings(max_examples=60, deadline=None)
@given(rng=maps, h=st.integers(2, 12), w=st.integers(2, 12))
def test_scores_in_unit_interval(rng, h, w):
    p, g = random_pair(rng, h, w)
    for name, value in score_pair(p, g).items():
        assert 0.0 <= value <= 1.0 + 1e-12, name


def _f_all_positive(g, beta2=0.3):
    prevalence = g.mean()
    return (1 + beta2) * prevalence / (beta2 * prevalence + 1)


@settings(max_examples=60, deadline=None)
@given(rng=maps, shift=st.floats(0.0, 1.0))
def test_max_f_threshold_guard_for_binary_predictions(rng, shift):
    # with P > t a binary map offers the binarizations {split, empty}; lifting the
    # zeros to ``shift`` > 0 adds only "everything positive" (at t < shift)
    g = (rng.random((6, 6)) > 0.5).astype(float)
    if not g.any():
        g[0, 0] = 1
    p = (rng.random((6, 6)) > 0.5).astype(float)
    shifted = np.clip(p + shift, 0, 1)
    base = max_f_measure(p, g)
    if shift == 0.0:
        assert max_f_measure(shifted, g) == base
    elif shifted.min() < 1:
        assert max_f_measure(shifted, g) == pytest.approx(max(base, _f_all_positive(g)), abs=1e-15)
        if _f_all_positive(g) <= base:
            assert max_f_measure(shifted, g) == base


@settings(max_examples=40, deadline=None)
@given(rng=maps)
def test_perfect_binary_prediction(rng):
    g = (rng.random((7, 9)) > 0.5).astype(float)
    assert mae(g, g) == 0.0
    if g.any():
        assert max_f_measure(g, g) == 1.0
    assert s_measure(g, g) == pytest.approx(1.0, abs=1e-12)
    assert e_measure(g, g) == pytest.approx(1.0, abs=1e-12)


def test_aggregate_is_unweighted_and_order_free():
    per = {"b": {"mae": 0.2, "max_f": 0.5, "s_measure": 0.4, "e_measure": 0.9},
           "a": {"mae": 0.4, "max_f": 1.0, "s_measure": 0.6, "e_measure": 0.7}}
    r = aggregate("x", per)
    assert (r.mae, r.max_f, r.s_measure, r.e_measure) == pytest.approx((0.3, 0.75, 0.5, 0.8))
    again = aggregate("x", dict(reversed(list(per.items()))))
    assert again.as_row() == r.as_row()


def test_evaluate_folder_matches_by_stem(tmp_path):
    rng = np.random.default_rng(0)
    (tmp_path / "pred").mkdir()
    (tmp_path / "gt").mkdir()
    pairs = {}
    for name in ("x1", "x2"):
        p = (rng.random((10, 12)) * 255).astype(np.uint8)
        g = (rng.random((10, 12)) > 0.5).astype(np.uint8) * 255
        Image.fromarray(p).save(tmp_path / "pred" / f"{name}.png")
        Image.fromarray(g).save(tmp_path / "gt" / f"{name}.png")
        pairs[name] = (p / 255.0, g / 255.0)
    Image.fromarray(np.zeros((10, 12), np.uint8)).save(tmp_path / "pred" / "orphan.png")
    report = evaluate_folder(tmp_path / "pred", tmp_path / "gt", "set")
    assert report.count == 2
    assert report.mae == pytest.approx(np.mean([mae(*pairs[k]) for k in pairs]))
