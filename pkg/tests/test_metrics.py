import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graspkit.affordance import AffordanceMap
from graspkit.dataset import grasp_candidates_from_record, instance_from_record, pair_candidates
from graspkit.errors import DegenerateLabels, ShapeMismatch
from graspkit.grasp import GraspCandidate
from graspkit.instance import InstanceSpec
from graspkit.mesh import SurfaceSample
from graspkit.metrics import auc_j, is_same_surface, kld, map_metrics, quasi_static_success, sim, topn_success


def _dist(rng, n, sparse=False):
    p = rng.random(n)
    if sparse:
        p[rng.random(n) < 0.5] = 0.0
        p[0] += 1e-3
    return p / p.sum()


def test_worked_pair():
    gt, pred = [0.5, 0.5], [0.9, 0.1]
    expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    assert kld(pred, gt) == pytest.approx(expected, abs=1e-9)
    assert kld(pred, gt) == pytest.approx(0.5108, abs=1e-4)
    assert sim(pred, gt) == pytest.approx(0.6, abs=1e-12)


def test_identity():
    rng = np.random.default_rng(0)
    p = _dist(rng, 500)
    assert abs(kld(p, p)) <= 1e-9
    assert sim(p, p) == pytest.approx(1.0, abs=1e-12)
    assert auc_j(p, p) >= 0.99


def test_accepts_affordance_maps():
    pts = np.zeros((2, 3))
    gt = AffordanceMap(pts, np.array([0.5, 0.5]), 0.1)
    pred = AffordanceMap(pts, np.array([0.9, 0.1]), 0.1)
    assert sim(pred, gt) == pytest.approx(0.6)


def test_zero_gt_terms_and_disjoint_support():
    assert kld([0.5, 0.5, 0.0], [1.0, 0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-9)
    assert sim([0.0, 1.0], [1.0, 0.0]) == 0.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 300), sparse=st.booleans())
def test_kld_gibbs_and_sim_symmetry(seed, n, sparse):
    rng = np.random.default_rng(seed)
    p, g = _dist(rng, n, sparse), _dist(rng, n, sparse)
    assert kld(p, g) >= -n * 1e-12 - 1e-12
    assert sim(p, g) == pytest.approx(sim(g, p), abs=1e-15)
    assert -1e-15 <= sim(p, g) <= 1.0 + 1e-12


def test_auc_constant_and_reversed():
    rng = np.random.default_rng(1)
    g = _dist(rng, 400)
    assert auc_j(np.full(400, 1 / 400), g) == pytest.approx(0.5, abs=1e-9)
    assert auc_j(1.0 - g, g) <= 0.01


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(["exp", "cube", "affine", "log"]))
def test_auc_invariant_under_increasing_transform(seed, kind):
    rng = np.random.default_rng(seed)
    g = _dist(rng, 200)
    p = np.round(_dist(rng, 200), 4)  # with ties
    f = {"exp": np.exp, "cube": lambda x: x ** 3, "affine": lambda x: 3 * x + 7,
         "log": lambda x: np.log(x + 1e-3)}[kind]
    assert auc_j(f(p), g) == pytest.approx(auc_j(p, g), abs=1e-12)


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(4)
    g = _dist(rng, 150)
    p = np.round(rng.random(150), 2)
    pos = g > 1 / 150
    diff = p[pos][:, None] - p[~pos][None, :]
    ref = (np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size
    assert auc_j(p, g) == pytest.approx(ref, abs=1e-12)


def test_auc_degenerate_labels():
    with pytest.raises(DegenerateLabels):
        auc_j([0.2, 0.3, 0.5], [1 / 3, 1 / 3, 1 / 3])
    with pytest.raises(DegenerateLabels):
        auc_j([0.5, 0.5], [0.9, 0.1], threshold=0.95)


def test_shape_mismatch():
    for fn in (kld, sim, auc_j, map_metrics):
        with pytest.raises(ShapeMismatch):
            fn([0.5, 0.5], [0.2, 0.3, 0.5])


def test_map_metrics_bundle():
    pred, gt = [0.7, 0.2, 0.1], [0.6, 0.4, 0.0]
    r = map_metrics(pred, gt)
    assert r.sim == pytest.approx(0.8)
    assert r.kld == pytest.approx(kld(pred, gt))
    assert r.auc_j == pytest.approx(1.0)  # the single positive is ranked first


# ---------------------------------------------------------------------------
# quasi-static success


WIDE = {"max_width": 2.0, "max_force": 1000.0}


def _cube_instance(cube_1kg, **kw):
    mesh, assign, mp = cube_1kg(**kw)
    return InstanceSpec("cube", "cube", mesh, tuple(assign), mp, 0)


def _side_grasp():
    return GraspCandidate(SurfaceSample(np.array([-0.5, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]), 0, 0),
                          SurfaceSample(np.array([0.5, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0, 1))


def test_cube_pinch(cube_1kg):
    inst = _cube_instance(cube_1kg)
    assert quasi_static_success(_side_grasp(), inst, WIDE)
    assert not quasi_static_success(_side_grasp(), inst, {**WIDE, "max_force": 5.0})
    assert not quasi_static_success(_side_grasp(), inst, {**WIDE, "max_width": 0.5})
    assert not quasi_static_success(_side_grasp(), inst)  # default 8 cm gripper


def test_same_surface_fails(cube_1kg):
    inst = _cube_instance(cube_1kg)
    same = GraspCandidate(SurfaceSample(np.array([0.5, -0.2, 0.0]), np.array([1.0, 0.0, 0.0]), 0, 1),
                          SurfaceSample(np.array([0.5, 0.2, 0.0]), np.array([1.0, 0.0, 0.0]), 0, 1))
    assert is_same_surface(same)
    assert not quasi_static_success(same, inst, WIDE)
    assert not is_same_surface(_side_grasp())


def test_nonfinite_candidate_fails(cube_1kg):
    inst = _cube_instance(cube_1kg)
    bad = GraspCandidate(SurfaceSample(np.array([np.nan, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]), 0, 0),
                         _side_grasp().contact2)
    assert not quasi_static_success(bad, inst, WIDE)


def test_dataset_positives_succeed(small_records):
    for rec in small_records:
        inst = instance_from_record(rec)
        cands = grasp_candidates_from_record(rec)
        assert all(quasi_static_success(c, inst) for c in cands), rec.instance_id


def test_ground_truth_top1_is_perfect(small_records):
    preds = [grasp_candidates_from_record(r) for r in small_records]
    insts = [instance_from_record(r) for r in small_records]
    rep = topn_success(preds, insts, n=1)
    assert rep.top1 == 1.0 and rep.top5 == 1.0
    assert rep.ranks == (1,) * len(small_records)


def test_empty_list_fails(small_records):
    rec = small_records[0]
    rep = topn_success([[]], [instance_from_record(rec)], n=5)
    assert rep.top1 == rep.top5 == 0.0 and rep.ranks == (0,)
    with pytest.raises(ValueError):
        topn_success([[]], [instance_from_record(rec)], n=0)
    with pytest.raises(ShapeMismatch):
        topn_success([], [instance_from_record(rec)], n=1)


def test_topn_monotone_on_random_predictions(small_records):
    rng = np.random.default_rng(0)
    insts = [instance_from_record(r) for r in small_records]
    for trial in range(3):
        preds = []
        for rec in small_records:
            # mix of random pairs and exact positives at random ranks
            pairs = rng.integers(0, len(rec.points), size=(8, 2))
            cands = pair_candidates(rec, pairs)
            gt = grasp_candidates_from_record(rec)
            for k in rng.choice(8, size=2, replace=False):
                if rng.random() < 0.5:
                    cands[k] = gt[int(rng.integers(len(gt)))]
            preds.append(cands)
        r1 = topn_success(preds, insts, n=1)
        r3 = topn_success(preds, insts, n=3)
        assert r1.top5 >= r1.top1
        assert r1.top1 <= r3.topn <= r1.top5
