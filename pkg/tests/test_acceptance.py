"""Acceptance criteria 1-11.

Each test prints one ``PASS``/``FAIL`` line (collected and repeated in the
terminal summary by ``conftest.py``) and then asserts the criterion with the
tolerance stated next to it.  Run alone with::

    pytest tests/test_acceptance.py -v
"""
import copy
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from graspkit.bridge import (
    BridgeDims, LossConfig, PairBatch, TrainingInstance, finite_difference_check, init_params, loss_embedding,
    loss_global, loss_match, train_overfit, training_instance,
)
from graspkit.cli import main
from graspkit.config import DEFAULT_CONFIG
from graspkit.dataset import brute_force_prob, generate_dataset, generate_instance, read_records
from graspkit.fixtures import DESK_CORPUS, get_fixture
from graspkit.grasp import (
    GraspCandidate, WrenchTask, check_force_closure, grasp_matrix, gravity_task,
)
from graspkit.language import check_summary, summarize_instance
from graspkit.dataset import instance_from_record
from graspkit.materials import ContactModel, Material, PartAssignment, fixed_assignment, mass_properties, material_lookup
from graspkit.instance import InstanceSpec
from graspkit.mesh import SurfaceSample
from graspkit.metrics import auc_j, kld, sim

from helpers import FROZEN_SUITE_SEED, force_closure_suite, small_config
from oracles import nnls_force_closure

RESULTS = []


def report(num, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {num:>2}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _lp_verdict(cand, mp, mus, caps, m):
    G = grasp_matrix(cand, mp.com)
    models = [ContactModel(float(mus[i]), float(caps[i]), m) for i in range(2)]
    return check_force_closure(G, gravity_task(mp.mass), models,
                               (cand.contact1.normal, cand.contact2.normal)).feasible


@pytest.fixture(scope="module")
def frozen_suite():
    return force_closure_suite(FROZEN_SUITE_SEED, 500)


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory):
    """Criterion 9 corpus: 5 fixture meshes x 10 seeds through the CLI."""
    root = tmp_path_factory.mktemp("acceptance")
    runs = {}
    for name, workers in (("w1", 1), ("w1_again", 1), ("w2", 2)):
        t0 = time.perf_counter()
        code = main(["generate", "--out", str(root / name), "--workers", str(workers)])
        runs[name] = (code, time.perf_counter() - t0)
    return root, runs


# ---------------------------------------------------------------------------


def test_criterion_01_force_closure_oracle(frozen_suite):
    t0 = time.perf_counter()
    agree = 0
    for cand, mp, mus, caps in frozen_suite:
        ours = _lp_verdict(cand, mp, mus, caps, DEFAULT_CONFIG["grasp"]["cone_edges"])
        ref = nnls_force_closure([cand.contact1.position, cand.contact2.position],
                                 [cand.contact1.normal, cand.contact2.normal], mus, caps, mp.com,
                                 gravity_task(mp.mass).f_ext)
        agree += ours == ref
    dt = time.perf_counter() - t0
    frac = agree / len(frozen_suite)
    ok = report(1, "LP vs dense-cone NNLS oracle", frac >= 0.99 and dt < 60.0,
                f"{agree}/{len(frozen_suite)} = {frac:.1%} agree (need >= 99%), {dt:.1f} s (need < 60 s)")
    assert ok


def test_criterion_02_analytic_cube():
    cand = GraspCandidate(SurfaceSample(np.array([-0.5, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]), 0, 0),
                          SurfaceSample(np.array([0.5, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0, 1))
    G = grasp_matrix(cand, np.zeros(3))
    normals = (cand.contact1.normal, cand.contact2.normal)
    at100 = check_force_closure(G, gravity_task(1.0), [ContactModel(0.5, 100.0, 16)] * 2, normals).feasible
    at5 = check_force_closure(G, gravity_task(1.0), [ContactModel(0.5, 5.0, 16)] * 2, normals).feasible
    ok = report(2, "cube mu=0.5, 1 kg", at100 and not at5,
                f"feasible at 100 N: {at100} (need True), feasible at 5 N: {at5} (need False)")
    assert ok


def test_criterion_03_cone_resolution(frozen_suite):
    flips = sum(_lp_verdict(c, mp, mus, caps, 8) != _lp_verdict(c, mp, mus, caps, 16)
                for c, mp, mus, caps in frozen_suite)
    frac = flips / len(frozen_suite)
    ok = report(3, "cone edges 8 -> 16 verdict flips", frac <= 0.01,
                f"{flips}/{len(frozen_suite)} = {frac:.1%} flipped (need <= 1%)")
    assert ok


def test_criterion_04_affordance_integrity(desk_dataset):
    root, _ = desk_dataset
    recs = read_records(root / "w1")
    worst_sum = max(abs(r.prob.sum() - 1.0) for r in recs)
    worst_diff = max(float(np.max(np.abs(brute_force_prob(r.points.astype(np.float64), r.contacts,
                                                          r.contact_weights, r.sigma) - r.prob)))
                     for r in recs)
    ok = report(4, "affordance integrity", len(recs) == 50 and worst_sum <= 1e-9 and worst_diff <= 1e-12,
                f"{len(recs)} records, max |sum-1| = {worst_sum:.1e} (need <= 1e-9), "
                f"max |prob - double loop| = {worst_diff:.1e} (need <= 1e-12)")
    assert ok


def test_criterion_05_metric_identities():
    rng = np.random.default_rng(0)
    p = rng.random(2048)
    p /= p.sum()
    k_id, s_id = kld(p, p), sim(p, p)
    a_const = auc_j(np.full(2048, 1 / 2048), p)
    k_w, s_w = kld([0.9, 0.1], [0.5, 0.5]), sim([0.9, 0.1], [0.5, 0.5])
    ok = (k_id <= 1e-9 and s_id == pytest.approx(1.0, abs=1e-12) and abs(a_const - 0.5) <= 1e-9
          and abs(k_w - 0.5108) <= 1e-4 and abs(s_w - 0.6) <= 1e-12)
    report(5, "metric identities", ok,
           f"kld(P,P) = {k_id:.2e} (need <= 1e-9), sim(P,P) = {s_id:.15f}, auc_j(const) = {a_const:.12f}, "
           f"worked pair kld = {k_w:.6f} (0.5108 +- 1e-4), sim = {s_w:.15f} (0.6 +- 1e-12)")
    assert ok


def _random_training(rng, dims, n, kp, kn):
    from graspkit.bridge import FeatureBundle

    b = FeatureBundle(rng.normal(size=dims.global_in), rng.normal(size=dims.lang_in),
                      rng.normal(size=(n, dims.local_in)), rng.normal(scale=0.1, size=(n, 3)))
    gt = rng.random(n)
    return TrainingInstance(b, gt / gt.sum(), PairBatch(rng.choice(n, size=(kp, 2)), rng.choice(n, size=(kn, 2))))


def test_criterion_06_gradient_check():
    dims = BridgeDims.tiny(width=4, inputs=6)
    rng = np.random.default_rng(6)
    insts = [_random_training(rng, dims, 6, 2, 2), _random_training(rng, dims, 5, 1, 3)]
    params = {k: (rng.normal(scale=0.3, size=np.shape(v)) if k.startswith("b") else v)
              for k, v in init_params(dims, 6).items()}
    t0 = time.perf_counter()
    rep = finite_difference_check(insts, params, dims, LossConfig(awl_sigmas=(0.8, 1.1, 1.5)), h=1e-5)
    dt = time.perf_counter() - t0
    worst = max(rep, key=rep.get)
    ok = report(6, "finite-difference gradients (width 4, h=1e-5)", rep[worst] < 1e-4 and dt < 30.0,
                f"{len(rep)} tensors, max rel err {rep[worst]:.1e} on {worst} (need < 1e-4), "
                f"{dt:.1f} s (need < 30 s)")
    assert ok


def test_criterion_07_loss_contracts():
    gt = np.array([0.1, 0.2, 0.3, 0.4])
    lg = loss_global(gt, gt)
    E = np.array([[0.0, 0.0], [0.0, 0.05], [3.0, 0.0], [0.0, 3.0]])
    le = loss_embedding(E, PairBatch([[0, 1]], [[0, 2], [1, 3]]), LossConfig())[0]
    lm = loss_match([1.0, 1.0, 0.0, 0.0], [1, 1, 0, 0])
    K = 9
    lm_half = loss_match(np.full(K, 0.5), np.r_[np.ones(4), np.zeros(5)])
    clamp = 4 * math.log(1.0 / (1.0 - 1e-12))
    ok = lg == 0.0 and le == 0.0 and 0.0 <= lm <= clamp + 1e-15 and abs(lm_half - K * math.log(2)) <= 1e-9
    report(7, "loss contracts", ok,
           f"L_g = {lg}, L_emb = {le}, L_match(perfect) = {lm:.1e} (clamp bound {clamp:.1e}), "
           f"L_match(p=0.5, K={K}) - K ln 2 = {lm_half - K * math.log(2):.1e} (need +- 1e-9)")
    assert ok


def test_criterion_08_overfit():
    recs = generate_dataset(small_config(2), workers=1)  # 10 instances, two of each desk object
    insts = [training_instance(r, 64, 8, BridgeDims(), seed=0) for r in recs]
    lr = DEFAULT_CONFIG["bridge"]["lr"]
    t0 = time.perf_counter()
    finals = []
    for seed in range(3):
        res = train_overfit(insts, steps=2000, lr=lr, seed=seed)
        finals.append(res.history[-1][1])
    dt = time.perf_counter() - t0
    ok = report(8, "overfit 10 instances, 2000 steps", all(v < 0.05 for v in finals) and dt < 300.0,
                "final L_g per seed " + ", ".join(f"{v:.4f}" for v in finals)
                + f" (need < 0.05 for 3/3), {dt:.0f} s (need < 300 s)")
    assert ok


def test_criterion_09_end_to_end(desk_dataset, capsys):
    root, runs = desk_dataset
    gen_ok = all(code == 0 for code, _ in runs.values())
    capsys.readouterr()
    verify_code = main(["verify", str(root / "w1")])
    out = json.loads(capsys.readouterr().out)

    def tree(d):
        d = root / d
        return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}

    a, again, w2 = tree("w1"), tree("w1_again"), tree("w2")
    n_blobs = sum(k.startswith("blobs/") for k in a)
    secs = runs["w1"][1]
    ok = (gen_ok and n_blobs == 50 and secs < 300.0 and verify_code == 0 and not out["failed"]
          and a == again and a == w2)
    report(9, "end-to-end desk dataset", ok,
           f"generate exit codes {[c for c, _ in runs.values()]}, {n_blobs} records in {secs:.0f} s (need 50 in "
           f"< 300 s), verify exit {verify_code} with {out['positive_grasps_checked']} grasps re-checked, "
           f"repeat identical: {a == again}, workers 1 vs 2 identical: {a == w2}")
    assert ok


def test_criterion_10_language(desk_dataset):
    root, _ = desk_dataset
    recs = read_records(root / "w1")
    bad = []
    for r in recs:
        inst = instance_from_record(r)
        inst = InstanceSpec(inst.instance_id, inst.object_id, get_fixture(r.object_id), inst.assignments,
                            mass_properties(get_fixture(r.object_id), inst.assignments), r.seed)
        s = summarize_instance(inst)
        if s.text != r.summary or check_summary(s, inst):
            bad.append(r.instance_id)
    mesh = get_fixture("faucet")
    assign = fixed_assignment(mesh, {"switch": "plastic", "frame": "brass", "spout": "fiberglass"})
    faucet = InstanceSpec("faucet", "faucet", mesh, tuple(assign), mass_properties(mesh, assign), 0)
    fs = summarize_instance(faucet)
    faucet_ok = (("frame", "highest density") in fs.emphasized and ("spout", "highest friction") in fs.emphasized
                 and check_summary(fs, faucet) == [])
    ok = not bad and faucet_ok and len(recs) == 50
    report(10, "language consistency", ok,
           f"checker passes on {len(recs) - len(bad)}/{len(recs)} desk summaries, faucet names brass frame "
           f"densest and fiberglass spout highest-friction: {faucet_ok}")
    assert ok


def _clock_argmax_part(fragility, seed, cfg):
    mesh = get_fixture("clock")
    # heavy high-friction base; only its fragility (and hence its force cap) changes
    base = Material("stone", 8000.0, 0.9, fragility)
    body = material_lookup()["carbon_fiber"]
    assign = [PartAssignment(0, base, 1.0), PartAssignment(1, body, 0.7)]
    _, rec = generate_instance(mesh, "clock", seed, cfg, assignments=assign)
    return mesh.part_names[int(rec.part_ids[int(np.argmax(rec.prob))])]


def test_criterion_11_clock_contrast():
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    cfg["affordance"]["quality_weighting"] = True
    tough, fragile = _clock_argmax_part("tough", 0, cfg), _clock_argmax_part("fragile", 0, cfg)
    flips = sum(_clock_argmax_part("tough", s, cfg) != _clock_argmax_part("fragile", s, cfg) for s in range(10))
    ok = tough != fragile
    report(11, "clock base fragility contrast", ok,
           f"seed 0 argmax: tough base -> {tough}, fragile base -> {fragile} (need different parts); "
           f"seeds 0-9 differ in {flips}/10")
    assert ok
