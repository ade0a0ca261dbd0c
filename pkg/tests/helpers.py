"""Small helpers shared by several test modules."""
import copy

import numpy as np

from graspkit.config import DEFAULT_CONFIG


def small_config(per_object=2, seed=0, **dataset):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    cfg["seed"] = seed
    cfg["dataset"]["instances_per_object"] = per_object
    cfg["dataset"].update(dataset)
    return cfg


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


FROZEN_SUITE_SEED = 20261018


def force_closure_suite(seed=FROZEN_SUITE_SEED, n=500):
    """Seeded two-contact configurations on the desk fixtures.

    Each case is a random line through the vertical axis of the object's
    centre of mass; a random (entering, exiting) segment of that line gives the
    two contacts.  Friction is U[0.1, 0.9] and caps are drawn from {20, 100,
    1000} N per contact.  Returns ``[(candidate, mass_props, mus, caps)]``.
    """
    from graspkit.fixtures import DESK_CORPUS, get_fixture
    from graspkit.grasp import GraspCandidate, _contact, _segments
    from graspkit.materials import assign_materials, mass_properties

    rng = np.random.default_rng(seed)
    meshes = [get_fixture(name) for name in DESK_CORPUS]
    cases = []
    while len(cases) < n:
        k = len(cases)
        mesh = meshes[k % len(meshes)]
        mp = mass_properties(mesh, assign_materials(mesh, k + seed * 1000))
        lo, hi = mesh.bounds[:, 2]
        p = np.array([mp.com[0], mp.com[1], rng.uniform(lo, hi)])
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        origin = p - d
        segs = _segments(mesh, origin, d)
        if not segs:
            continue
        a, b = segs[rng.integers(len(segs))]
        cand = GraspCandidate(_contact(mesh, origin, d, a), _contact(mesh, origin, d, b))
        cases.append((cand, mp, rng.uniform(0.1, 0.9, 2), rng.choice([20.0, 100.0, 1000.0], 2)))
    return cases
