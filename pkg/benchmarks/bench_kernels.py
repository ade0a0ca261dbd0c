"""Compare the compiled and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each benchmark runs the same inputs through every available backend, checks
that the results agree, and reports the best wall time of ``--repeat`` runs.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from graspkit import kernels
from graspkit.fixtures import get_fixture
from graspkit.grasp import GraspCandidate, check_force_closure, grasp_matrix, gravity_task
from graspkit.materials import ContactModel
from graspkit.mesh import SurfaceSample, sample_surface


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_rays(impl, repeat):
    mesh = get_fixture("sphere")
    a, b, c = mesh.corners
    rng = np.random.default_rng(0)
    origins = rng.normal(size=(200, 3))
    dirs = -origins / np.linalg.norm(origins, axis=1, keepdims=True)

    def run():
        return [kernels.ray_triangle_hits(o, d, a, b, c, impl=impl) for o, d in zip(origins, dirs)]

    t, out = _best(run, repeat)
    return t, np.concatenate([h[0] for h in out])


def bench_lp(impl, repeat):
    rng = np.random.default_rng(1)
    cases = []
    for _ in range(60):
        p = rng.normal(scale=0.03, size=(2, 3))
        n = rng.normal(size=(2, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        cand = GraspCandidate(SurfaceSample(p[0], n[0], 0, 0), SurfaceSample(p[1], n[1], 0, 0))
        cases.append((grasp_matrix(cand, np.zeros(3)), n))
    models = (ContactModel(0.5, 100.0, 16), ContactModel(0.5, 100.0, 16))
    task = gravity_task(0.5)

    def run():
        return [check_force_closure(G, task, models, n, impl=impl).feasible for G, n in cases]

    t, out = _best(run, repeat)
    return t, np.array(out)


def bench_mixture(impl, repeat):
    pts = sample_surface(get_fixture("hammer"), 2048, 0).positions
    rng = np.random.default_rng(2)
    centers = pts[rng.integers(0, len(pts), 200)]
    w = rng.random(200)

    def run():
        return kernels.gaussian_mixture(pts, centers, w, 0.01, impl=impl)

    return _best(run, repeat)


BENCHES = {"ray_triangle_hits": bench_rays, "simplex (force closure)": bench_lp,
           "gaussian_mixture": bench_mixture}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this path")
    args = ap.parse_args(argv)
    impls = kernels.backends()
    results = {}
    print(f"{'kernel':<26}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for label, bench in BENCHES.items():
        times, outs = {}, {}
        for name, impl in impls.items():
            times[name], outs[name] = bench(impl, args.repeat)
        ref = outs["python"]
        for name, out in outs.items():
            if not np.allclose(out, ref, rtol=1e-12, atol=1e-12):
                print(f"backend mismatch in {label}: {name}", file=sys.stderr)
                return 1
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<26}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in impls) + f"{speed:>9.1f}x")
        results[label] = {"seconds": times, "speedup": speed}
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
