#!/usr/bin/env python3
"""Smoke test for the loyalty_lab_py extension module.

Builds nothing itself: run `cargo build -p loyalty-lab-py` (or --release)
first, then `python3 python/smoke.py`. The script locates the cdylib in
the cargo target directory, links it into a temp dir under the importable
module name, and exercises the bound surface.
"""

import json
import math
import os
import shutil
import sys
import tempfile

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    candidates = [
        os.path.join(REPO, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libloyalty_lab_py.so", "loyalty_lab_py.dll", "libloyalty_lab_py.dylib")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p loyalty-lab-py")
    tmp = tempfile.mkdtemp(prefix="loyalty-lab-smoke-")
    shutil.copy(built, os.path.join(tmp, "loyalty_lab_py.so"))
    sys.path.insert(0, tmp)
    import loyalty_lab_py

    return loyalty_lab_py


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    lab = load_module()
    checks = 0

    # Closed-form bounds.
    assert approx(lab.pof_upper_bound(2), 1.5)
    assert approx(lab.pof_upper_bound(1), 1.0)
    assert lab.pof_upper_bound(50) <= 1.0 + math.log(2.0) + 1e-12
    assert approx(lab.tmix_upper_bound(2, 0.25, 0.5), 36.0)
    checks += 4

    # Purchase probabilities: clamped exponential, positive-part linear.
    assert approx(lab.purchase_prob("exp", 0.25, 1.5, -1.5, 0), 1.0)
    assert approx(lab.purchase_prob("linear", 0.5, 0.0, -0.25, 1), 0.5)
    assert approx(lab.purchase_prob("none", 0.3, 0.0, 0.0, 17), 0.3)
    checks += 3

    # The tight instance: PoF exactly 3/2, indifference at the optimum.
    tight = lab.Instance.tight()
    assert approx(tight.pof(), 1.5, 1e-12)
    n_star, value = tight.optimal_threshold()
    assert n_star is None and approx(value, 0.5, 1e-12)
    goals, total = tight.personalized()
    assert goals == [1, None] and approx(total, 0.75, 1e-12)
    checks += 3

    # JSON round trip.
    again = lab.Instance.from_json(tight.to_json())
    assert approx(again.pof(), 1.5, 1e-12)
    checks += 1

    # Lower-bound pair gap at delta = 1/2 equals 1/6.
    first, _second = lab.lower_bound_pair(0.5)
    gap = lab.rev_gap_closed_form(0.5, "first")
    assert approx(gap, 1.0 / 6.0, 1e-12)
    assert first.k == 1 and first.n_max == 2
    checks += 2

    # Simulation: deterministic under a seed, near the closed form.
    inst = lab.Instance.two_type(7)
    r5 = inst.mixture_revenue(5)
    rate_a = inst.simulate(5, 2, 20000, 123)
    rate_b = inst.simulate(5, 2, 20000, 123)
    assert rate_a == rate_b
    assert abs(rate_a - r5) < 0.05
    checks += 2

    # Fair-Greedy never raises the goal.
    study = lab.Instance.regret_study()
    row = json.loads(study.learn("fair", 2000, 2, 0))
    assert row["policy"] == "fair" and row["n_increases"] == 0
    report = json.loads(study.validate())
    assert report["mu_max"] == 1.0  # the clamp binds on this instance
    checks += 2

    print(f"smoke: PASS ({checks} checks)")


if __name__ == "__main__":
    main()
