#!/usr/bin/env python3
"""Smoke test for the psomdp_py extension module.

Build the extension first:

    cargo build -p psomdp-py --release --features extension-module

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_extension():
    candidates = [
        ROOT / "target" / "release" / "libpsomdp_py.so",
        ROOT / "target" / "debug" / "libpsomdp_py.so",
        ROOT / "target" / "release" / "libpsomdp_py.dylib",
        ROOT / "target" / "debug" / "libpsomdp_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(
            "extension not built; run: "
            "cargo build -p psomdp-py --release --features extension-module"
        )
    stage = Path(tempfile.mkdtemp(prefix="psomdp_py_"))
    suffix = ".so" if built.suffix == ".so" else ".so"  # CPython loads .so on mac too
    shutil.copy2(built, stage / f"psomdp_py{suffix}")
    sys.path.insert(0, str(stage))
    import psomdp_py

    return psomdp_py


def approx_le(a, b, tol=1e-8):
    return a <= b + tol


def main():
    m = import_extension()

    # Build, solve both ways, and compare.
    model = m.Model.builtin("benchmark_4x7", k=2)
    assert model.num_states == 26, model.num_states
    assert model.checkin_period == 2
    naive = m.solve(model, method="naive")
    bnb = m.solve(model, method="bnb")
    worst = max(abs(a - b) for a, b in zip(naive.values, bnb.values))
    assert worst < 1e-6, f"naive and bnb disagree by {worst}"
    assert bnb.pruned_fraction > 0.0
    print(f"solve: ok (max |naive - bnb| = {worst:.2e}, "
          f"pruned {100 * bnb.pruned_fraction:.1f}%)")

    # Bounds sandwich the exact values.
    omni = m.omniscient(model)
    upper = m.upper_bound(model, 1)
    lower = m.lower_bound(model, 1, suffix="nop")
    for s, v in enumerate(naive.values):
        assert approx_le(lower[s], v) and approx_le(v, upper[s]), s
        assert abs(upper[s] - omni[s]) < 1e-9
    print("bounds: ok (lower <= exact <= upper, ell=1 matches omniscient)")

    (ok, offsets) = m.composable([2], 4)
    assert ok and offsets == [0, 2]
    (ok, _) = m.composable([3], 4)
    assert not ok
    print("composable: ok")

    # Round-trip through the JSON model format.
    clone = m.Model.from_json(model.to_json())
    assert clone.content_hash() == model.content_hash()
    print("json round-trip: ok")

    # Grid spec construction.
    spec = {
        "width": 2, "height": 1, "obstacles": [], "terminals": [[0, 1, 1.0]],
        "slip_stay": 0.0, "slip_lateral": 0.0, "step_reward": 0.0,
        "gamma": 0.9, "checkin_period": 1, "include_nop": False,
    }
    tiny = m.Model.gridworld(json.dumps(spec))
    sol = m.solve(tiny)
    assert abs(sol.values[0] - 1.0) < 1e-9
    print("gridworld: ok")

    # The corridor counterexample: some cell is worth more under the less
    # frequent schedule.
    v2 = m.solve(m.Model.counterexample(2)).values
    v3 = m.solve(m.Model.counterexample(3)).values
    best = max(b - a for a, b in zip(v2, v3))
    assert best > 1e-6, best
    print(f"counterexample: ok (max gain {best:.6f})")

    # Simulation agrees with the solved start value.
    policy = naive.policy
    mean, se = m.simulate(model, policy, start=0, episodes=4000,
                          horizon_periods=160, seed=42)
    assert abs(mean - naive.values[0]) <= 3.5 * max(se, 1e-6), (mean, se)
    exact = m.policy_value(model, policy, start=0, horizon_periods=160)
    assert abs(exact - naive.values[0]) < 1e-6
    print(f"simulate: ok (mean {mean:.4f} +- {se:.4f}, exact {exact:.4f})")

    print("all smoke tests passed")


if __name__ == "__main__":
    main()
