"""Smoke test for the sectionstack_py extension module.

Build and install first, e.g.
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/sectionstack_py-*.whl
"""

import math
import pathlib
import tempfile

import sectionstack_py as ss

ROOT = pathlib.Path(__file__).resolve().parents[1]


def check_conditional():
    p = ss.MrfParams([0.5, -0.3, 0.1], [[0.2, -0.1, 0.4], [-0.1, 0.3, -0.5], [0.4, -0.5, 0.0]])
    v = ss.LabelVolume([2, 1, 1], 3, [0, 2])
    got = v.conditional([0, 0, 0], p)
    e = [math.exp(0.9), math.exp(-0.8), math.exp(0.1)]
    want = [x / sum(e) for x in e]
    assert all(abs(a - b) < 1e-12 for a, b in zip(got, want)), (got, want)


def check_recovery():
    d, o = 0.04, -0.02
    truth = ss.MrfParams([0.3, -0.2, 0.0], [[d, o, o], [o, d, o], [o, o, d]])
    vol = ss.LabelVolume.simulate([16, 16, 16], truth, 10, seed=3)
    assert vol.dims == [16, 16, 16] and len(vol.labels) == 16**3
    again = ss.LabelVolume.simulate([16, 16, 16], truth, 10, seed=3)
    assert again.labels == vol.labels
    fit = ss.fit_mple(vol, "fullvolume")
    err = ss.recovery_error(fit["params"], truth)
    assert fit["budget"] == 16**3
    assert err["mae_b"] < 0.1, err


def check_assignment():
    cost = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]]
    assert ss.linear_assignment(cost) == [1, 0, 2]


def check_reconstruct():
    # one sphere of radius 6 centred at z = 7, sectioned every 4 um
    cells = []
    for k, z in enumerate([4.0, 8.0, 12.0]):
        area = math.pi * (36.0 - (z - 7.0) ** 2)
        cells.append((f"c{k}", 10.0, 10.0, z, area, "T", k))
    pts = ss.reconstruct(cells, delta_z=4.0)
    assert len(pts) == 1 and pts[0]["provenance"] == "SC"
    assert abs(pts[0]["z"] - 7.0) < 1e-9, pts


def check_stats():
    cells = [(f"a{i}", float(i), 0.0, 0.0, 1.0, "A" if i % 2 else "B", 0) for i in range(40)]
    z = ss.neighborhood_enrichment(cells, "A", 1.5, n_permutations=200, seed=1)
    assert set(z) == {"A", "B"}
    p = ss.detectability(cells, "A", 1, 20, trials=10)
    assert p == 1.0


def check_pipeline():
    with tempfile.TemporaryDirectory() as out:
        cfg = str(ROOT / "configs" / "demo.toml")
        written = ss.run_pipeline("simulate", cfg, out)
        assert any(w.endswith("volumes.json") for w in written)
        try:
            ss.run_pipeline("estimate", cfg, out)
        except ValueError:
            pass
        else:
            raise AssertionError("estimate without observations should fail")


if __name__ == "__main__":
    for check in [check_conditional, check_recovery, check_assignment, check_reconstruct, check_stats, check_pipeline]:
        check()
        print(f"ok  {check.__name__}")
