"""Smoke test for the netdiff_py extension module.

Build and install first, for example:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/netdiff_py-*.whl
"""

import math
import os
import tempfile

import netdiff_py as nd


def main():
    p3 = nd.Graph(3, [(0, 1), (1, 2)])
    assert p3.n == 3 and p3.edge_count == 2
    assert p3.diameter() == 2
    assert abs(p3.spectral_radius() - math.sqrt(2)) < 1e-8
    assert nd.simulate(p3, 1.0, [0], 2) == [1, 2, 3]

    g, coords = nd.lattice_random(120, 2, 10, seed=3)
    assert g.n == 120 and len(coords) == 120 and len(coords[0]) == 2
    stats = g.stats()
    assert stats["component_count"] == 1

    ratio = nd.forecast_ratio(q=2, n=300, n_side=12, reps=50, seed=2)
    assert ratio["ratio"]["mean"][0] == 1.0
    assert all(r <= 1.0 + 1e-12 for r in ratio["ratio"]["mean"])

    flat = nd.forecast_ratio(q=2, n=300, n_side=12, reps=20, seed=2, beta_divisor=1e12)
    assert min(flat["ratio"]["mean"]) > 0.99

    x = nd.exposure(p3, [1.0, 0.0, 0.0], 0.5, 2)
    assert [round(v, 12) for v in x] == [0.25, 0.5, 0.25]

    traj = nd.sir_trajectory(0.5, 0.25, 1000.0, 1.0, 1)
    assert abs(traj["s"][1] - 998.5005) < 1e-9

    bs = nd.beta_sampling(1000, 1e-4, 40, 2000, seed=4)
    assert abs(bs["p_no_links"] - bs["p_no_links_analytic"]) < 4 * bs["p_no_links_stderr"]

    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "run")
        code = nd.run_cli(["gen-graph", "--kind", "regular", "--n", "50", "--out", out])
        assert code == 0 and os.path.exists(os.path.join(out, "graph.edges"))
        assert nd.Graph.read(os.path.join(out, "graph.edges")).edge_count == 75
        assert nd.run_cli(["beta-sample", "--m", "1"]) == 1
        assert nd.run_cli(["no-such-command"]) == 2

    try:
        nd.Graph(2, [(0, 0)])
    except ValueError:
        pass
    else:
        raise AssertionError("self-loop accepted")

    print("netdiff_py smoke test passed")


if __name__ == "__main__":
    main()
