"""Smoke tests for the python extension. Run with PYTHONPATH pointing at the
build tree's python/ directory (ctest does this automatically)."""

import numpy as np

import xreid


def test_cost_matrix_range():
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([[1.0, 0.0], [-1.0, 0.0]])
    c = xreid.cost_matrix(a, b)
    assert c.shape == (2, 2)
    assert abs(c[0, 0]) < 1e-12
    assert abs(c[0, 1] - 2.0) < 1e-12
    assert c.min() >= 0.0 and c.max() <= 2.0


def test_sinkhorn_marginals_and_oracle():
    rng = np.random.default_rng(3)
    f = rng.normal(size=(3, 5))
    g = rng.normal(size=(3, 5))
    c = xreid.cost_matrix(f, g)
    u = xreid.uniform_marginal(3)
    plan, iters = xreid.sinkhorn(c, u, u, reg=0.005, max_iter=100000,
                                 marginal_tol=1e-7)
    assert iters > 0
    assert plan.min() >= 0.0
    assert abs(plan.sum() - 1.0) < 1e-9
    assert np.abs(plan.sum(axis=1) - u).max() < 1e-6
    assert np.abs(plan.sum(axis=0) - u).max() < 1e-6

    oracle_plan, oracle_dist = xreid.exact_ot_oracle(c, u, u)
    dist = xreid.wasserstein_distance(plan, c)
    assert abs(dist - oracle_dist) / max(oracle_dist, 1e-6) < 0.02


def test_got_self_distance():
    rng = np.random.default_rng(11)
    v = rng.normal(size=(5, 8))
    plan, dist, node_cost, edge_cost = xreid.got_distance(
        v, v, phi=0.5, reg=0.002, max_iter=100000, marginal_tol=1e-8)
    assert dist <= 1e-6
    assert node_cost >= 0.0 and edge_cost >= 0.0


def test_adjacency_shape():
    adj = xreid.build_adjacency(13, xreid.default_skeleton())
    assert adj.shape == (14, 14)
    assert (adj == adj.T).all()
    assert (np.diag(adj) == 1).all()
    assert (adj[13] == 1).all()


def test_retrieval_metrics():
    gallery = np.eye(3)
    queries = np.array([[1.0, 0.05, 0.0], [0.0, 1.0, 0.05]])
    cmc, mean_ap = xreid.evaluate_retrieval(queries, [0, 1], gallery,
                                            [0, 1, 2], 3)
    assert cmc[0] == 1.0 and cmc[-1] == 1.0
    assert mean_ap == 1.0


def test_synthesize_and_roundtrip(tmp_path="/tmp"):
    nodes, ids, mods = xreid.synthesize(num_identities=3,
                                        samples_per_modality=2, dim=6,
                                        parts=4, seed=9)
    assert len(nodes) == 12
    assert nodes[0].shape == (5, 6)
    assert set(mods) == {0, 1}

    path = f"{tmp_path}/xreid_smoke.xfea"
    xreid.write_features(path, nodes, ids, mods)
    nodes2, ids2, mods2 = xreid.read_features(path)
    assert ids2 == ids and mods2 == mods
    for a, b in zip(nodes, nodes2):
        assert (a == b).all()


def test_error_type():
    try:
        xreid.cost_matrix(np.zeros((2, 3)), np.ones((2, 3)))
    except xreid.XreidError as e:
        assert "ZeroNormRow" in str(e)
    else:
        raise AssertionError("expected XreidError")


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok: {test.__name__}")
    print(f"{len(tests)} smoke tests passed")


if __name__ == "__main__":
    main()
