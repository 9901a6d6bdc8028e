"""Smoke test for the twopart_py extension module."""

import csv
import io
import math

import twopart_py as tp


def main():
    assert tp.elias_encode(1) == "1"
    assert tp.elias_encode(5) == "00101"
    bits = "".join(tp.elias_encode(i) for i in range(1, 200))
    assert tp.elias_decode_all(bits) == list(range(1, 200))

    d = tp.variational_exact([0.0, 1.0], [1.0, 1.0])
    assert abs(d - 2.0 * math.erf(0.5 / math.sqrt(2.0))) < 1e-6, d

    fam = tp.Family.gaussian_iid()
    assert fam.vc_bound(1) > 60.0
    est, se = tp.variational_estimate(fam, [0.0, 1.0], [1.0, 1.0], 1, 20000, 3)
    assert abs(est - d) < 4 * se + 1e-3, (est, se)

    coder = tp.Coder(fam, 4, 0.3, seed=5, candidate_count=8, anchors=[[0.0, 1.0]])
    decoder = tp.Coder(fam, 4, 0.3, seed=5, candidate_count=8, anchors=[[0.0, 1.0]])
    path = fam.sample([0.0, 1.0], coder.history_length + 4, 11)
    bits, index, theta_hat, xhat = coder.encode(path[:-4], path[-4:])
    back, theta_back, index_back = decoder.decode(bits)
    assert back == xhat and theta_back == theta_hat and index_back == index
    try:
        decoder.decode(bits[:-1])
    except ValueError:
        pass
    else:
        raise AssertionError("truncated stream accepted")

    ar = tp.Family.gaussian_ar(1, 0.6)
    hmm = tp.Family.hmm(0.05, [([-1.0], 0.8), ([1.5], 1.0)], 0.7)
    for f, theta in [(ar, [-0.5]), (hmm, [0.7, 0.3, 0.4, 0.6])]:
        c = tp.Coder(f, 3, 0.3, seed=2, candidate_count=6, l_cap=3)
        x = f.sample(theta, c.history_length + 3, 4)
        b, _, _, r = c.encode(x[:-3], x[-3:])
        assert c.decode(b)[0] == r

    ok, report = tp.run_invariants()
    assert ok, report
    bad, _ = tp.run_invariants(inject_corruption=True)
    assert not bad

    config = """
schema_version = 1
[family]
kind = "gaussian-iid"
theta0 = [0.0, 1.0]
[scheme]
lambda = 0.3
candidate_count = 6
anchor_truth = true
mde_mc_budget = 200
distance_mc_budget = 100
training_blocks = 200
[experiment]
n_grid = [2, 4]
trials = 2
eval_blocks = 200
oracle_training_blocks = 300
identify_mc_budget = 200
"""
    text = tp.run_experiment(config)
    rows = list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))
    assert sum(r["kind"] == "trial" for r in rows) == 4
    print("smoke test ok")


if __name__ == "__main__":
    main()
