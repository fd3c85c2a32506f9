"""Smoke test for the volterra_py extension.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import math

import volterra_py as vp


def main():
    assert abs(vp.mittag_leffler(1.0, 1.0, -2.0) - math.exp(-2.0)) < 1e-15
    # E_{2,1}(-x^2) = cos x lies outside the supported range, but E_{1/2}(-x)
    # = exp(x^2) erfc(x) does not.
    x = 1.3
    expected = math.exp(x * x) * math.erfc(x)
    assert abs(vp.mittag_leffler(0.5, 1.0, -x) - expected) < 1e-14 * expected

    try:
        vp.mittag_leffler(2.5, 1.0, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("a = 2.5 was accepted")

    s, w = vp.resolvent_table(1.5, [math.pi**2, 4 * math.pi**2], 32)
    assert len(s) == 2 and len(s[0]) == 33
    assert s[0][0] == 1.0 and w[0][0] == 0.0
    assert all(abs(v) <= 1.0 + 1e-12 for v in s[1])

    omega = vp.cq_weights(0.5, 1 / 64, 16)
    assert abs(omega[0] - (1 / 64) ** 0.5) < 1e-15
    assert all(a > b for a, b in zip(omega, omega[1:]))

    traj = vp.deterministic_run(1.75, [4 * math.pi**2], [1.0], 64)
    assert len(traj) == 65 and traj[0] == [1.0]

    report = vp.noise_regularity(1.2, [(k * math.pi) ** 2 for k in range(1, 65)], [1.0] * 64)
    assert 0 < report["beta_estimate"] <= 1 / 1.2

    exp = vp.Experiment(
        """
[instance]
rho = 1.75
modes = [2]
mus = [1.0]
nonlinearity = { kind = "sin" }
[study]
methods = ["mlei"]
dt_levels = [16, 32, 64, 128]
ref_level = 1024
n_paths = 40
master_seed = 3
"""
    )
    result = exp.run()
    rows = result.errors()
    assert [r[1] for r in rows] == [16, 32, 64, 128]
    slope, lo, hi = result.slopes()["mlei"]
    assert 0.7 < slope < 1.3, slope
    assert len(result.errors("sup_over_grid")) == 4
    print(exp, result)

    try:
        vp.Experiment("[instance]\nrho = 3.0\n")
    except ValueError:
        pass
    else:
        raise AssertionError("bad config was accepted")

    print("ok")


if __name__ == "__main__":
    main()
