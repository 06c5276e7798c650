import math

import numpy as np
import pytest

import heatprobe as hp


def test_kernel_mass_and_symmetry():
    assert abs(hp.kernel_mass(0.1, 0.3) - 1.0) < 1e-8
    assert hp.green(0.05, 0.2, 0.7) == hp.green(0.05, 0.7, 0.2)
    assert hp.green(0.05, 0.2, 0.7, boundary="dirichlet") > 0.0
    with pytest.raises(ValueError):
        hp.green(0.1, 0.5, 0.5, boundary="periodic")


def test_simulate_shape_and_seed():
    a = hp.simulate(nx=16, T=0.05, dim=2, seed=5)
    b = hp.simulate(nx=16, T=0.05, dim=2, seed=5)
    c = hp.simulate(nx=16, T=0.05, dim=2, seed=6)
    assert a.shape[1:] == (17, 2)
    assert np.all(a[0] == 0.0)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_linear_variance_matches_kernel_integral():
    # sample variance over paths against the quadrature value
    finals = np.array([hp.simulate(nx=16, T=0.1, model="linear-test", seed=1, path=k)[-1, 8, 0] for k in range(400)])
    oracle = hp.variance_integral(0.1, 0.5)
    se = oracle * math.sqrt(2.0 / len(finals))
    assert abs(finals.var() - oracle) < 4 * se


def test_potential_operations():
    n = 256
    pts = ((np.arange(n) + 0.5) / n).reshape(-1, 1)
    assert hp.capacity(pts, beta=-1.0, h=1.0 / n)["capacity"] == 1.0
    cap = hp.capacity(pts, beta=0.5, h=1.0 / n)
    assert cap["capacity"] > 0.0 and cap["duality_gap"] <= 1e-6
    assert abs(sum(cap["weights"]) - 1.0) < 1e-12
    cover = hp.hausdorff_upper(pts, beta=1.0, epsilon=1.0 / 32, h=1.0 / n)
    assert 0.9 <= cover["value"] <= 1.1
    assert math.isinf(hp.hausdorff_upper(pts, beta=-0.5, epsilon=0.1, h=1.0 / n)["value"])
    box = hp.box_dimension(pts, [2.0 ** -k for k in range(1, 9)])
    assert abs(box["dimension"] - 1.0) < 0.1


def test_wilson_and_predictions():
    lo, hi = hp.wilson_interval(0, 100)
    assert lo == 0.0 and 0.0 < hi < 0.05
    p = hp.predict("levelset_Lt", 1)
    assert p["dimension"] == 0.5 and p["covered"]


def test_run_config_and_schema_errors():
    assert "sandwich" in hp.kinds()
    out = hp.run({"kind": "capacity", "params": {"mode": "checks", "pairs": 3}})
    verdicts = {c["claim"]: c["verdict"] for c in out["claims"]}
    assert verdicts["capacity.two_atom"] == "pass"
    assert out["tables"]["checks"]["columns"][0] == "check"
    with pytest.raises(ValueError, match="bogus"):
        hp.run({"kind": "capacity", "params": {"bogus": 1}})
    with pytest.raises(ValueError, match="malformed JSON"):
        hp.run('{"kind": ')
