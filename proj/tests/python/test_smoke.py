import math

import numpy as np
import pytest

import heywood


def test_normal_functions():
    assert heywood.std_normal_cdf(0.0) == pytest.approx(0.5, abs=1e-15)
    assert heywood.std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)
    # orthant probability at rho = 0.5 is 1/4 + asin(0.5) / (2 pi) = 1/3
    assert heywood.bivariate_normal_cdf(0.0, 0.0, 0.5) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_quadrature_integrates_second_moment():
    nodes, weights = heywood.gauss_hermite(21)
    assert sum(weights) == pytest.approx(1.0, abs=1e-12)
    assert sum(w * x * x for x, w in zip(nodes, weights)) == pytest.approx(1.0, abs=1e-12)


def test_conversions_round_trip():
    for lam in (-3.0, -0.4, 0.0, 0.7, 2.5):
        assert heywood.theta_to_delta(heywood.delta_to_theta(heywood.theta_to_delta(lam))) == pytest.approx(
            heywood.theta_to_delta(lam), abs=1e-12)
    assert heywood.theta_to_delta(1.0) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-15)


def test_simulate_is_reproducible():
    a = heywood.simulate(n=200, seed=11, replication=3)
    b = heywood.simulate(n=200, seed=11, replication=3)
    assert a.shape == (200, 4)
    assert a.dtype == np.uint8
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0, 1}
    assert not np.array_equal(a, heywood.simulate(n=200, seed=11, replication=4))


def test_tetrachoric_closed_form():
    table = [(0, 0)] * 40 + [(0, 1)] * 10 + [(1, 0)] * 10 + [(1, 1)] * 40
    data = np.array(table, dtype=np.uint8)
    s = heywood.tetrachoric(data)
    assert s["rho"][1, 0] == pytest.approx(math.cos(math.pi / 5.0), abs=1e-6)
    assert s["acov"] is None


def test_factor_and_irt_fits():
    data = heywood.simulate(n=200, seed=20210101, replication=0)
    fit = heywood.fit_one_factor(data, "wlsmv", "delta")
    assert len(fit["loadings"]) == 4
    assert fit["diagnosis"] in {"proper", "heywood", "nonconverged_extreme", "nonconverged_other"}
    irt = heywood.fit_2pl(data)
    assert irt["converged"]
    assert irt["loglik"] < 0.0
    assert len(irt["discriminations"]) == 4


def test_errors_carry_a_kind():
    data = np.zeros((50, 3), dtype=np.uint8)
    data[::2, 0] = 1
    data[1::3, 2] = 1
    with pytest.raises(heywood.HeywoodError) as info:
        heywood.tetrachoric(data)
    assert info.value.kind == "degenerate_margin"
    with pytest.raises(heywood.HeywoodError):
        heywood.fit_one_factor(heywood.simulate(), "gls", "delta")


def test_small_study():
    report = heywood.run_study(replications=3, seed=5, threads=1)
    assert isinstance(report, dict)
    assert report == heywood.run_study(replications=3, seed=5, threads=2)
