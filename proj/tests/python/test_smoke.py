import numpy as np
import pytest

import chpd


@pytest.fixture(scope="module")
def small():
    return chpd.reference(horizon=6, step_seconds=3600.0)


def test_dimensions(small):
    d = small.dims
    assert d["n_x"] == 2 and d["n_u"] == 4
    assert small.A.shape == (2, 2)
    assert len(small.names["y"]) == d["n_y"]


def test_gamma_endpoints():
    v = np.array([3.0, -1.0, 2.0])
    assert chpd.gamma(v, 0.0) == 0.0
    assert chpd.gamma(v, 3.0) == pytest.approx(6.0)
    assert chpd.gamma(v, 1.5) == pytest.approx(4.0)


def test_dispatch_costs_order(small):
    do = small.dispatch("do")
    box = small.dispatch("box")
    assert do["status"] == box["status"] == "optimal"
    assert box["objective"] >= do["objective"] - 1e-9
    assert do["variables"] == box["variables"]
    assert box["kkt_ok"]


def test_validate_box_is_robust(small):
    m = chpd.validate(small, mode="box", samples=200, seed=3)
    assert m["violation_rate"] == 0.0
    assert m["J_min"] <= m["J_exp"] <= m["J_max"]


def test_budget_needs_gamma(small):
    with pytest.raises(chpd.ChpdError):
        small.dispatch("budget")
