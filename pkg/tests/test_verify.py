import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geomflow.calculus import Fourier
from geomflow.geometry import ChartPoint
from geomflow.stochastic import SimConfig
from geomflow.verify import (IdentityCheck, TOLERANCES, Verdict, check_b5_limit, check_hd_limit,
                             check_integral, check_pointwise, check_semigroup, classification_checks,
                             classify, geometry_stats, self_test)

X_S2 = ChartPoint([0.3, 0.2], [1.0])


def by_id(checks):
    out = {}
    for c in checks:
        out.setdefault(c.id, []).append(c)
    return out


def worst(checks, cid):
    return max(abs(c.residual) for c in checks if c.id == cid)


def test_identity_check_json():
    c = IdentityCheck("A2", np.ones(2), 1.0, 1e-9, 1e-4, passed=True, suite="A2")
    d = c.to_json()
    assert d["pass"] is True and d["lhs"] == [1.0, 1.0]
    json.dumps(d, allow_nan=False)
    e = IdentityCheck("A1", None, None, float("nan"), 3.0, True)
    assert e.to_json()["residual"] == "nan"


def test_self_test_passes():
    checks = self_test()
    assert len(checks) == 3 and all(c.passed for c in checks)


def test_pointwise_sphere(zoo):
    checks = check_pointwise(zoo["S2"], ("A2", "B2", "C3", "C4", "HD", "Lemma62", "A4"),
                             n_points=6, n_functions=4, n_probes=4)
    assert all(c.passed for c in checks), [(c.id, c.residual) for c in checks if not c.passed]
    assert worst(checks, "A2") <= 1e-4


def test_pointwise_torus_c4(zoo):
    checks = check_pointwise(zoo["T2"], ("C4",), n_points=6, n_probes=4)
    assert worst(checks, "C4") <= 1e-6


def test_a3_sphere(zoo):
    checks = check_pointwise(zoo["S2"], ("A3",))
    assert all(c.passed for c in checks)


def test_a2_fails_on_product(zoo):
    checks = check_pointwise(zoo["S2xS2"], ("A2", "B2", "C4"), n_points=4, n_functions=3,
                             n_probes=3, k=1.0, K=1.0)
    assert worst(checks, "A2") > 10 * TOLERANCES["A2"]
    assert worst(checks, "B2") <= TOLERANCES["B2"]
    assert worst(checks, "C4") <= TOLERANCES["C4"]


def test_integral_sphere(zoo):
    checks = check_integral(zoo["S2"], n_functions=10)
    assert all(c.passed for c in checks)
    assert worst(checks, "B3") <= 1e-6


def test_integral_noncompact_rejected(zoo):
    with pytest.raises(Exception):
        check_integral(zoo["H2"])


def test_integral_product_bounds(zoo):
    checks = check_integral(zoo["S2xS2(2)"], suite=("B3", "D-bounds"), n_functions=30)
    b = by_id(checks)
    assert all(c.passed for c in b["D-bounds"])
    assert worst(checks, "B3") > 10 * TOLERANCES["B3"]


def test_geometry_stats(zoo):
    s = geometry_stats(zoo["S2xS2(2)"])
    assert s["ric_min"] == pytest.approx(0.25) and s["ric_max"] == pytest.approx(1.0)
    assert s["sect_min"] == pytest.approx(0.0, abs=1e-9) and s["sect_max"] == pytest.approx(1.0)
    assert s["nabla_ric_max"] < 1e-9
    t = geometry_stats(zoo["T2"])
    assert t["r_norm"] == 0 and t["ric_spread"] == 0


def test_semigroup_sphere(zoo):
    m = zoo["S2"]
    cfg = SimConfig(0.5, n_paths=4000, n_steps=200, seed=0)
    checks = check_semigroup(m, X_S2, ("A1", "B1", "C2", "HS1", "HS2", "T42ineq", "T43ineq",
                                       "T71ineq", "LEO2"), cfg=cfg)
    ids = {c.id for c in checks}
    assert {"A1", "B1", "C2", "HS1", "HS2", "T42-2", "T42-3", "T42-4", "T43-2", "T71-3-lower",
            "T71-3-upper", "LEO2"} <= ids
    bad = [(c.id, c.z_score) for c in checks if not c.passed]
    assert not bad


def test_semigroup_torus_flat(zoo):
    m = zoo["T2"]
    f = Fourier([1.0, 1.0])
    cfg = SimConfig(0.5, n_paths=4000, n_steps=20, seed=4)
    checks = check_semigroup(m, ChartPoint([0.5, 1.0]), ("A1", "HS1", "T42ineq", "LEO2"), f=f,
                             cfg=cfg, k=0.0)
    assert all(c.passed for c in checks)
    hs1 = by_id(checks)["HS1"][0]
    # flat case: no exponential factor on the right-hand side
    assert "||R||=0" in hs1.note


def test_b1_needs_einstein(zoo):
    m = zoo["S2xS2(2)"]
    cfg = SimConfig(0.2, n_paths=400, n_steps=20, seed=5)
    checks = check_semigroup(m, None, ("B1",), cfg=cfg)
    assert checks[0].note == "not Einstein" and not checks[0].passed


def test_b5_limit_sphere(zoo):
    m = zoo["S2"]
    c = check_b5_limit(m, X_S2, cfg=SimConfig(1.0, n_paths=4000, n_steps=100, seed=6), K=1.0)
    assert c.passed
    assert c.lhs[-1] < c.lhs[0]


def test_hd_limit_sphere(zoo):
    c = check_hd_limit(zoo["S2"], X_S2, cfg=SimConfig(0.2, n_paths=20000, n_steps=100, seed=0))
    assert c.passed, c.z_score


@pytest.mark.parametrize("name,expected", [
    ("S2", ("yes(1)", "yes(1)", "yes")),
    ("T2", ("yes(0)", "yes(0)", "yes")),
    ("H2", ("yes(-1)", "yes(-1)", "yes")),
])
def test_classify_constant_curvature(zoo, name, expected):
    m = zoo[name]
    st_ = geometry_stats(m)
    v = classify(m, classification_checks(m, stats=st_), st_)
    assert v.triple() == expected
    assert v.chain_ok()


def test_classify_deterministic(zoo):
    m = zoo["S2"]
    st_ = geometry_stats(m)
    checks = classification_checks(m, stats=st_)
    assert classify(m, checks, st_).to_json() == classify(m, checks, st_).to_json()


_check = st.builds(
    lambda cid, res, ok: IdentityCheck(cid, None, None, res, 1e-4, passed=ok),
    st.sampled_from(["A2", "B3", "B2", "C4"]), st.floats(0, 1), st.booleans())


@given(st.lists(_check, max_size=8), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_classify_chain_property(checks, sect, ric, nab):
    stats = {"sect_spread": sect, "ric_spread": ric, "nabla_ric_max": nab, "k": 1.0, "K": 1.0}
    v = classify(None, checks, stats)
    assert v.chain_ok()
    for field in (v.constant_curvature, v.einstein, v.ricci_parallel):
        assert field in ("yes", "no", "undetermined")


def test_classify_conflict_is_undetermined():
    stats = {"sect_spread": 0.0, "ric_spread": 0.0, "nabla_ric_max": 0.5, "k": 1.0, "K": 1.0}
    checks = [IdentityCheck("A2", None, None, 0, 1e-4, passed=True),
              IdentityCheck("B3", None, None, 0, 1e-4, passed=True),
              IdentityCheck("C4", None, None, 0.5, 1e-4, passed=False)]
    v = classify(None, checks, stats)
    assert (v.constant_curvature, v.einstein, v.ricci_parallel) == ("undetermined", "undetermined", "no")


def test_verdict_chain_helper():
    assert not Verdict("yes", "no", "yes").chain_ok()
    assert Verdict("no", "yes", "yes").chain_ok()
