import numpy as np
import pytest

from geomflow.calculus import Constant, Fourier, Linear, Quadratic, default_family, eigenfunction
from geomflow.calculus.derivatives import local_calculus
from geomflow.estimators import (ConstantTensor, HessianTensor, MetricTensor, est_functional,
                                 est_gradient_bismut, est_gradient_parallel, est_gradient_W,
                                 est_hessian, est_semigroup, est_tensor_semigroup,
                                 gradient_W_samples, bismut_samples, summarize)
from geomflow.geometry import ChartPoint, Hyperbolic, Sphere, parse_manifold
from geomflow.stochastic import SimConfig, simulate

X_S2 = ChartPoint([0.3, 0.2], [1.0])


def s2_data():
    m = Sphere(2)
    f = eigenfunction(m)
    q = local_calculus(m, f, X_S2.coords[None], X_S2.chart[None], 2)
    return m, f, q


def test_constant_semigroup_and_bismut():
    m = Sphere(2)
    cfg = SimConfig(0.5, n_paths=4000, n_steps=50, seed=1)
    r = est_semigroup(m, X_S2, Constant(-1.5), cfg)
    assert r.mean == -1.5 and r.stderr == 0
    b = est_gradient_bismut(m, X_S2, None, Constant(1.0), cfg)
    assert np.all(np.abs(b.z_score(0.0)) <= 3)


def test_torus_sine():
    m = parse_manifold("torus:2")
    x0 = ChartPoint([0.7, 2.0])
    cfg = SimConfig(0.5, n_paths=20000, n_steps=10, seed=2, track_w2=True)
    ens = simulate(m, x0, cfg)
    f = Fourier([1.0, 0.0])
    r = est_semigroup(m, x0, f, cfg, ensemble=ens)
    assert abs(r.z_score(np.exp(-0.25) * np.sin(0.7))) <= 3
    h = est_hessian(m, x0, None, None, f, cfg, ensemble=ens)
    assert abs(h.z_score(-np.exp(-0.25) * np.sin(0.7))[0, 0]) <= 3
    # the other components vanish path by path, up to finite-difference noise
    assert abs(h.mean[0, 1]) <= 1e-8 and abs(h.mean[1, 1]) <= 1e-8


def test_sphere_eigenfunction_derivatives():
    m, f, q = s2_data()
    cfg = SimConfig(0.5, n_paths=20000, n_steps=200, seed=3, track_w2=True)
    ens = simulate(m, X_S2, cfg)
    g = est_gradient_W(m, X_S2, None, f, cfg, ensemble=ens)
    assert np.all(np.abs(g.z_score(np.exp(-0.5) * q["grad"][0])) <= 3)
    h = est_hessian(m, X_S2, None, None, f, cfg, ensemble=ens)
    assert np.all(np.abs(h.z_score(np.exp(-0.5) * q["hess"][0])) <= 3)


def test_sphere_gradient_bismut_vs_damped():
    m, f, _ = s2_data()
    cfg = SimConfig(0.5, n_paths=20000, n_steps=200, seed=4)
    ens = simulate(m, X_S2, cfg)
    diff = gradient_W_samples(ens, f) - bismut_samples(ens, f)
    assert np.all(np.abs(summarize(diff, ens, "diff").z_score(0.0)) <= 3)


def test_einstein_damped_equals_scaled_parallel():
    for m, K in ((Sphere(2), 1.0), (Hyperbolic(2), -1.0)):
        x0 = ChartPoint([0.1, -0.2], np.zeros(m.chart_size) + (1.0 if isinstance(m, Sphere) else 0))
        f = default_family(m).sample(1, 0)[0]
        cfg = SimConfig(0.5, n_paths=500, n_steps=100, seed=5)
        ens = simulate(m, x0, cfg)
        w = est_gradient_W(m, x0, None, f, cfg, ensemble=ens, keep=True).samples
        p = est_gradient_parallel(m, x0, None, f, cfg, ensemble=ens, keep=True).samples
        assert np.abs(w - np.exp(-K * 0.25) * p).max() <= 5 * ens.dt * (1 + np.abs(p).max())


def test_euclidean_exactness():
    m = parse_manifold("euclidean:2")
    x0 = ChartPoint([0.5, -1.0])
    cfg = SimConfig(1.0, n_paths=20000, n_steps=20, seed=6, track_w2=True)
    ens = simulate(m, x0, cfg)
    a = np.array([2.0, -0.5])
    g = est_gradient_W(m, x0, [1.0, 1.0], Linear(a), cfg, ensemble=ens)
    assert g.mean == pytest.approx(1.5, abs=1e-8) and g.stderr < 1e-8
    b = est_gradient_bismut(m, x0, [1.0, 1.0], Linear(a), cfg, ensemble=ens)
    assert abs(b.z_score(1.5)) <= 3
    A = np.array([[2.0, 0.5], [0.5, -1.0]])
    h = est_hessian(m, x0, [1.0, 0.0], [0.0, 1.0], Quadratic(A), cfg, ensemble=ens)
    assert h.mean == pytest.approx(0.5, abs=1e-6) and h.stderr < 1e-6
    T = np.array([[1.0, 2.0], [2.0, 3.0]])
    t = est_tensor_semigroup(m, x0, ConstantTensor(T), cfg, ensemble=ens)
    assert np.array_equal(t.mean, T)


def test_metric_tensor_transported():
    m = parse_manifold("ellipsoid:1:1:2")
    x0 = ChartPoint([0.2, 0.1], [1.0])
    cfg = SimConfig(0.3, n_paths=200, n_steps=30, seed=7)
    r = est_tensor_semigroup(m, x0, MetricTensor(), cfg)
    assert np.abs(r.mean - np.eye(2)).max() <= 1e-12


def test_hessian_tensor_ensemble_reuse():
    m, f, q = s2_data()
    cfg = SimConfig(0.2, n_paths=2000, n_steps=40, seed=8)
    ens = simulate(m, X_S2, cfg)
    a = est_tensor_semigroup(m, X_S2, HessianTensor(f), cfg, ensemble=ens)
    b = est_functional(m, X_S2, f, "lap", cfg, ensemble=ens)
    assert np.trace(a.mean) == pytest.approx(b.mean, abs=1e-10)


def test_hessian_needs_w2():
    m, f, _ = s2_data()
    cfg = SimConfig(0.2, n_paths=10, n_steps=4)
    ens = simulate(m, X_S2, cfg)
    with pytest.raises(ValueError):
        est_hessian(m, X_S2, None, None, f, cfg, ensemble=ens)


def test_antithetic_reduces_bismut_variance():
    m = Sphere(2)
    f = default_family(m).sample(1, 2)[0]
    for anti_seed in (0, 1):
        plain = est_gradient_bismut(m, X_S2, None, f, SimConfig(0.5, n_paths=8000, n_steps=50,
                                                                seed=anti_seed))
        anti = est_gradient_bismut(m, X_S2, None, f, SimConfig(0.5, n_paths=8000, n_steps=50,
                                                               seed=anti_seed, antithetic=True))
        assert np.all((anti.stderr / plain.stderr) ** 2 < 1)
        assert np.all(np.abs(anti.mean - plain.mean) <= 3 * np.hypot(anti.stderr, plain.stderr))


def test_sine_weight_agrees_with_linear():
    m, f, q = s2_data()
    cfg = SimConfig(0.5, n_paths=20000, n_steps=100, seed=9, bismut=("linear", "sine"))
    ens = simulate(m, X_S2, cfg)
    diff = bismut_samples(ens, f, h="sine") - bismut_samples(ens, f, h="linear")
    assert np.all(np.abs(summarize(diff, ens, "diff").z_score(0.0)) <= 3)
    with pytest.raises(ValueError):
        bismut_samples(simulate(m, X_S2, SimConfig(0.1, n_paths=4, n_steps=2)), f, h="sine")


def test_stderr_scaling():
    m, f, _ = s2_data()
    se = []
    for n in (1000, 10000, 100000):
        se.append(est_semigroup(m, X_S2, f, SimConfig(0.5, n_paths=n, n_steps=10, seed=10)).stderr)
    for a, b in zip(se, se[1:]):
        assert a / b == pytest.approx(np.sqrt(10), rel=0.1)


def test_stderr_definition():
    m, f, _ = s2_data()
    r = est_semigroup(m, X_S2, f, SimConfig(0.5, n_paths=500, n_steps=10, seed=11), keep=True)
    assert r.stderr == pytest.approx(r.samples.std(ddof=1) / np.sqrt(500), rel=1e-12)
    assert r.to_json()["formula_id"] == "semigroup"
