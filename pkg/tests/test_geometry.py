import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geomflow.geometry import (ChartPoint, GeometryError, Ellipsoid, Hyperbolic, Sphere,
                               christoffel, curvature, curvature_action, exp_point, gram_schmidt,
                               log_point, nabla_ricci, parse_manifold, r_norm, sample_points,
                               sectional)
from geomflow.geometry.zoo import ZOO

from conftest import point_of


def origin(m):
    return ChartPoint(np.zeros(m.dim), np.zeros(m.chart_size))


def test_christoffel_euclidean_zero():
    m = parse_manifold("euclidean:3")
    assert np.all(christoffel(m, ChartPoint([0.3, -1.0, 2.0])) == 0)


def test_christoffel_sphere_origin_zero():
    m = Sphere(2)
    for method in ("exact", "fd"):
        assert np.abs(christoffel(m, origin(m), method=method)).max() < 1e-9


def test_christoffel_poincare_conformal_formula():
    m = Hyperbolic(2)
    x = np.array([0.5, 0.0])
    # sigma = log(2 / (1 - |x|^2)), independent evaluation of the conformal formula
    ds = 2 * x / (1 - x @ x)
    d = np.eye(2)
    ref = (np.einsum("ki,j->kij", d, ds) + np.einsum("kj,i->kij", d, ds)
           - np.einsum("ij,k->kij", d, ds))
    p = ChartPoint(x, np.zeros(m.chart_size))
    for method in ("exact", "fd"):
        gam = christoffel(m, p, method=method)
        assert np.abs(gam - ref).max() < 1e-6
        assert np.abs(gam - gam.transpose(0, 2, 1)).max() < 1e-12


def test_christoffel_outside_domain():
    m = Hyperbolic(2)
    with pytest.raises(GeometryError):
        christoffel(m, ChartPoint([0.97, 0.0], np.zeros(m.chart_size)))


@pytest.mark.parametrize("method", ["exact", "fd"])
def test_curvature_round_sphere(method):
    m = Sphere(2)
    p = point_of(m, 3)[0]
    cb = curvature(m, p, method=method)
    assert np.abs(cb.ric.matrix - np.eye(2)).max() < 1e-6
    assert abs(cb.riem[0, 1, 1, 0] - 1) < 1e-6
    assert abs(cb.scal - 2) < 1e-6


@pytest.mark.parametrize("d", [2, 3])
def test_curvature_poincare(d):
    m = Hyperbolic(d)
    p = point_of(m, 1)[0]
    for method in ("exact", "fd"):
        cb = curvature(m, p, method=method)
        assert np.abs(cb.ric.matrix + (d - 1) * np.eye(d)).max() < 1e-5
        assert abs(sectional(m, p, np.eye(d)[0], np.eye(d)[1], method=method) + 1) < 1e-5


def test_product_ricci_eigenvalues():
    m = parse_manifold(ZOO["S2xS2(2)"])
    p = point_of(m, 2)[0]
    for method in ("exact", "fd"):
        ev = np.sort(np.linalg.eigvalsh(curvature(m, p, method=method).ric.matrix))
        assert np.allclose(ev, [0.25, 0.25, 1, 1], atol=1e-5)


def test_sectional_examples(zoo):
    s3 = zoo["S3"]
    p = point_of(s3, 5)[0]
    rng = np.random.default_rng(0)
    for _ in range(5):
        u, v = rng.normal(size=(2, 3))
        assert abs(sectional(s3, p, u, v) - 1) < 1e-10
    m = zoo["S2xS2"]
    q = point_of(m, 5)[0]
    e = np.eye(4)
    assert abs(sectional(m, q, e[0], e[2])) < 1e-12
    t = zoo["T2"]
    assert sectional(t, point_of(t)[0], [1, 0], [0.3, 1]) == 0


def test_sectional_degenerate_plane():
    m = Sphere(2)
    with pytest.raises(GeometryError):
        sectional(m, origin(m), [1, 0], [2, 0])


@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8))
@settings(max_examples=40, deadline=None)
def test_sectional_basis_invariance(vals):
    m = Ellipsoid(1, 1, 2)
    p = ChartPoint([0.3, -0.2], [0])
    u, v = np.array(vals[:2]), np.array(vals[2:4])
    g = m.metric(p.coords[None], p.chart[None])[0]
    area = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    if area < 1e-3 * (1 + (u @ g @ u) * (v @ g @ v)):
        return
    a = sectional(m, p, u, v)
    b = sectional(m, p, u + v, v)
    assert abs(a - b) < 1e-10 * (1 + abs(a))


@pytest.mark.parametrize("name", list(ZOO))
def test_symmetries_and_bianchi(zoo, name):
    m = zoo[name]
    for p in point_of(m, 11, 100 if m.has_oracles else 10):
        cb = curvature(m, p, method="fd" if not m.has_oracles else "auto")
        assert cb.symmetry_residual() <= 1e-5
        assert cb.bianchi_residual() <= 1e-5
        ric = np.einsum("iabi->ab", cb.riem)
        assert np.abs(ric - cb.ric.matrix).max() <= 1e-5


@pytest.mark.parametrize("name", [k for k in ZOO if k != "ellipsoid"])
def test_fd_matches_exact(zoo, name):
    m = zoo[name]
    x, c = m.random_points(np.random.default_rng(7), 20)
    ex = m.curvature_batch(x, c, method="exact")
    fd = m.curvature_batch(x, c, method="fd")
    scale = 1 + np.abs(ex["riem"]).max()
    assert np.abs(ex["riem"] - fd["riem"]).max() / scale <= 1e-4
    assert np.abs(ex["ric"] - fd["ric"]).max() / scale <= 1e-4


@pytest.mark.parametrize("name", ["S2", "S3", "S2xS2(2)"])
def test_nabla_ricci_vanishes(zoo, name):
    m = zoo[name]
    p = point_of(m, 4)[0]
    assert np.abs(nabla_ricci(m, p, method="fd")).max() < 1e-6


def test_nabla_ricci_ellipsoid_matches_gauss_derivative():
    m = Ellipsoid(1, 1, 2)
    p = ChartPoint([0.4, 0.25], [0])
    nab = nabla_ricci(m, p)
    assert np.abs(nab).max() > 1e-2
    assert np.abs(nab - nab.transpose(0, 2, 1)).max() < 1e-8
    # on a surface Ric = K g, so (nabla_{e_k} Ric) = (e_k K) g
    E = curvature(m, p).frame
    h = 1e-4
    for k in range(2):
        Ks = []
        for s in (1, -1):
            q = exp_point(m, p, s * h * E[:, k], n_steps=8)
            Ks.append(m.gauss_curvature(m.to_global(q.coords[None], q.chart[None]))[0])
        dK = (Ks[0] - Ks[1]) / (2 * h)
        assert np.allclose(nab[k], dK * np.eye(2), atol=1e-5)


def test_gram_schmidt_orthonormal(zoo):
    rng = np.random.default_rng(1)
    for name in ("S2", "H2", "ellipsoid", "S2xS2(2)"):
        m = zoo[name]
        x, c = m.random_points(rng, 16)
        g = m.metric(x, c)
        F = gram_schmidt(rng.normal(size=g.shape), g)
        res = np.swapaxes(F, 1, 2) @ g @ F - np.eye(m.dim)
        assert np.abs(res).max() <= 1e-12


def test_curvature_action_examples():
    m = Sphere(2)
    p = origin(m)
    out = curvature_action(m, p, np.diag([1.0, 2.0]))
    assert np.allclose(out.matrix, np.diag([2.0, 1.0]), atol=1e-12)
    s3 = Sphere(3)
    assert np.allclose(curvature_action(s3, origin(s3), np.eye(3)).matrix, 2 * np.eye(3))
    t = parse_manifold("torus:2")
    assert np.all(curvature_action(t, origin(t), [[1, 2], [2, 5]]).matrix == 0)


@pytest.mark.parametrize("spec,k", [("sphere:2:1", 1), ("sphere:3:1", 1), ("sphere:2:2", 0.25),
                                    ("hyperbolic:2", -1), ("hyperbolic:3", -1)])
def test_curvature_action_constant_curvature(spec, k):
    m = parse_manifold(spec)
    p = point_of(m, 9)[0]
    cb = curvature(m, p, method="fd")
    rng = np.random.default_rng(0)
    for _ in range(50):
        A = rng.normal(size=(m.dim, m.dim))
        T = A + A.T
        ref = k * np.trace(T) * np.eye(m.dim) - k * T
        out = curvature_action(m, p, T, bundle=cb).matrix
        assert np.abs(out - ref).max() <= 1e-5
        assert np.abs(out - out.T).max() <= 1e-12


def test_r_norm_examples(zoo):
    assert r_norm(zoo["T2"]) == 0
    # the constant curvature action has eigenvalues k and (d - 1) k
    assert abs(r_norm(zoo["S2"]) - 1) < 1e-9
    assert abs(r_norm(zoo["H2"]) - 1) < 1e-9
    assert abs(r_norm(zoo["S3"]) - 2) < 1e-9
    assert abs(r_norm(parse_manifold("sphere:2:2")) - 0.25) < 1e-9


def test_exp_euclidean():
    m = parse_manifold("euclidean:2")
    q = exp_point(m, ChartPoint([1.0, 2.0]), [0.5, -1.0])
    assert np.allclose(q.coords, [1.5, 1.0], atol=1e-14)


def test_exp_sphere_quarter_circle():
    m = Sphere(2)
    p = origin(m)
    # the metric at the chart origin is 4 times the identity
    q = exp_point(m, p, [np.pi / 4, 0.0])
    z = m.to_global(q.coords[None], q.chart[None])[0]
    z0 = m.to_global(p.coords[None], p.chart[None])[0]
    assert abs(z @ z0) < 1e-8
    v = log_point(m, p, q)
    g = m.metric(p.coords[None], p.chart[None])[0]
    assert abs(np.sqrt(v @ g @ v) - np.pi / 2) < 1e-8


@pytest.mark.parametrize("name", list(ZOO))
def test_exp_log_round_trip(zoo, name):
    m = zoo[name]
    rng = np.random.default_rng(3)
    for p in point_of(m, 13, 3):
        g = m.metric(p.coords[None], p.chart[None])[0]
        v = rng.normal(size=m.dim)
        v *= rng.uniform(0.05, 0.5) / np.sqrt(v @ g @ v)
        q = exp_point(m, p, v)
        assert np.abs(log_point(m, p, q) - v).max() <= 1e-8


@pytest.mark.parametrize("text", ["sphere:x", "blob:2", "product:", "ellipsoid:1:a"])
def test_parse_errors(text):
    with pytest.raises(ValueError):
        parse_manifold(text)


def test_sample_points_deterministic(zoo):
    a = sample_points(zoo["S2"], 32, seed=4)
    b = sample_points(zoo["S2"], 32, seed=4)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
