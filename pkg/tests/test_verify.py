import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hipdg.assembly import PenaltyConfig, assemble_local, solve_hip
from hipdg.basis import quadrature_rule
from hipdg.mesh import generate
from hipdg.verify import (
    ConvergenceReport,
    Level,
    ecr,
    energy_error,
    enriched_error,
    expected_rates,
    interpolate,
    l2_error,
    l2_quad_degree,
    make_problem,
    min_sample_value,
)


def test_make_problem_validation():
    assert make_problem("a").name == "testA"
    assert make_problem("testB", 0.5).lam == 0.5
    for lam in (0.0, -1.0):
        with pytest.raises(ValueError):
            make_problem("testC", lam)
    with pytest.raises(ValueError):
        make_problem("testD")
    assert make_problem("testA", -5.0).lam == 1.0


@pytest.mark.parametrize("name", ["testA", "testB"])
def test_boundary_values_vanish(name, rng):
    p = make_problem(name, 0.3)
    t = rng.uniform(0, 1, 50)
    z, o = np.zeros(50), np.ones(50)
    for x, y in ((t, z), (t, o), (z, t), (o, t)):
        assert np.abs(p.u(x, y)).max() <= 1e-12


def test_test_a_gradient_and_forcing_against_finite_differences(rng):
    p = make_problem("testA")
    x, y = rng.uniform(0, 1, (2, 100))
    eps = 1e-5
    fd = np.stack([(p.u(x + eps, y) - p.u(x - eps, y)) / (2 * eps), (p.u(x, y + eps) - p.u(x, y - eps)) / (2 * eps)], -1)
    g = p.grad(x, y)
    assert np.abs(fd - g).max() <= 1e-6 * np.abs(g).max()
    lap = sum((p.grad(x + eps * e[0], y + eps * e[1])[:, a] - p.grad(x - eps * e[0], y - eps * e[1])[:, a]) / (2 * eps)
              for a, e in enumerate(((1, 0), (0, 1))))
    f = p.forcing(x, y, np.eye(2))
    assert np.abs(-lap - f).max() <= 1e-6 * np.abs(f).max()


def test_test_b_forcing():
    p = make_problem("testB", 1.0)
    x, y = np.array([0.3, 0.8]), np.array([0.6, 0.1])
    K = p.tensor(x, y)
    assert np.allclose(K, np.eye(2))
    assert np.allclose(p.forcing(x, y, K), 2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y))
    lam = 0.02
    p = make_problem("testB", lam)
    x, y = np.array([0.2]), np.array([0.3])  # lower-left quarter
    assert p.subdomain(x, y)[0] == 1
    assert np.allclose(p.forcing(x, y, p.tensor(x, y)), (1 + lam) * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y))


def test_test_b_tensor_layout():
    p = make_problem("testB", 1e-3)
    pts = {1: (0.25, 0.25), 2: (0.75, 0.25), 3: (0.75, 0.75), 4: (0.25, 0.75)}
    for sub, (x, y) in pts.items():
        K = p.tensor(np.array(x), np.array(y))
        expect = np.diag([1.0, 1e-3]) if sub in (1, 3) else np.diag([1e3, 1.0])
        assert p.subdomain(x, y) == sub
        assert np.allclose(K, expect)


def test_piecewise_problem_needs_even_n():
    with pytest.raises(ValueError):
        make_problem("testB").validate_mesh(generate("triangle", 5))


@pytest.mark.parametrize("name", ["testB", "testC"])
def test_manufactured_data_self_consistent(name, rng):
    # flux divergence by finite differences matches f inside each material quarter
    p = make_problem(name, 0.1)
    x, y = rng.uniform(0.02, 0.48, (2, 40)) + rng.integers(0, 2, (2, 40)) * 0.5
    K = p.tensor(x, y)
    eps = 1e-5
    div = 0.0
    for a in range(2):
        d = np.zeros(2)
        d[a] = eps
        flux_p = np.einsum("nab,nb->na", K, p.grad(x + d[0], y + d[1]))[:, a]
        flux_m = np.einsum("nab,nb->na", K, p.grad(x - d[0], y - d[1]))[:, a]
        div = div + (flux_p - flux_m) / (2 * eps)
    f = p.forcing(x, y, K)
    assert np.abs(-div - f).max() <= 1e-5 * np.abs(f).max()


def test_zero_field_gives_norm_of_solution():
    p = make_problem("testA")
    mesh = generate("triangle", 4)
    local = assemble_local(mesh, 2, np.eye(2), "sip", PenaltyConfig(1.0))
    zero = interpolate(local, lambda x, y: 0.0 * x)
    q = quadrature_rule("quad", 40)
    exact = math.sqrt(np.dot(q.weights, p.u(q.points[:, 0], q.points[:, 1]) ** 2))
    assert l2_error(local, zero, p, quad_degree=24) == pytest.approx(exact, rel=1e-13)
    assert l2_error(local, zero, p) == pytest.approx(exact, rel=1e-8)


def test_interpolant_of_polynomial_has_zero_error():
    class Poly:
        def u(self, x, y):
            return x * (1 - x) * y * (1 - y)

        def grad(self, x, y):
            return np.stack([(1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)], -1)

    local = assemble_local(generate("quad", 3), 2, np.eye(2), "sip", PenaltyConfig(1.0))
    fld = interpolate(local, Poly().u)
    assert l2_error(local, fld, Poly()) <= 1e-12
    assert energy_error(local, fld, Poly()) <= 1e-9
    assert enriched_error(local, fld, Poly()) <= 1e-9


def test_enriched_dominates_energy():
    p = make_problem("testA")
    for scheme in ("nip", "iip", "sip"):
        mesh = generate("triangle", 8)
        sol = solve_hip(mesh, 1, np.eye(2), scheme, PenaltyConfig(2.0), p.source(mesh))
        assert enriched_error(sol.local, sol.field, p) >= energy_error(sol.local, sol.field, p) > 0


def test_l2_rate_sip_k1():
    p = make_problem("testA")
    errs = []
    for n in (16, 32):
        mesh = generate("triangle", n)
        sol = solve_hip(mesh, 1, np.eye(2), "sip", PenaltyConfig(4.0, size_mode="size"), p.source(mesh))
        errs.append(l2_error(sol.local, sol.field, p))
    assert ecr(errs, [1 / 16, 1 / 32])[0] == pytest.approx(2.0, abs=0.1)


def test_min_sample_value():
    local = assemble_local(generate("quad", 2), 1, np.eye(2), "sip", PenaltyConfig(1.0))
    fld = interpolate(local, lambda x, y: x - 0.25)
    assert min_sample_value(local, fld) == pytest.approx(-0.25)


def test_l2_rule_degrees():
    assert l2_quad_degree(2) == 8
    assert l2_quad_degree(2, "gauss") == 4
    with pytest.raises(ValueError):
        l2_quad_degree(2, "midpoint")


# -- rates ------------------------------------------------------------------------

def test_ecr_examples():
    assert ecr([1e-2, 2.5e-3], [1 / 16, 1 / 32])[0] == pytest.approx(2.0)
    assert ecr([1.7e-4, 2.1e-5], [1 / 8, 1 / 16])[0] == pytest.approx(3.02, abs=0.005)
    assert ecr([3.0, 3.0, 3.0], [1.0, 0.5, 0.25]) == [0.0, 0.0]
    assert math.isnan(ecr([1.0, 0.0], [1.0, 0.5])[0])


@pytest.mark.parametrize("errors, hs", [([1.0], [1.0]), ([1.0, 2.0], [1.0]), ([1.0, 1.0], [1.0, -0.5]), ([-1.0, 1.0], [1.0, 0.5])])
def test_ecr_rejects_bad_input(errors, hs):
    with pytest.raises(ValueError):
        ecr(errors, hs)


@given(st.floats(0.1, 6.0), st.floats(1e-8, 1.0), st.integers(2, 5))
def test_ecr_recovers_power_law(rate, c, levels):
    hs = [2.0**-i for i in range(levels)]
    assert np.allclose(ecr([c * h**rate for h in hs], hs), rate, atol=1e-9)


def test_expected_rates_examples():
    r = expected_rates("sip", 0, 2)
    assert (r.energy_rate, r.l2_rate) == (2, 3)
    assert expected_rates("iip", 0, 2).l2_rate == 2
    assert expected_rates("nip", 2, 2).l2_rate == 3
    assert expected_rates(1, 0, 2, s=1.5).mu == 1.5


def test_expected_rates_graphs():
    # r_delta: identity below zero, zero above; s_delta: breakpoints at -2 and 2 for eps != 1
    deltas = [-3, -2, -1, 0, 1, 2, 3]
    r = [expected_rates("iip", d, 1).r_delta for d in deltas]
    assert r == [-3, -2, -1, 0, 0, 0, 0]
    s = [expected_rates("nip", d, 1).s_delta for d in deltas]
    assert s == [-6, -4, -2.5, -1, -0.5, 0, 0]
    s_sip = [expected_rates("sip", d, 1).s_delta for d in deltas]
    assert s_sip == [2 * v for v in r]


@given(st.sampled_from([-1, 0, 1]), st.floats(-3, 3), st.integers(1, 6))
def test_expected_rate_identities(eps, delta, k):
    r = expected_rates(eps, delta, k)
    assert r.energy_rate == pytest.approx(k + min(0.0, delta))
    assert r.l2_rate <= k + 1
    if eps == 1:
        assert r.s_delta == pytest.approx(2 * r.r_delta)


def test_report_requires_refinement():
    lv = lambda n: Level(n, 1 / n, 1.0, 1.0, 1.0)  # noqa: E731
    with pytest.raises(ValueError):
        ConvergenceReport([lv(8), lv(8)])
    rep = ConvergenceReport([lv(8), lv(16)])
    assert rep.rates("l2") == [0.0]
    assert ConvergenceReport([lv(8)]).rates("l2") == []
