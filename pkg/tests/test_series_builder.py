"""Nonlinearity expansion and the exponential near-solution recursion."""

import numpy as np
import pytest

from nlslab import discretization as dz
from nlslab import ground_state as gs
from nlslab import series_builder as sb


@pytest.fixture(scope="module")
def near2(pair, blocks):
    return sb.build_near_solution(2, 1.0, pair, blocks)


def test_generalized_binomial_values():
    assert sb.generalized_binomial(3.0, 2) == pytest.approx(3.0)
    assert sb.generalized_binomial(0.5, 2) == pytest.approx(-1 / 8)
    assert sb.generalized_binomial(1.5, 3) == pytest.approx(-1 / 16)
    assert sb.generalized_binomial(2.0, 0) == 1.0


def test_pz_coefficients_closed_forms_d6():
    # d = 6: p_c = 2, P(z) = (1+z)^{3/2} (1+conj z)^{1/2}
    table = sb.pz_coefficients(2.0, 4)
    assert table[(2, 0)] == pytest.approx(3 / 8)
    assert table[(1, 1)] == pytest.approx(3 / 4)
    assert table[(0, 2)] == pytest.approx(-1 / 8)
    assert table[(3, 0)] == pytest.approx(-1 / 16)
    assert (0, 1) not in table.coef
    with pytest.raises(ValueError):
        sb.pz_coefficients(2.0, 1)


def test_expansion_reconstructs_p():
    # independent check of the whole table: the truncated series converges to
    # the direct evaluation at the truncation order
    table = sb.pz_coefficients(2.0, 6)
    z = 0.1 * np.exp(1j * np.linspace(0, 2 * np.pi, 40))
    err = np.max(np.abs(sb.reconstruct_p(table, z) - sb.eval_p(z, 2.0)))
    assert err < 1e-6  # remainder ~ |z|^7


def test_eval_r_is_quadratically_small(grid):
    # i R(v) strips the constant and linear parts, so ||R(eps v)|| = O(eps^2)
    v = gs.sample_w(grid) * (0.3 + 0.2j)
    n1 = np.max(np.abs(sb.eval_r(1e-3 * v, grid)))
    n2 = np.max(np.abs(sb.eval_r(2e-3 * v, grid)))
    assert n2 / n1 == pytest.approx(4.0, rel=1e-2)


def test_eval_gamma_is_the_derivative_of_the_nonlinearity(grid):
    # Gamma(v) = d/deps [ |W+eps v|^{p_c-1}(W+eps v) ] at eps = 0
    pc = gs.critical_exponent(grid.d)
    W = gs.sample_w(grid)
    v = np.exp(-grid.r ** 2 / 4) * (1.0 + 0.5j)
    h = 1e-6

    def nl(eps):
        u = W + eps * v
        return np.abs(u) ** (pc - 1) * u

    fd = (nl(h) - nl(-h)) / (2 * h)
    assert np.max(np.abs(sb.eval_gamma(v, grid) - fd)) < 1e-7


def test_series_reconstruction_matches_direct_remainder(grid, pair, blocks, near2):
    # with profiles through order k, sum_j e^{-j e0 t} F_j reproduces
    # i R(v_k(t)) up to the dropped orders O(e^{-(k+1) e0 t})
    table = sb.pz_coefficients(blocks.p_c, 4)
    t = 18.0
    v = sb.perturbation(near2, t)
    direct = sb.eval_r(v, grid)
    series = sb.series_reconstruction(near2, table, t)
    miss = dz.l2_norm(direct - series, grid, interior=True)
    assert miss < 10 * np.exp(-3 * pair.e0 * t) * dz.l2_norm(direct, grid,
                                                             interior=True)


def test_solve_profile_satisfies_block_equations(grid, pair, blocks):
    # the Schur-complement solution must satisfy the underlying block system
    #   L_plus f + j e0 g = -Re F,   L_minus g - j e0 f = -Im F
    table = sb.pz_coefficients(blocks.p_c, 3)
    profiles = [None, 1.0 * pair.y_plus]
    F = sb.order_forcing(2, profiles, table, grid)
    phi, cond = sb.solve_profile(2, F, pair, blocks)
    f, g = phi.real, phi.imag
    je0 = 2 * pair.e0
    r1 = blocks.L_plus @ f + je0 * g + F.real
    r2 = blocks.L_minus @ g - je0 * f + F.imag
    scale = dz.l2_norm(F, grid, interior=True)
    assert dz.l2_norm(r1, grid, interior=True) / scale < 1e-8
    assert dz.l2_norm(r2, grid, interior=True) / scale < 1e-8
    assert cond > 1
    with pytest.raises(ValueError):
        sb.solve_profile(1, F, pair, blocks)


def test_order_forcing_requires_lower_profiles(grid, pair, blocks):
    table = sb.pz_coefficients(blocks.p_c, 3)
    with pytest.raises(ValueError):
        sb.order_forcing(3, [None, pair.y_plus, None], table, grid)
    with pytest.raises(ValueError):
        sb.order_forcing(1, [None], table, grid)


def test_residual_rate_k1(grid, pair, blocks):
    near = sb.build_near_solution(1, 1.0, pair, blocks)
    report = sb.residual_rate(near)
    target = 2 * pair.e0
    assert abs(report.rate - target) / target < 0.10
    assert report.fit_residual < 0.1
    assert report.window[0] >= report.t_k - 1e-9


def test_residual_rate_k2_exceeds_k1(grid, pair, blocks, near2):
    near1 = sb.build_near_solution(1, 1.0, pair, blocks)
    r1 = sb.residual_rate(near1)
    r2 = sb.residual_rate(near2)
    assert r2.rate > r1.rate


def test_validity_start_shifts_with_amplitude(pair, blocks):
    # for k = 1 the perturbation is a e^{-e0 t} Y_plus, so the smallness time
    # shifts by exactly ln(a)/e0
    n1 = sb.build_near_solution(1, 1.0, pair, blocks)
    n3 = sb.build_near_solution(1, 3.0, pair, blocks)
    t1, t3 = sb.validity_start(n1), sb.validity_start(n3)
    assert t3 - t1 == pytest.approx(np.log(3.0) / pair.e0, abs=1e-8)
    n0 = sb.build_near_solution(1, 0.0, pair, blocks)
    assert sb.validity_start(n0) == -np.inf


def test_homogeneity_coarse(grid, pair, blocks):
    # Phi_j^a = a^j Phi_j^1 (the recursion is homogeneous in a)
    a = 1.7
    n1 = sb.build_near_solution(3, 1.0, pair, blocks)
    na = sb.build_near_solution(3, a, pair, blocks)
    for j in range(1, 4):
        ref = a ** j * n1.profiles[j]
        rel = dz.l2_norm(na.profiles[j] - ref, grid) / dz.l2_norm(ref, grid)
        assert rel < 1e-9


def test_translation_identity_coarse(grid, pair, blocks, near2):
    # W_k^a(t) = W_k^{sgn a}(t - ln|a|/e0)
    a = 1.7
    na = sb.build_near_solution(2, a, pair, blocks)
    for t in (10.0, 20.0):
        lhs = sb.assemble(na, t)
        rhs = sb.assemble(near2, t - np.log(a) / pair.e0)
        assert np.max(np.abs(lhs - rhs)) < 1e-11


def test_time_derivative_matches_differences(near2):
    t, h = 15.0, 1e-5
    fd = (sb.assemble(near2, t + h) - sb.assemble(near2, t - h)) / (2 * h)
    assert np.max(np.abs(sb.time_derivative(near2, t) - fd)) < 1e-9


def test_near_solution_round_trip(tmp_path, grid, pair, blocks, near2):
    report = sb.residual_rate(near2)
    path = str(tmp_path / "bundle")
    sb.save_near_solution(path, near2, report)
    loaded = sb.load_near_solution(path)
    assert loaded.k == near2.k and loaded.a == near2.a and loaded.e0 == near2.e0
    for j in range(1, near2.k + 1):
        assert np.array_equal(loaded.profiles[j], near2.profiles[j])
    t = 12.0
    assert np.array_equal(sb.assemble(loaded, t), sb.assemble(near2, t))
    meta = dz.load_json(str(tmp_path / "bundle" / "manifest.json"))
    assert meta["residual_report"]["rate"] == report.rate
