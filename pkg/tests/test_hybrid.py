"""Piecewise-exact engine: cube passages, gluing jumps, saltation
corrections, section returns, and tangent transport.

Oracles are componentwise exponentials for the cube (the field is
diagonal linear, so each coordinate evolves independently) and plain
affine arithmetic for the jump.  The saltation matrix is pinned by its
defining property, mapping the field at the exit point to the field at
the landing point.
"""

import math

import numpy as np
import pytest

from lorenzlab import hybrid
from lorenzlab.errors import (DomainError, GluingParameterError,
                              StableManifoldError)
from lorenzlab.maps1d import ContractingLorenzMap
from lorenzlab.models import contracting_model, expanding_model

CONTRACTING = contracting_model().params
EXPANDING = expanding_model().params


def cube_field(params, p):
    return np.array([params.lambda1 * p[0],
                     params.lambda2 * p[1],
                     params.lambda3 * p[2]])


def _random_section_seed(rng, lo=0.05, hi=0.49):
    u = rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi)
    v = rng.uniform(-0.4, 0.4)
    return np.array([u, v, 1.0])


class TestCubeExit:
    @pytest.mark.parametrize("params", [CONTRACTING, EXPANDING],
                             ids=["contracting", "expanding"])
    def test_matches_componentwise_exponentials(self, params):
        rng = np.random.default_rng(21)
        lam = np.array([params.lambda1, params.lambda2, params.lambda3])
        for _ in range(100):
            p = np.array([rng.choice([-1, 1]) * rng.uniform(0.01, 0.99),
                          rng.uniform(-0.9, 0.9),
                          rng.uniform(0.05, 1.0)])
            e, t = hybrid.cube_exit(params, p)
            assert np.allclose(e, p * np.exp(lam * t), rtol=1e-12)
            assert abs(e[0]) == 1.0
            assert t == pytest.approx(-math.log(abs(p[0])) / params.lambda1)

    def test_singular_plane(self):
        with pytest.raises(StableManifoldError):
            hybrid.cube_exit(CONTRACTING, np.array([0.0, 0.2, 0.5]))

    def test_outside_cube(self):
        with pytest.raises(DomainError):
            hybrid.cube_exit(CONTRACTING, np.array([1.5, 0.0, 0.5]))


class TestGlueJump:
    def test_plus_face_closed_form(self):
        rho = CONTRACTING.gluing.effective_rho
        c = CONTRACTING.gluing.translation[1]
        q = hybrid.glue_jump(CONTRACTING, np.array([1.0, 0.2, 0.05]))
        assert np.allclose(q, [0.5 - rho * 0.05, 0.2 + c, 1.0])

    def test_minus_face_closed_form(self):
        rho = CONTRACTING.gluing.effective_rho
        c = CONTRACTING.gluing.translation[1]
        q = hybrid.glue_jump(CONTRACTING, np.array([-1.0, 0.2, 0.05]))
        assert np.allclose(q, [rho * 0.05 - 0.5, -0.2 - c, 1.0])

    def test_minus_face_is_reflected_plus_face(self):
        # the -1 face rule is the +1 face rule composed with the point
        # reflection (x, y, z) -> (-x, -y, z) of the image, same (y, z)
        flip = np.array([-1.0, -1.0, 1.0])
        rng = np.random.default_rng(2)
        for _ in range(30):
            y = rng.uniform(-0.3, 0.3)
            z = rng.uniform(1e-3, 0.1)
            a = hybrid.glue_jump(CONTRACTING, np.array([-1.0, y, z]))
            b = hybrid.glue_jump(CONTRACTING, np.array([1.0, y, z])) * flip
            assert np.allclose(a, b, atol=1e-15)

    def test_escaping_image_is_flagged(self):
        with pytest.raises(GluingParameterError):
            hybrid.glue_jump(CONTRACTING, np.array([1.0, 0.0, 0.5]))

    def test_not_on_a_face(self):
        with pytest.raises(DomainError):
            hybrid.glue_jump(CONTRACTING, np.array([0.7, 0.0, 0.05]))

    def test_jump_matrix_is_the_jump_derivative(self):
        for side, e in ((1, np.array([1.0, 0.1, 0.04])),
                        (-1, np.array([-1.0, 0.1, 0.04]))):
            a = hybrid.glue_jump_matrix(CONTRACTING, side)
            h = 1e-7
            for k in (1, 2):
                dp = np.zeros(3)
                dp[k] = h
                fd = (hybrid.glue_jump(CONTRACTING, e + dp)
                      - hybrid.glue_jump(CONTRACTING, e - dp)) / (2 * h)
                assert np.allclose(a[:, k], fd, atol=1e-7)


class TestSaltation:
    @pytest.mark.parametrize("params", [CONTRACTING, EXPANDING],
                             ids=["contracting", "expanding"])
    def test_transports_field_to_field(self, params):
        rng = np.random.default_rng(8)
        rho = params.gluing.effective_rho
        for _ in range(100):
            side = rng.choice([-1.0, 1.0])
            e = np.array([side, rng.uniform(-0.3, 0.3),
                          rng.uniform(1e-3, 0.9 / rho)])
            s_mat = hybrid.saltation_matrix(params, e)
            q = hybrid.glue_jump(params, e)
            lhs = s_mat @ cube_field(params, e)
            assert np.allclose(lhs, cube_field(params, q), atol=1e-12)

    def test_determinant_tracks_the_face(self):
        rng = np.random.default_rng(13)
        for params in (CONTRACTING, EXPANDING):
            rho = params.gluing.effective_rho
            base = rho * params.lambda3 / params.lambda1
            for _ in range(40):
                side = rng.choice([-1.0, 1.0])
                e = np.array([side, rng.uniform(-0.3, 0.3),
                              rng.uniform(1e-3, 0.9 / rho)])
                det = np.linalg.det(hybrid.saltation_matrix(params, e))
                assert det == pytest.approx(side * base, rel=1e-12)


class TestReturnMultiplier:
    def test_determinant(self):
        rng = np.random.default_rng(3)
        p = CONTRACTING
        base = p.gluing.effective_rho * p.lambda3 / p.lambda1
        for _ in range(40):
            u = rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 0.45)
            m = hybrid.return_multiplier(p, u, 0.1)
            side = 1.0 if u > 0 else -1.0
            want = side * base * abs(u) ** (p.r + p.s - 1.0)
            assert np.linalg.det(m) == pytest.approx(want, rel=1e-10)

    def test_singular_line(self):
        with pytest.raises(StableManifoldError):
            hybrid.return_multiplier(CONTRACTING, 0.0, 0.1)


class TestHybridFlow:
    def test_time_zero(self):
        p = np.array([0.3, 0.1, 1.0])
        assert np.allclose(hybrid.flow(CONTRACTING, p, 0.0), p)

    def test_in_cube_samples_are_exponentials(self):
        p = np.array([0.31, 0.02, 0.7])
        lam = np.array([1.0, -6.0, -2.0])
        for t in (0.1, 0.5, 1.0):
            got = hybrid.flow(CONTRACTING, p, t)
            assert np.allclose(got, p * np.exp(lam * t), rtol=1e-13)

    def test_mid_transit_interpolates(self):
        p = np.array([0.3, 0.1, 1.0])
        e, t_exit = hybrid.cube_exit(CONTRACTING, p)
        q = hybrid.glue_jump(CONTRACTING, e)
        mid = hybrid.flow(CONTRACTING, p, t_exit + 0.5 * CONTRACTING.tau_out)
        assert np.allclose(mid, 0.5 * (e + q), atol=1e-12)

    def test_vector_sample_matches_scalar_flow(self):
        p = np.array([0.3, 0.1, 1.0])
        times = np.array([2.0, 0.3, 1.5, 4.4, 0.0])
        path = hybrid.HybridPath(CONTRACTING, p)
        block = path.sample(times)
        for t, row in zip(times, block):
            assert np.allclose(row, hybrid.flow(CONTRACTING, p, t),
                               atol=1e-12), t

    def test_semigroup_across_returns(self):
        p = np.array([0.3, 0.1, 1.0])
        hit = hybrid.advance_to_section(CONTRACTING, p)
        for dt in (0.2, 1.7, 3.0):
            whole = hybrid.flow(CONTRACTING, p, hit.time + dt)
            parts = hybrid.flow(CONTRACTING, hit.point, dt)
            assert np.allclose(whole, parts, atol=1e-10), dt

    def test_backward_in_cube_inverts(self):
        p = np.array([0.31, 0.001, 0.5])
        lam = np.array([1.0, -6.0, -2.0])
        back = hybrid.flow(CONTRACTING, p, -0.2)
        assert np.allclose(back, p * np.exp(lam * -0.2), rtol=1e-13)
        again = hybrid.flow(CONTRACTING, back, 0.2)
        assert np.allclose(again, p, rtol=1e-12)

    def test_backward_off_attractor_is_refused(self):
        # inverting the fiber contraction amplifies the v coordinate
        # by |u|^(-r); a generic landing point reconstructs a
        # pre-image far outside the section square
        with pytest.raises(DomainError):
            hybrid.flow(CONTRACTING, np.array([0.31, 0.07, 1.0]), -2.3)


class TestSectionLandings:
    def test_landings_match_coordinate_iteration(self):
        u0, v0, n = 0.3, 0.1, 12
        path = hybrid.HybridPath(CONTRACTING, np.array([u0, v0, 1.0]))
        us, vs, taus = hybrid.iterate_section_coords(CONTRACTING, u0, v0, n)
        t_expect = np.cumsum(taus)
        path.build(float(t_expect[-1]) + 1e-9)
        hits = path.section_landings()[:n]
        assert len(hits) == n
        for k, (t, q) in enumerate(hits):
            assert q[2] == 1.0
            assert abs(q[0]) <= 0.5 and abs(q[1]) <= 0.5
            assert t == pytest.approx(t_expect[k], rel=1e-12)
            assert q[0] == pytest.approx(us[k], abs=1e-12)
            assert q[1] == pytest.approx(vs[k], abs=1e-12)

    def test_advance_to_section(self):
        p = np.array([-0.27, 0.05, 1.0])
        hit = hybrid.advance_to_section(CONTRACTING, p)
        assert hit.point[2] == 1.0
        assert hit.time == pytest.approx(
            -math.log(0.27) / CONTRACTING.lambda1 + CONTRACTING.tau_out)
        assert hit.side == (1 if hit.point[0] > 0 else -1)
        assert hit.crossing_speed == CONTRACTING.lambda3


class TestSectionIteration:
    def test_single_step_recursion(self):
        p = CONTRACTING
        rho = p.gluing.effective_rho
        c = p.gluing.translation[1]
        us, vs, taus = hybrid.iterate_section_coords(p, 0.3, 0.1, 200)
        u, v = 0.3, 0.1
        for k in range(200):
            au = abs(u)
            if u > 0:
                u_next = 0.5 - rho * au ** p.s
                v_next = v * au ** p.r + c
            else:
                u_next = rho * au ** p.s - 0.5
                v_next = -(v * au ** p.r) - c
            assert us[k] == pytest.approx(u_next, abs=1e-14)
            assert vs[k] == pytest.approx(v_next, abs=1e-14)
            assert taus[k] == pytest.approx(
                -math.log(au) / p.lambda1 + p.tau_out, rel=1e-13)
            u, v = us[k], vs[k]

    def test_u_orbit_is_the_quotient_orbit(self):
        # the u coordinate never sees v: it follows the 1d quotient map
        m = ContractingLorenzMap()
        us, _, _ = hybrid.iterate_section_coords(CONTRACTING, 0.3, 0.44, 8)
        x = 0.3
        for k in range(8):
            x = m.value(x)
            assert us[k] == pytest.approx(x, abs=1e-9)

    def test_final_triple_shortcut(self):
        us, vs, taus = hybrid.iterate_section_coords(CONTRACTING, 0.3, 0.1, 7)
        u, v, tau = hybrid.iterate_section_coords(CONTRACTING, 0.3, 0.1, 7,
                                                  collect=False)
        assert (u, v, tau) == (us[-1], vs[-1], taus[-1])

    def test_singular_start(self):
        with pytest.raises(StableManifoldError):
            hybrid.iterate_section_coords(CONTRACTING, 0.0, 0.1, 3)


class TestTangentTransport:
    def test_diagonal_inside_first_passage(self):
        p = np.array([0.3, 0.1, 1.0])
        t = math.log(2.0)
        state, m = hybrid.flow_with_tangent(CONTRACTING, p, t)
        assert np.allclose(m, np.diag([2.0, 2.0 ** -6, 2.0 ** -2]),
                           rtol=1e-13)

    def test_full_return_equals_return_multiplier(self):
        rng = np.random.default_rng(30)
        for _ in range(20):
            p = _random_section_seed(rng)
            hit = hybrid.advance_to_section(CONTRACTING, p)
            _, m = hybrid.flow_with_tangent(CONTRACTING, p, hit.time)
            want = hybrid.return_multiplier(CONTRACTING, p[0], p[1])
            assert np.allclose(m, want, rtol=1e-10)

    def test_flow_direction_stays_neutral(self):
        # Dphi_t G(p) = G(phi_t p) must survive the jump thanks to the
        # saltation correction; checked at a landing and inside the
        # following passage
        p = np.array([0.3, 0.1, 1.0])
        hit = hybrid.advance_to_section(CONTRACTING, p)
        for t in (hit.time, hit.time + 0.3):
            state, m = hybrid.flow_with_tangent(CONTRACTING, p, t)
            assert np.allclose(m @ cube_field(CONTRACTING, p),
                               cube_field(CONTRACTING, state), atol=1e-11)

    def test_backward_transport_refused(self):
        with pytest.raises(DomainError):
            hybrid.flow_with_tangent(CONTRACTING, np.array([0.3, 0.1, 1.0]),
                                     -1.0)
