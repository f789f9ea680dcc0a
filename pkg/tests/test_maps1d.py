"""One-dimensional quotient maps: closed forms, structure checks,
orbit statistics.

Derivative and Schwarzian formulas are validated against central
finite differences (the oracle is plain arithmetic on the map values),
and the structural battery is pinned at the default parameters where
the critical orbit is eventually periodic: T(1/2) = -1/2, T(-1/2) =
1/2, a genuine 2-cycle with multiplier (rho*s*(1/2)^(s-1))^2 = 16.
"""

import math

import numpy as np
import pytest

from lorenzlab import maps1d
from lorenzlab.errors import DomainError


@pytest.fixture
def m():
    return maps1d.ContractingLorenzMap()


class TestClosedForms:
    def test_value_odd_symmetry(self, m):
        rng = np.random.default_rng(3)
        xs = rng.uniform(1e-6, 0.5, 200)
        assert np.allclose(m.value_array(-xs), -m.value_array(xs))

    def test_branch_monotone_decreasing(self, m):
        xs = np.linspace(1e-4, 0.5, 300)
        vals = m.value_array(xs)
        assert np.all(np.diff(vals) < 0)

    def test_derivatives_match_finite_differences(self, m):
        rng = np.random.default_rng(17)
        for _ in range(100):
            x = rng.uniform(0.05, 0.45) * rng.choice([-1.0, 1.0])
            h = 1e-6
            d1 = (m.value(x + h) - m.value(x - h)) / (2 * h)
            assert m.derivative(x, 1) == pytest.approx(d1, rel=1e-7)
            d2 = (m.value(x + h) - 2 * m.value(x) + m.value(x - h)) / h ** 2
            assert m.derivative(x, 2) == pytest.approx(d2, rel=1e-3)

    def test_derivative_vanishes_toward_critical_point(self, m):
        # s > 1 makes the map critical at 0: T' = O(|x|^(s-1))
        assert abs(m.derivative(1e-8, 1)) < 1e-6

    def test_schwarzian_closed_form_at_quarter(self, m):
        # -(s^2-1)/(2x^2) at s = 2, x = 1/4 is -3/(2/16) = -24
        assert m.schwarzian_value(0.25) == pytest.approx(-24.0)

    def test_schwarzian_matches_derivative_combination(self, m):
        rng = np.random.default_rng(29)
        for _ in range(100):
            x = rng.uniform(0.05, 0.45) * rng.choice([-1.0, 1.0])
            d1, d2, d3 = (m.derivative(x, k) for k in (1, 2, 3))
            combo = d3 / d1 - 1.5 * (d2 / d1) ** 2
            assert m.schwarzian_value(x) == pytest.approx(combo, rel=1e-12)

    def test_schwarzian_negative_everywhere_sampled(self, m):
        xs = np.linspace(-0.5, 0.5, 401)
        xs = xs[xs != 0]
        assert all(m.schwarzian_value(x) < 0 for x in xs)

    def test_limits_at_zero(self, m):
        assert m.limits_at_zero() == (-0.5, 0.5)
        assert m.limit_value(0.0, +1) == 0.5
        assert m.limit_value(0.0, -1) == -0.5

    def test_domain_errors(self, m):
        with pytest.raises(DomainError):
            m.value(0.0)
        with pytest.raises(DomainError):
            m.value(0.7)
        with pytest.raises(DomainError):
            m.derivative(0.0)

    def test_rho_ceiling(self):
        with pytest.raises(DomainError):
            maps1d.ContractingLorenzMap(rho=4.5, s=2.0)
        # the endpoint itself is admissible (each branch onto)
        maps1d.ContractingLorenzMap(rho=4.0, s=2.0)


class TestDefaultParameterStructure:
    def test_half_is_period_two(self, m):
        assert m.value(0.5) == pytest.approx(-0.5)
        assert m.value(-0.5) == pytest.approx(0.5)

    def test_period_two_multiplier_is_sixteen(self, m):
        mult = m.derivative(0.5) * m.derivative(-0.5)
        assert mult == pytest.approx(16.0)
        assert math.log(abs(mult)) == pytest.approx(2.772588722, rel=1e-9)

    def test_critical_values_reach_the_cycle(self, m):
        # critical values are +-1/2, so the critical orbit lands on the
        # repelling 2-cycle immediately: a Misiurewicz configuration
        c_minus, c_plus = m.limits_at_zero()
        assert m.value(c_plus) == pytest.approx(-0.5)
        assert m.value(c_minus) == pytest.approx(0.5)

    def test_check_properties_all_pass(self, m):
        rep = maps1d.check_properties(m)
        for item in (1, 2, 3, 4, 6):
            assert rep.status(item) == "pass", (item, rep.evidence(item))
        # item 5: the critical orbit revisit is found at the defaults
        assert rep.status(5) in ("pass", "undetermined")
        assert rep.status(5) == "pass"

    def test_check_properties_as_dict_round_trip(self, m):
        d = maps1d.check_properties(m).as_dict()
        assert set(d["items"]) == {"1", "2", "3", "4", "5", "6"}
        assert d["onto"] is True


class TestOrbits:
    def test_orbit_histogram_is_probability(self, m):
        w = maps1d.orbit_histogram(m, 0.1234567, 100_000, 256)
        assert w.sum() == pytest.approx(1.0)
        assert (w >= 0).all()

    def test_orbit_mean_log_abs_matches_theory(self, m):
        # at the default Misiurewicz parameters the acim gives
        # E[log|x|] = -log 4 (independently derivable from the exact
        # invariant density of the induced doubling structure)
        mean = maps1d.orbit_mean_log_abs(m, 0.1234567, 2_000_000)
        assert mean == pytest.approx(-math.log(4.0), abs=5e-3)

    def test_orbit_records_near_zero_approaches(self, m):
        res = maps1d.orbit(m, 0.1234567, 5000, lower_bound=1e-3)
        assert res.terminated_at is None
        assert all(abs(x) < 1e-3 for _, x in res.near_zero)

    def test_deterministic_given_start(self, m):
        a = maps1d.orbit(m, 0.3, 500).points
        b = maps1d.orbit(m, 0.3, 500).points
        assert np.array_equal(a, b)


class TestPiecewiseMaps:
    def test_tent_map_peak_and_symmetry(self):
        t = maps1d.tent_map()
        # 0 is a branch boundary; the peak is reached as a limit
        assert t.value(1e-12) == pytest.approx(0.5)
        assert t.value(-1e-12) == pytest.approx(0.5)
        assert t.value(-0.25) == pytest.approx(t.value(0.25))
        with pytest.raises(DomainError):
            t.value(0.0)

    def test_expanding_default_map_is_uniformly_expanding(self):
        em = maps1d.expanding_default_map()
        xs = np.concatenate([np.linspace(-0.49, -0.01, 50),
                             np.linspace(0.01, 0.49, 50)])
        ds = [abs(maps1d.derivatives(em, float(x))) for x in xs]
        assert min(ds) > 1.0

    def test_eval_T_dispatches(self, m):
        assert maps1d.eval_T(m, 0.25) == m.value(0.25)
        t = maps1d.tent_map()
        assert maps1d.eval_T(t, 0.25) == t.value(0.25)


class TestLocallyEventuallyOnto:
    def test_small_intervals_cover_core(self, m):
        # seed intervals live on one side of the discontinuity
        rng = np.random.default_rng(41)
        worst = 0
        for _ in range(50):
            side = rng.choice([-1.0, 1.0])
            lo = rng.uniform(0.002, 0.45)
            interval = (side * lo, side * lo + 1e-3) if side > 0 \
                else (side * lo - 1e-3, side * lo)
            res = maps1d.locally_eventually_onto(m, interval, n_max=500)
            assert res.success, (interval, res.n)
            worst = max(worst, res.n)
        # the expansion rate makes a 1e-3 interval cover the core in
        # roughly log2(1e3) + landing slack steps
        assert worst <= 20

    def test_interval_straddling_zero_rejected(self, m):
        with pytest.raises(DomainError):
            maps1d.locally_eventually_onto(m, (-1e-4, 1e-4), n_max=500)

    def test_degenerate_interval_rejected(self, m):
        with pytest.raises(DomainError):
            maps1d.locally_eventually_onto(m, (0.2, 0.2))
