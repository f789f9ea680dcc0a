"""Expansiveness probes: alignment, the shadowing dichotomy, tail
entropy.

The alignment oracle is a literal time shift: flowing the seed forward
by s and re-aligning must recover a reparametrization close to
t -> t + s with a near-zero sup distance.  The tail estimator is pinned
on two synthetics: a pure point sink, where survivors saturate and the
rate must decay like 1/n, and the defaults, whose two-ball cover gives
exactly log(2)/n.
"""

import numpy as np
import pytest

from lorenzlab import expansive, hybrid
from lorenzlab.errors import DomainError
from lorenzlab.models import classical_model, contracting_model


class SinkField:
    """All orbits collapse to the origin; nothing can separate."""

    def field(self, p):
        return -p


class TestReparam:
    def test_identity_and_shift(self):
        ident = expansive.Reparam.identity(0.0, 10.0)
        ts = np.array([-2.0, 0.0, 3.7, 10.0, 14.0])
        assert np.allclose(ident(ts), ts)
        sh = expansive.Reparam.shift(1.5, 0.0, 10.0)
        assert np.allclose(sh(ts), ts + 1.5)

    def test_extends_with_unit_slope(self):
        h = expansive.Reparam(np.array([0.0, 1.0, 2.0]),
                              np.array([0.0, 1.4, 2.5]))
        # outside the knot range the slope is one, keeping h surjective
        assert h(-3.0) == pytest.approx(-3.0)
        assert h(5.0) == pytest.approx(2.5 + 3.0)

    def test_inverse_roundtrip(self):
        h = expansive.Reparam(np.array([0.0, 1.0, 3.0]),
                              np.array([0.2, 1.7, 3.1]))
        hi = h.inverse()
        ts = np.linspace(-1.0, 4.0, 50)
        assert np.allclose(hi(h(ts)), ts, atol=1e-12)

    def test_monotonicity_enforced(self):
        with pytest.raises(DomainError):
            expansive.Reparam(np.array([0.0, 1.0, 1.0]),
                              np.array([0.0, 1.0, 2.0]))
        with pytest.raises(DomainError):
            expansive.Reparam(np.array([0.0, 1.0, 2.0]),
                              np.array([0.0, 2.0, 1.5]))
        with pytest.raises(DomainError):
            expansive.Reparam(np.array([0.0]), np.array([0.0]))


class TestAlignedDistance:
    def test_same_seed_is_zero(self):
        model = contracting_model()
        x = np.array([0.3, 0.1, 1.0])
        d = expansive.aligned_distance(model, x, x, 10.0,
                                       expansive.Reparam.identity())
        assert d == 0.0

    def test_needs_positive_horizon(self):
        model = contracting_model()
        x = np.array([0.3, 0.1, 1.0])
        with pytest.raises(DomainError):
            expansive.aligned_distance(model, x, x, 0.0,
                                       expansive.Reparam.identity())


class TestOptimizeReparam:
    def test_recovers_a_forward_time_shift(self):
        # x runs 0.4 ahead of y on the same orbit (still inside the
        # first cube passage, so the shifted seed is a valid state)
        model = contracting_model()
        y = np.array([0.35, 0.1, 1.0])
        x = hybrid.flow(model.params, y, 0.4)
        h, achieved = expansive.optimize_reparam(model, x, y, 12.0)
        assert achieved <= 0.02
        grid = np.linspace(1.0, 11.0, 200)
        shift = np.median(h(grid) - grid)
        assert shift == pytest.approx(0.4, abs=0.05)

    def test_distinct_orbits_stay_apart(self):
        model = contracting_model()
        x = np.array([0.05, 0.0, 1.0])
        y = np.array([-0.05, 0.02, 1.0])
        _, forward = expansive.optimize_reparam(model, x, y, 25.0)
        _, backward = expansive.optimize_reparam(model, y, x, 25.0)
        assert forward > 0.03
        assert backward > 0.03

    def test_knot_budget_validated(self):
        model = contracting_model()
        x = np.array([0.3, 0.1, 1.0])
        with pytest.raises(DomainError):
            expansive.optimize_reparam(model, x, x, 5.0, knot_budget=1)


class TestScan:
    def test_dichotomy_on_a_seeded_batch(self):
        model = contracting_model()
        reports = expansive.expansiveness_scan(model, n_pairs=8,
                                               T_horizon=25.0, seed=3)
        assert len(reports) == 8
        assert expansive.count_violations(reports) == 0
        for r in reports:
            assert r.verdict in ("separated", "time-shift-contained",
                                 "undetermined")
            if r.kind == "opposite":
                # mirrored seeds split at the singular line; no time
                # change can glue them back together
                assert r.verdict == "separated"
                assert r.max_distance > r.delta
            if r.kind == "same_orbit":
                assert r.verdict == "time-shift-contained"
                assert r.containment_shift is not None
                assert r.containment_shift > 0.0
            if r.kind == "same_leaf":
                assert r.verdict == "time-shift-contained"

    def test_scan_rejects_wrong_models(self):
        with pytest.raises(DomainError):
            expansive.expansiveness_scan(classical_model(), n_pairs=2)

    def test_delta_must_stay_below_gap_constant(self):
        with pytest.raises(DomainError):
            expansive.expansiveness_scan(contracting_model(), delta=0.06,
                                         delta0=0.05, n_pairs=2)

    def test_seed_determinism(self):
        model = contracting_model()
        a = expansive.expansiveness_scan(model, n_pairs=4,
                                         T_horizon=15.0, seed=11)
        b = expansive.expansiveness_scan(model, n_pairs=4,
                                         T_horizon=15.0, seed=11)
        assert [(r.verdict, r.max_distance) for r in a] == \
            [(r.verdict, r.max_distance) for r in b]


class TestTailEntropy:
    def test_defaults_give_a_two_ball_cover(self):
        # at the default scales exactly one shifted companion survives
        # alongside the base path, and the two need separate balls
        rate = expansive.tail_entropy_estimate(contracting_model())
        assert rate == pytest.approx(np.log(2.0) / 20.0, abs=1e-12)
        assert rate <= 0.05

    def test_finer_cover_radius_cannot_lower_the_rate(self):
        model = contracting_model()
        coarse = expansive.tail_entropy_estimate(model, delta_prime=0.03)
        fine = expansive.tail_entropy_estimate(model, delta_prime=0.01)
        assert fine >= coarse

    def test_sink_rate_decays_like_one_over_n(self):
        # every candidate survives near a sink, so the cover count
        # saturates and the rate must fall inversely with the horizon
        rates = {}
        for n in (15.0, 60.0):
            rates[n] = expansive.tail_entropy_estimate(
                SinkField(), n=n, n_seeds=3, n_offsets=15)
        assert rates[60.0] <= rates[15.0] / 2.5
        assert rates[60.0] <= 0.05

    def test_radius_ordering_enforced(self):
        with pytest.raises(DomainError):
            expansive.tail_entropy_estimate(contracting_model(),
                                            delta=0.03, delta_prime=0.05)
