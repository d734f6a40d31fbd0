"""Tests for the backward recurrences: laws, probabilities, expectations."""

import math
import random
from fractions import Fraction

import pytest

from smreduce.asymptotics import ComparableFn, ONE, cf_limit, mono
from smreduce.hitting import (MissingInteriorDataError, expectation_summary,
                              extend_to_interior, hitting_probabilities,
                              hitting_summary)
from smreduce.laplace import (DiracAt, ExponentialLimit, GeometricCompound,
                              Mixture, canonical, lt_eval, lt_mass, lt_mean)
from smreduce.oracle import exact_laplace, fix_model
from smreduce.reduction import reduce

from helpers import interior_row_model, random_model, three_state, two_target_toy

HALF = Fraction(1, 2)

# parameter picks covering the three sign regimes, all with
# min(alpha, beta) + gamma < 1 so that state 1 is strictly less absorbing
SMALL_DELTA = [
    (HALF, HALF, 0), (Fraction(1, 4), Fraction(1, 4), HALF),   # alpha = beta
    (2, HALF, 0), (1, 0, 0),                                   # alpha > beta
    (HALF, 2, 0), (0, 1, 0),                                   # beta > alpha
]


class TestExitLaw:
    @pytest.mark.parametrize("params", SMALL_DELTA)
    def test_final_state_law_is_unit_exponential(self, params):
        trace = reduce(three_state(*params))
        result = hitting_summary(trace)
        assert result.psi("2", "3") == ExponentialLimit(Fraction(1))
        assert result.hit_prob("2", "3") == 1

    @pytest.mark.parametrize("params,coeff", [
        ((HALF, HALF, 0), Fraction(4, 3)),
        ((Fraction(1, 4), Fraction(1, 4), HALF), Fraction(4, 3)),
        ((2, HALF, 0), Fraction(1)), ((1, 0, 0), Fraction(1)),
        ((HALF, 2, 0), Fraction(2)), ((0, 1, 0), Fraction(2)),
    ])
    def test_final_normalization_leading_term(self, params, coeff):
        trace = reduce(three_state(*params))
        result = hitting_summary(trace)
        lead = result.check_v("2").leading()
        assert (lead.coeff, lead.b) == (coeff, Fraction(-1))

    def test_equal_time_scale_boundary(self):
        # at min(alpha, beta) + gamma = 1 the two exterior states share the
        # time scale and the exit law is exponential with mean 3/2 under the
        # reduced normalization with leading term (4/3) / eps
        trace = reduce(three_state(1, 1, 0))
        result = hitting_summary(trace)
        lead = result.check_v("2").leading()
        assert (lead.coeff, lead.b) == (Fraction(4, 3), Fraction(-1))
        psi = result.psi("2", "3")
        for s in (0.25, 0.5, 1.0, 2.0):
            assert lt_eval(psi, s) == pytest.approx(1.0 / (1.0 + 1.5 * s), rel=1e-12)


class TestUpstreamLaw:
    def test_equal_exponents_give_half_atom_half_exponential(self):
        trace = reduce(three_state(HALF, HALF, 0, allow_zero_mass=True))
        result = hitting_summary(trace)
        psi = result.psi("1", "3")
        assert psi == Mixture(((HALF, DiracAt(Fraction(0))),
                               (HALF, ExponentialLimit(Fraction(1)))))
        assert lt_eval(psi, 1.0) == pytest.approx(0.75, abs=1e-12)
        # same normalization as from the deeper state
        assert result.check_v("1") == result.check_v("2")

    def test_slow_exit_gives_geometric_law(self):
        trace = reduce(three_state(1, 0, 0))
        result = hitting_summary(trace)
        psi = result.psi("1", "3")
        want = 0.5 * math.exp(-0.5) / (1 - 0.5 * math.exp(-0.5))
        assert lt_eval(psi, 1.0) == pytest.approx(want, abs=1e-9)
        assert psi == canonical(GeometricCompound(HALF, DiracAt(HALF), DiracAt(HALF)))
        # normalization switches to state 1's own scale
        assert result.entries[("1", "3")].switch_index == 1
        assert (result.check_v("1") / trace.removed(0).v["1"]).constant_value() == 1

    @pytest.mark.parametrize("params", [(HALF, 2, 0), (0, 1, 0), (2, HALF, 0)])
    def test_remaining_regimes_give_unit_exponential(self, params):
        trace = reduce(three_state(*params))
        result = hitting_summary(trace)
        assert result.psi("1", "3") == ExponentialLimit(Fraction(1))

    def test_switch_index_prefers_largest_reachable(self):
        trace = reduce(three_state(HALF, HALF, 0))
        result = hitting_summary(trace)
        assert result.entries[("1", "3")].switch_index == 2
        assert result.entries[("2", "3")].switch_index == 2


class TestProbabilities:
    def test_single_target_absorbs_everything(self):
        trace = reduce(three_state(1, 0, 0))
        probs = hitting_probabilities(trace)
        assert probs[("1", "3")] == 1
        assert probs[("2", "3")] == 1

    def test_symmetric_two_target_split(self):
        m = two_target_toy()
        trace = reduce(m)
        probs = hitting_probabilities(trace)
        for i in ("1", "2"):
            assert probs[(i, "3")] == HALF
            assert probs[(i, "4")] == HALF
        # independently: the fixed-eps linear system, followed to small eps
        fem = fix_model(m, 1e-4)
        truth = exact_laplace(fem, 0.0)
        for i in ("1", "2"):
            assert truth[(i, "3")] == pytest.approx(0.5, abs=1e-3)

    def test_matches_transform_at_zero(self):
        rng = random.Random(71)
        for _ in range(15):
            trace = reduce(random_model(rng))
            probs = hitting_probabilities(trace)
            result = hitting_summary(trace)
            for key, p in probs.items():
                assert abs(lt_eval(result.entries[key].psi, 0.0) - float(p)) <= 1e-12

    def test_rows_sum_to_one(self):
        rng = random.Random(73)
        for _ in range(15):
            trace = reduce(random_model(rng))
            probs = hitting_probabilities(trace)
            for i in trace.order:
                assert sum(probs[(i, j)] for j in trace.domain) == 1


class TestExpectations:
    @pytest.mark.parametrize("params", SMALL_DELTA)
    def test_final_state_expectation_is_one(self, params):
        trace = reduce(three_state(*params))
        result = expectation_summary(trace)
        entry = result.entries[("2", "3")]
        assert entry.bar_E == 1
        assert entry.moment_match is True

    @pytest.mark.parametrize("params,want", [
        ((HALF, HALF, 0), HALF),        # equal exponents
        ((Fraction(1, 4), 1, HALF), 1),  # alpha < beta
        ((0, 2, 0), 1),
    ])
    def test_upstream_expectation_under_distribution_normalization(self, params, want):
        trace = reduce(three_state(*params))
        result = expectation_summary(trace)
        entry = result.entries[("1", "3")]
        assert entry.e_check == want
        assert entry.moment_match is True

    @pytest.mark.parametrize("params,want", [
        ((HALF, 0, 0), 1),                        # sum of exponents < 1
        ((HALF, HALF, HALF), Fraction(2, 5)),     # boundary, equal exponents
        ((1, 0, 0), Fraction(1, 3)),              # boundary, first larger
        ((HALF, 1, HALF), HALF),                  # boundary, second larger
        ((2, 0, 0), 0),                           # sum of exponents > 1
    ])
    def test_downstream_weight_regimes(self, params, want):
        # weight of the downstream part in the expectation normalization
        trace = reduce(three_state(*params))
        result = expectation_summary(trace)
        vbar1 = result.bar_v("1")
        vbar2 = result.bar_v("2")
        p12 = trace.removed(0).p[("1", "2")]
        lim = cf_limit(vbar2 * p12 / vbar1)
        assert lim.finite_value() == want

    def test_boundary_mismatch_between_normalizations(self):
        # first exponent plus time exponent equal to one: the expectation
        # under the distribution normalization converges to 3/2 while the
        # limiting law has mean 1
        trace = reduce(three_state(1, 0, 0))
        result = expectation_summary(trace)
        entry = result.entries[("1", "3")]
        assert entry.bar_E == 1
        assert entry.e_check == Fraction(3, 2)
        assert lt_mean(entry.psi) == pytest.approx(1.0)
        assert entry.moment_match is False

    def test_divergent_expectation_flagged(self):
        # direct-exit exponent sum strictly below one with a slower direct
        # exit: the downstream weight is 1 and the expectation diverges under
        # the distribution normalization
        trace = reduce(three_state(HALF, 0, 0))
        result = expectation_summary(trace)
        entry = result.entries[("1", "3")]
        assert entry.bar_E == 1
        assert entry.e_check_infinite
        assert entry.moment_match is False


class TestConditionalLaws:
    def test_positive_entries_are_proper(self):
        rng = random.Random(79)
        for _ in range(10):
            trace = reduce(random_model(rng))
            result = hitting_summary(trace)
            for (i, j), e in result.entries.items():
                assert e.phi is not None
                if e.hit_prob > 0:
                    assert lt_mass(e.phi) == pytest.approx(1.0, abs=1e-12)
                    assert lt_eval(e.phi, 1.0) < 1.0

    def test_law_not_concentrated_at_zero(self):
        for params in SMALL_DELTA:
            trace = reduce(three_state(*params))
            result = hitting_summary(trace)
            for (i, j), e in result.entries.items():
                if e.hit_prob > 0:
                    for s in (0.1, 1.0):
                        assert lt_eval(e.psi, s) < float(e.hit_prob)


class TestInterior:
    def test_requires_interior_rows(self):
        m = three_state(1, 0, 0)
        trace = reduce(m)
        with pytest.raises(MissingInteriorDataError):
            extend_to_interior(trace, m)

    def test_single_branch_direct_exit(self):
        # the interior row leaves to the target in one jump; its law is just
        # the transition law and the normalization is its own time scale
        m = interior_row_model(ONE)
        trace = reduce(m)
        result, weights = extend_to_interior(trace, m)
        entry = result.entries[("2", "3")]
        assert entry.psi == DiracAt(Fraction(1))
        assert entry.hit_prob == 1
        assert entry.check_v == ONE
        assert weights.psi_weights[("2", "3")] == {"2": 1}

    def test_vanishing_detour_keeps_direct_law(self):
        # detour probability eps vanishes: weights concentrate on the row
        m = interior_row_model(ComparableFn([mono(1), mono(-1, 1)]))
        trace = reduce(m)
        result, weights = extend_to_interior(trace, m)
        entry = result.entries[("2", "3")]
        assert entry.psi == DiracAt(Fraction(1))
        assert weights.psi_weights[("2", "3")] == {"2": 1}

    def test_persistent_detour_weights_by_leading_order(self):
        # detour probability 1/2: the exterior state's normalization grows
        # like 1/eps and dominates the interior unit scale, so the law mixes
        # a vanishing direct part with the detour law
        m = interior_row_model(ComparableFn.constant(HALF))
        trace = reduce(m)
        ext = expectation_summary(trace)
        result, weights = extend_to_interior(trace, m, ext)
        w = weights.psi_weights[("2", "3")]
        # hand check via leading orders: v_2 = 1, check_v_1 ~ 1/eps
        assert ext.check_v("1").leading().b == -1
        assert w["2"] == 0
        assert w["1"] == 1
        entry = result.entries[("2", "3")]
        assert entry.hit_prob == 1
        # law: half a point mass at zero (fast direct exit), half the
        # exterior exponential
        assert lt_eval(entry.psi, 1.0) == pytest.approx(0.5 + 0.5 * 0.5)

    def test_weight_families_sum_to_one(self):
        for direct in (ComparableFn.constant(HALF),
                       ComparableFn([mono(1), mono(-HALF, 1)]),
                       ComparableFn([mono(HALF), mono(HALF, 2)])):
            m = interior_row_model(direct)
            trace = reduce(m)
            result, weights = extend_to_interior(trace, m)
            for key, w in weights.psi_weights.items():
                assert sum(w.values()) == 1
            for i, w in weights.exp_weights.items():
                assert sum(w.values()) == 1

    def test_interior_probabilities_sum_to_one(self):
        m = interior_row_model(ComparableFn.constant(HALF))
        trace = reduce(m)
        result, _ = extend_to_interior(trace, m)
        for i in ("2", "3"):
            total = sum(result.entries[(i, j)].hit_prob for j in ("2", "3")
                        if (i, j) in result.entries)
            assert total == 1
