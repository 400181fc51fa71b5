import itertools
import math

import numpy as np
import pytest

from bellpv.inequalities import (
    CgThreePartyExpression,
    cg3_eta_critical,
    chsh_eta_value,
    chsh_symmetric_critical,
    eval_cg3,
    eval_ic,
    iabc1,
    iabc2,
    ic_critical_search,
    ic_value,
    mermin_cg,
    optimize_ic,
    rotated_ghz_quantum_terms,
)
from bellpv.quantum import (
    Behavior,
    BlochVector,
    MeasurementFrame,
    PureState,
    Scenario,
    apply_three_outcome,
    binned_behavior,
    ghz3,
    ghz_rotated,
    ideal_behavior,
    w3,
)

from _util import all_deterministic

SQRT2 = math.sqrt(2)
PHI_STAR = math.atan(1 / 3)
X, Y, Z = BlochVector(1, 0, 0), BlochVector(0, 1, 0), BlochVector(0, 0, 1)


def xy_frame() -> MeasurementFrame:
    return MeasurementFrame(((X, Y), (X, Y), (X, Y)))


class TestChshEta:
    def test_perfect_detection_reduces_to_q(self):
        assert chsh_eta_value(2 + SQRT2, 1.0, 1.0) == pytest.approx(2 + SQRT2, abs=1e-12)

    def test_threshold_value_is_exactly_three(self):
        eta = 2 / (1 + SQRT2)
        assert chsh_eta_value(2 + SQRT2, eta, eta) == pytest.approx(3.0, abs=1e-12)

    def test_dead_detectors_saturate_bound(self):
        for q in (3.0, 2 + SQRT2):
            assert chsh_eta_value(q, 0.0, 0.0) == pytest.approx(3.0, abs=1e-12)

    def test_affine_in_q(self):
        vals = [chsh_eta_value(q, 0.9, 0.8) for q in (3.0, 3.2, 3.4)]
        assert vals[2] - vals[1] == pytest.approx(vals[1] - vals[0], abs=1e-12)

    def test_symmetric_critical_matches_table(self):
        assert chsh_symmetric_critical(2 + SQRT2) == pytest.approx(2 / (1 + SQRT2), abs=1e-11)

    def test_symmetric_critical_marginal_violation(self):
        assert chsh_symmetric_critical(3 + 1e-9) > 1 - 1e-3

    def test_symmetric_critical_back_substitution(self):
        eta = chsh_symmetric_critical(3.2)
        assert abs(chsh_eta_value(3.2, eta, eta) - 3.0) < 1e-10

    def test_no_root_below_bound(self):
        with pytest.raises(ValueError):
            chsh_symmetric_critical(3.0)


class TestRotatedGhzTerms:
    def test_correlators_at_reference_phase(self):
        terms = rotated_ghz_quantum_terms(PHI_STAR)
        r10 = 1 / math.sqrt(10)
        assert terms.e_xyz[0, 0, 0] == pytest.approx(3 * r10, abs=1e-12)
        assert terms.e_xyz[1, 1, 1] == pytest.approx(r10, abs=1e-12)
        for pos in [(0, 1, 1), (1, 0, 1), (1, 1, 0)]:
            assert terms.e_xyz[pos] == pytest.approx(-3 * r10, abs=1e-12)
        for pos in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
            assert terms.e_xyz[pos] == pytest.approx(-r10, abs=1e-12)
        assert np.allclose(terms.o_xyz, 1.0, atol=1e-12)
        assert np.allclose(terms.o_pairs, 4.0, atol=1e-12)

    def test_component_totals(self):
        terms = rotated_ghz_quantum_terms(PHI_STAR)
        assert terms.i222 == pytest.approx(math.sqrt(160), abs=1e-12)
        assert terms.j222 == pytest.approx(4.0, abs=1e-12)
        assert terms.k22 == pytest.approx(12.0, abs=1e-12)

    def test_mermin_values_at_zero_phase(self):
        terms = rotated_ghz_quantum_terms(0.0)
        assert terms.i222_tilde == pytest.approx(4.0, abs=1e-12)
        assert terms.j222_tilde == pytest.approx(4.0, abs=1e-12)
        assert terms.k22_tilde == pytest.approx(6.0, abs=1e-12)


class TestCgCritical:
    def test_facet_expression_critical(self):
        crit = cg3_eta_critical(math.sqrt(160), 4.0, 12.0)
        assert crit == pytest.approx((math.sqrt(10) - 1) / 3, abs=1e-12)

    def test_mermin_expression_critical(self):
        assert cg3_eta_critical(4.0, 4.0, 6.0) == pytest.approx(0.75, abs=1e-12)

    def test_ratio_above_one_rejected(self):
        with pytest.raises(ValueError):
            cg3_eta_critical(1.0, 0.0, 2.0)


class TestEvalCg3:
    def make_behavior(self, eta: float) -> Behavior:
        ideal = ideal_behavior(ghz_rotated(PHI_STAR), xy_frame())
        return apply_three_outcome(ideal, (eta, eta, eta))

    def test_perfect_detection_value(self):
        value = eval_cg3(self.make_behavior(1.0), iabc1())
        assert value == pytest.approx(math.sqrt(160) + 4 - 12, abs=1e-9)

    def test_root_at_critical_efficiency(self):
        crit = (math.sqrt(10) - 1) / 3
        assert abs(eval_cg3(self.make_behavior(crit), iabc1())) < 1e-9

    def test_eta_scaling_law(self):
        i_q, j_q, k_q = math.sqrt(160), 4.0, 12.0
        for eta in np.linspace(0.0, 1.0, 11):
            value = eval_cg3(self.make_behavior(eta), iabc1())
            assert value == pytest.approx(eta**3 * (i_q + j_q) - eta**2 * k_q, abs=1e-9)

    def test_symmetrization_expands_to_three_terms(self):
        expr = iabc1()
        one_positions = [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
        assert all(expr.e_coeffs[p] == -1.0 for p in one_positions)
        two_positions = [(0, 1, 1), (1, 0, 1), (1, 1, 0)]
        assert all(expr.e_coeffs[p] == -3.0 for p in two_positions)

    def test_local_bound_all_deterministic_strategies(self):
        sc = Scenario(3, (2, 2, 2), 3)
        expr1, expr2 = iabc1(), iabc2()
        count = 0
        max1 = max2 = -np.inf
        for beh in all_deterministic(sc):
            v1, v2 = eval_cg3(beh, expr1), eval_cg3(beh, expr2)
            max1, max2 = max(max1, v1), max(max2, v2)
            assert v1 <= 1e-12
            assert v2 <= 1e-12
            count += 1
        assert count == 729
        assert max1 == pytest.approx(0.0, abs=1e-12)  # tight: the bound is attained
        assert max2 == pytest.approx(0.0, abs=1e-12)

    def test_mermin_cg_is_iabc2(self):
        a, b = mermin_cg(), iabc2()
        assert np.array_equal(a.e_coeffs, b.e_coeffs)
        assert np.array_equal(a.o_coeffs, b.o_coeffs)

    def test_scenario_mismatch(self):
        beh = ideal_behavior(ghz_rotated(0.0), xy_frame())
        with pytest.raises(ValueError):
            eval_cg3(beh, iabc1())


class TestIc:
    def test_matches_behavior_route(self):
        # fast tensor evaluation against the POVM behavior pipeline
        rng = np.random.default_rng(17)
        from bellpv.inequalities import _correlation_tensors, _ic_fast

        for state in (ghz3(), w3()):
            tensors = _correlation_tensors(state)
            for _ in range(10):
                dirs = [rng.normal(size=3) for _ in range(5)]
                dirs = [d / np.linalg.norm(d) for d in dirs]
                eta = float(rng.uniform(0.2, 1.0))
                obs = [
                    (BlochVector.from_array(dirs[0]), Z),
                    (BlochVector.from_array(dirs[1]), BlochVector.from_array(dirs[2])),
                    (BlochVector.from_array(dirs[3]), BlochVector.from_array(dirs[4])),
                ]
                via_behavior = eval_ic(state, obs, eta)
                via_tensors = _ic_fast(tensors, dirs[0], dirs[1:3], dirs[3:5], eta)
                assert via_behavior == pytest.approx(via_tensors, abs=1e-10)

    def test_deterministic_strategies_respect_bound(self):
        sc = Scenario(3, (2, 2, 2), 2)
        top = -np.inf
        for beh in all_deterministic(sc):
            v = ic_value(beh)
            assert v <= 1.0 + 1e-12
            top = max(top, v)
        assert top == pytest.approx(1.0, abs=1e-12)  # facet: the bound is attained

    def test_product_state_never_violates(self):
        rng = np.random.default_rng(23)
        amps = np.zeros(8, dtype=complex)
        amps[0] = 1.0
        product = PureState(amps, 3)
        for _ in range(20):
            obs = [
                (BlochVector.from_array(v / np.linalg.norm(v)), Z)
                for v in rng.normal(size=(3, 3))
            ]
            obs = [(pair[0], pair[0]) for pair in obs]
            eta = float(rng.uniform(0.3, 1.0))
            assert eval_ic(product, obs, eta) <= 1.0 + 1e-9

    def test_no_violation_at_two_thirds(self):
        rng = np.random.default_rng(29)
        for state in (ghz3(), w3()):
            for _ in range(25):
                dirs = rng.normal(size=(5, 3))
                dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
                obs = [
                    (BlochVector.from_array(dirs[0]), Z),
                    (BlochVector.from_array(dirs[1]), BlochVector.from_array(dirs[2])),
                    (BlochVector.from_array(dirs[3]), BlochVector.from_array(dirs[4])),
                ]
                assert eval_ic(state, obs, 2 / 3) <= 1.0 + 1e-9

    def test_ghz_violates_at_perfect_detection(self):
        value, _, _ = optimize_ic(ghz3(), 1.0, np.random.default_rng(3), n_starts=16)
        assert value > 1.0 + 1e-6


class TestIcCriticalSearch:
    @pytest.mark.slow
    @pytest.mark.parametrize("state_fn", [ghz3, w3])
    def test_critical_efficiency_two_thirds(self, state_fn):
        grid = np.arange(0.64, 0.72, 0.001)
        found = ic_critical_search(state_fn(), grid, n_starts=48, seed=5)
        assert abs(found - 2 / 3) <= 2e-3

    def test_no_violation_raises(self):
        amps = np.zeros(8, dtype=complex)
        amps[0] = 1.0
        with pytest.raises(ValueError):
            ic_critical_search(PureState(amps, 3), [0.9, 1.0], n_starts=8, seed=1)
