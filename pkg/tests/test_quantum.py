import math

import numpy as np
import pytest
from scipy.integrate import quad

from bellpv.quantum import (
    Behavior,
    BehaviorError,
    BlochVector,
    DetectionKind,
    DetectionModel,
    MeasurementFrame,
    PureState,
    Scenario,
    apply_three_outcome,
    behavior_for_model,
    binned_behavior,
    chsh_optimal_frame,
    ghz3,
    ghz_rotated,
    ideal_behavior,
    parse_state,
    sample_direction,
    singlet,
    w3,
)

Z = BlochVector(0, 0, 1)


def frame_nn(a: BlochVector, b: BlochVector) -> MeasurementFrame:
    return MeasurementFrame(((a, a), (b, b)))


def random_frame(rng, n_parties, m=2):
    return MeasurementFrame.sample(rng, n_parties, m)


class TestSampleDirection:
    def test_deterministic_for_fixed_seed(self):
        v1 = sample_direction(np.random.default_rng(123))
        v2 = sample_direction(np.random.default_rng(123))
        assert v1 == v2

    def test_spherical_moments(self):
        rng = np.random.default_rng(42)
        zs = np.array([sample_direction(rng).z for _ in range(1_000_000)])
        assert abs(zs.mean()) < 0.005
        # oracle: independent quadrature of the z^2 moment of the uniform sphere measure
        moment, _ = quad(lambda c: c * c / 2, -1, 1)
        assert abs(moment - 1 / 3) < 1e-12
        assert abs((zs**2).mean() - moment) < 0.005

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            v = sample_direction(rng).as_array()
            assert abs(v @ v - 1) < 1e-12


class TestStates:
    def test_named_states_normalized(self):
        for s in (singlet(), ghz3(), w3(), ghz_rotated(0.3)):
            assert abs(np.vdot(s.amplitudes, s.amplitudes).real - 1) < 1e-12

    def test_parse_state(self):
        assert parse_state("singlet").n_parties == 2
        assert parse_state("ghz-rot:0.5").n_parties == 3
        custom = parse_state("1,0,0,1")
        assert custom.n_parties == 2
        assert abs(custom.amplitudes[0] - 1 / math.sqrt(2)) < 1e-12
        with pytest.raises(ValueError):
            parse_state("bogus")

    def test_bad_norm_rejected(self):
        with pytest.raises(ValueError):
            PureState(np.array([1.0, 1.0, 0, 0]), 2)

    def test_bloch_vector_must_be_unit(self):
        with pytest.raises(ValueError):
            BlochVector(1, 1, 0)


class TestIdealBehavior:
    def test_singlet_anticorrelated_along_z(self):
        beh = ideal_behavior(singlet(), frame_nn(Z, Z))
        assert beh.prob((0, 0), (0, 1)) == pytest.approx(0.5, abs=1e-12)
        assert beh.prob((0, 0), (1, 0)) == pytest.approx(0.5, abs=1e-12)
        assert beh.prob((0, 0), (0, 0)) == pytest.approx(0.0, abs=1e-12)
        assert beh.prob((0, 0), (1, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_singlet_correlator_is_minus_dot_product(self):
        rng = np.random.default_rng(7)
        state = singlet()
        for _ in range(50):
            a, b = sample_direction(rng), sample_direction(rng)
            beh = ideal_behavior(state, frame_nn(a, b))
            corr = (
                beh.prob((0, 0), (0, 0))
                - beh.prob((0, 0), (0, 1))
                - beh.prob((0, 0), (1, 0))
                + beh.prob((0, 0), (1, 1))
            )
            assert corr == pytest.approx(-(a.as_array() @ b.as_array()), abs=1e-10)

    def test_rotated_ghz_all_x_correlator(self):
        x = BlochVector(1, 0, 0)
        beh = ideal_behavior(ghz_rotated(math.atan(1 / 3)), MeasurementFrame(((x,), (x,), (x,))))
        signs = np.array([1, -1])
        corr = beh.table[0].reshape(2, 2, 2)
        value = np.einsum("abc,a,b,c->", corr, signs, signs, signs)
        assert value == pytest.approx(3 / math.sqrt(10), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ideal_behavior(ghz3(), frame_nn(Z, Z))

    def test_global_phase_invariance(self):
        rng = np.random.default_rng(11)
        frame = random_frame(rng, 2)
        base = ideal_behavior(singlet(), frame)
        shifted = PureState(singlet().amplitudes * np.exp(1j * 0.83), 2)
        assert np.allclose(base.table, ideal_behavior(shifted, frame).table, atol=1e-12)


class TestThreeOutcome:
    def test_perfect_detection_embeds_ideal(self):
        rng = np.random.default_rng(3)
        frame = random_frame(rng, 2)
        ideal = ideal_behavior(singlet(), frame)
        dressed = apply_three_outcome(ideal, (1.0, 1.0))
        grid = dressed.table.reshape(2, 2, 3, 3)
        assert np.allclose(grid[:, :, 1, :], 0.0)
        assert np.allclose(grid[:, :, :, 1], 0.0)
        kept = grid[:, :, ::2, ::2].reshape(4, 4)
        assert np.allclose(kept, ideal.table, atol=1e-12)

    def test_zero_efficiency_all_silent(self):
        ideal = ideal_behavior(singlet(), frame_nn(Z, Z))
        dressed = apply_three_outcome(ideal, (0.0, 0.0))
        for row in dressed.table:
            assert row.reshape(3, 3)[1, 1] == pytest.approx(1.0, abs=1e-12)

    def test_one_sided_loss_on_singlet(self):
        # product rule applied to the anticorrelated z-z marginals
        ideal = ideal_behavior(singlet(), frame_nn(Z, Z))
        dressed = apply_three_outcome(ideal, (1.0, 0.5))
        p = dressed.table[0].reshape(3, 3)
        assert p[0, 1] == pytest.approx(0.25, abs=1e-12)  # (+1, silent)
        assert p[2, 1] == pytest.approx(0.25, abs=1e-12)  # (-1, silent)
        assert p[0, 2] == pytest.approx(0.25, abs=1e-12)  # (+1, -1)
        assert p[2, 0] == pytest.approx(0.25, abs=1e-12)  # (-1, +1)

    def test_eta_out_of_range(self):
        ideal = ideal_behavior(singlet(), frame_nn(Z, Z))
        with pytest.raises(ValueError):
            apply_three_outcome(ideal, (1.2, 1.0))


class TestBinnedBehavior:
    def test_perfect_detection_matches_ideal(self):
        rng = np.random.default_rng(5)
        for state in (singlet(), ghz3()):
            frame = random_frame(rng, state.n_parties)
            binned = binned_behavior(state, frame, (1.0,) * state.n_parties)
            ideal = ideal_behavior(state, frame)
            assert np.allclose(binned.table, ideal.table, atol=1e-12)

    def test_zero_efficiency_pins_minus(self):
        beh = binned_behavior(singlet(), frame_nn(Z, Z), (0.0, 0.0))
        assert np.allclose(beh.table[:, -1], 1.0, atol=1e-12)

    def test_plus_plus_scales_with_eta_squared(self):
        eta = 0.73
        beh = binned_behavior(singlet(), frame_nn(Z, Z), (eta, eta))
        # ideal P(+,+) = 0 on anticorrelated settings, so the binned value stays 0
        assert beh.prob((0, 0), (0, 0)) == pytest.approx(0.0, abs=1e-12)
        plus = ideal_behavior(singlet(), frame_nn(Z, BlochVector(1, 0, 0)))
        dressed = binned_behavior(singlet(), frame_nn(Z, BlochVector(1, 0, 0)), (eta, eta))
        assert dressed.prob((0, 0), (0, 0)) == pytest.approx(
            eta * eta * plus.prob((0, 0), (0, 0)), abs=1e-12
        )

    def test_flip_postprocessing_identity(self):
        # binning at eta equals binning at eta0 followed by flipping +1 -> -1
        # with probability 1 - eta/eta0, independently per party
        rng = np.random.default_rng(9)
        for eta0, eta in [(1.0, 0.8), (0.9, 0.6), (0.7, 0.7)]:
            state = singlet()
            frame = random_frame(rng, 2)
            coarse = binned_behavior(state, frame, (eta0, eta0))
            keep = eta / eta0
            t = np.array([[keep, 0.0], [1.0 - keep, 1.0]])
            flipped = np.einsum("ai,bj,xij->xab", t, t, coarse.table.reshape(-1, 2, 2))
            fine = binned_behavior(state, frame, (eta, eta))
            assert np.abs(flipped.reshape(-1, 4) - fine.table).max() < 1e-9

    def test_merge_matches_three_outcome(self):
        rng = np.random.default_rng(13)
        for state in (singlet(), w3()):
            n = state.n_parties
            frame = random_frame(rng, n)
            etas = tuple(rng.uniform(0.3, 1.0, size=n))
            three = apply_three_outcome(ideal_behavior(state, frame), etas)
            merge = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])  # {0,-1} -> -1
            mats = [merge] * n
            grid = three.table.reshape((-1,) + (3,) * n)
            if n == 2:
                merged = np.einsum("ai,bj,xij->xab", mats[0], mats[1], grid)
            else:
                merged = np.einsum("ai,bj,ck,xijk->xabc", mats[0], mats[1], mats[2], grid)
            binned = binned_behavior(state, frame, etas)
            assert np.abs(merged.reshape(binned.table.shape) - binned.table).max() < 1e-9


class TestBehaviorValidation:
    def test_random_constructions_pass_invariants(self):
        rng = np.random.default_rng(21)
        for state in (singlet(), ghz3(), w3()):
            n = state.n_parties
            for kind in DetectionKind:
                etas = tuple(rng.uniform(0.0, 1.0, size=n))
                model = DetectionModel(kind, etas)
                frame = random_frame(rng, n)
                behavior_for_model(state, frame, model)  # validation happens on construction

    def test_bad_normalization_rejected(self):
        sc = Scenario(2, (1, 1), 2)
        with pytest.raises(BehaviorError):
            Behavior(sc, np.array([[0.5, 0.2, 0.2, 0.2]]))

    def test_signaling_table_rejected(self):
        sc = Scenario(2, (2, 1), 2)
        table = np.array(
            [
                [0.5, 0.0, 0.0, 0.5],
                [0.25, 0.25, 0.25, 0.25],
            ]
        )
        # Alice's marginal is fine, Bob's marginal depends on Alice's setting
        table2 = np.array(
            [
                [0.5, 0.0, 0.25, 0.25],
                [0.25, 0.25, 0.25, 0.25],
            ]
        )
        Behavior(sc, table)  # non-signaling: both marginals uniform
        with pytest.raises(BehaviorError):
            Behavior(sc, table2)

    def test_small_negative_clamped(self):
        sc = Scenario(2, (1, 1), 2)
        beh = Behavior(sc, np.array([[0.5, 0.5, -5e-13, 5e-13]]))
        assert beh.table.min() == 0.0

    def test_chsh_optimal_frame_reaches_tsirelson(self):
        beh = ideal_behavior(singlet(), chsh_optimal_frame())
        signs = np.array([1.0, -1.0])
        corr = np.einsum("xab,a,b->x", beh.table.reshape(4, 2, 2), signs, signs)
        s = corr[0] + corr[1] + corr[2] - corr[3]
        assert s == pytest.approx(2 * math.sqrt(2), abs=1e-12)
