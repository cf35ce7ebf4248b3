import math

import numpy as np
import pytest

from apidrift import (
    DetectorConfig,
    DriftDetector,
    FrequencyTable,
    SnapshotError,
    ValidationError,
    build_prior,
    build_space,
    log_alarm_threshold,
    log_bf_closed_form,
    log_bf_trajectory,
)
from apidrift.demo import demo_baseline, demo_drifted
from apidrift.simulate import Distribution, mix, sample_stream


def uniform_prior(k: int = 2):
    """Concentration 1 per category, null probability 1/k each."""
    space = build_space([f"c{i}" for i in range(k)], "single")
    return build_prior(FrequencyTable(space, np.ones(k, dtype=np.int64)), prior_weight=float(k))


def random_prior(rng, max_k: int = 30):
    k = int(rng.integers(2, max_k))
    space = build_space([f"c{i}" for i in range(k)], "single")
    counts = rng.integers(0, 40, size=k)
    if counts.sum() == 0:
        counts[0] = 1
    return build_prior(FrequencyTable(space, counts))


class TestInit:
    def test_prior_odds_one_starts_at_zero(self):
        det = DriftDetector(uniform_prior())
        assert det.t == 0
        assert det.log_bf == 0.0
        assert det.alarmed_at == {}
        assert (det.data_counts == 0).all()

    def test_prior_odds_two_prefavors(self):
        det = DriftDetector(uniform_prior(), DetectorConfig(prior_odds=2.0))
        assert det.log_bf == pytest.approx(math.log(2.0), abs=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            DetectorConfig(fp_levels=(1.5,))
        with pytest.raises(ValidationError):
            DetectorConfig(forgetting_w=0.0)
        with pytest.raises(ValidationError):
            DetectorConfig(prior_odds=-1.0)


class TestStep:
    def test_first_draw_uninformative_under_uniform_prior(self):
        for category in (0, 1):
            det = DriftDetector(uniform_prior())
            result = det.step(category)
            assert result.log_psi == pytest.approx(0.0, abs=1e-12)

    def test_second_repeat_gains_four_thirds(self):
        det = DriftDetector(uniform_prior())
        det.step(0)
        result = det.step(0)
        # posterior (2,1): ratio 2 / (0.5 * 3)
        assert result.log_psi == pytest.approx(math.log(4 / 3), abs=1e-12)
        assert result.log_bf == pytest.approx(math.log(4 / 3), abs=1e-12)

    def test_matches_closed_form_telescoping(self):
        det = DriftDetector(uniform_prior())
        det.step(0)
        det.step(0)
        oracle = log_bf_closed_form(det.prior, np.array([2, 0]))
        assert det.log_bf == pytest.approx(oracle, abs=1e-12)

    def test_out_of_range_category(self):
        det = DriftDetector(uniform_prior())
        with pytest.raises(ValidationError):
            det.step(2)
        with pytest.raises(ValidationError):
            det.step(-1)

    def test_posterior_mean_is_conjugate_update(self):
        rng = np.random.default_rng(21)
        prior = random_prior(rng)
        k = prior.space.K
        stream = rng.integers(0, k, size=400)
        det = DriftDetector(prior)
        for c in stream:
            det.step(int(c))
        x = np.bincount(stream, minlength=k)
        mean = det.posterior_alpha / det.posterior_alpha.sum()
        np.testing.assert_allclose(
            mean, (prior.alpha0 + x) / (prior.sum_alpha0 + len(stream)), rtol=1e-12
        )

    def test_step_bit_identical_to_vectorized_trajectory(self):
        rng = np.random.default_rng(2)
        prior = random_prior(rng)
        stream = rng.integers(0, prior.space.K, size=1000)
        det = DriftDetector(prior)
        results = [det.step(int(c)) for c in stream]
        log_psi, log_bf = log_bf_trajectory(prior, stream)
        assert np.array_equal([r.log_psi for r in results], log_psi)
        assert np.array_equal([r.log_bf for r in results], log_bf)


class TestClosedForm:
    def test_empty_counts_gives_prior_odds(self):
        prior = uniform_prior()
        assert log_bf_closed_form(prior, np.zeros(2)) == pytest.approx(0.0, abs=1e-12)
        assert log_bf_closed_form(prior, np.zeros(2), prior_odds=2.0) == pytest.approx(
            math.log(2.0), abs=1e-12
        )

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationError):
            log_bf_closed_form(uniform_prior(), np.array([-1, 3]))

    def test_recursion_agrees_on_random_streams(self):
        rng = np.random.default_rng(37)
        for _ in range(40):
            prior = random_prior(rng)
            n = int(rng.integers(1, 200))
            stream = rng.integers(0, prior.space.K, size=n)
            _, log_bf = log_bf_trajectory(prior, stream)
            oracle = log_bf_closed_form(prior, np.bincount(stream, minlength=prior.space.K))
            assert abs(log_bf[-1] - oracle) <= 1e-9 * max(1.0, abs(oracle))


class TestPermutation:
    def test_total_is_order_free_but_steps_are_not(self):
        rng = np.random.default_rng(4)
        prior = random_prior(rng)
        stream = rng.integers(0, prior.space.K, size=300)
        log_psi_ref, log_bf_ref = log_bf_trajectory(prior, stream)
        some_steps_differ = False
        for _ in range(20):
            perm = rng.permutation(stream)
            log_psi, log_bf = log_bf_trajectory(prior, perm)
            assert abs(log_bf[-1] - log_bf_ref[-1]) <= 1e-9
            if not np.array_equal(log_psi, log_psi_ref):
                some_steps_differ = True
        assert some_steps_differ


class TestAlarms:
    def test_threshold_constants(self):
        assert log_alarm_threshold(0.10) == pytest.approx(2.302585, abs=1e-6)
        assert log_alarm_threshold(0.05) == pytest.approx(2.995732, abs=1e-6)
        assert log_alarm_threshold(0.01) == pytest.approx(4.605170, abs=1e-6)

    def test_alarm_iff_above_threshold(self):
        space = build_space(["common", "rare"], "single")
        prior = build_prior(FrequencyTable(space, np.array([99, 1])), prior_weight=100.0)
        det = DriftDetector(prior, DetectorConfig(fp_levels=(0.10, 0.05)))
        while 0.05 not in det.alarmed_at:
            result = det.step(1)
        assert result.log_bf > log_alarm_threshold(0.05)
        assert det.alarmed_at[0.10] <= det.alarmed_at[0.05]

    def test_latch_survives_later_decline(self):
        # Ten repeats of one category push the BF over the 0.10 threshold
        # (ln(2^m/(m+1)) under the uniform prior); ten of the other then
        # rebalance the counts and drag it back below.
        det = DriftDetector(uniform_prior(2), DetectorConfig(fp_levels=(0.10,)))
        for _ in range(10):
            det.step(0)
        assert 0.10 in det.alarmed_at
        alarm_t = det.alarmed_at[0.10]
        for _ in range(10):
            det.step(1)
        assert det.log_bf < log_alarm_threshold(0.10)
        assert det.alarmed_at[0.10] == alarm_t


class TestForgetting:
    def test_warns_on_construction(self):
        with pytest.warns(UserWarning, match="forgetting"):
            DriftDetector(uniform_prior(), DetectorConfig(forgetting_w=0.5))

    def test_w1_counts_equal_t_exactly(self):
        det = DriftDetector(uniform_prior())
        for i in range(500):
            det.step(i % 2)
        assert det.data_counts.sum() == 500.0

    def test_effective_memory_bound_on_constant_stream(self):
        with pytest.warns(UserWarning):
            det = DriftDetector(uniform_prior(), DetectorConfig(forgetting_w=0.99))
        for t in range(1, 2001):
            det.step(0)
            total = det.data_counts.sum()
            assert total <= min(t, 1.0 / (1.0 - 0.99)) + 1e-9
        assert det.data_counts.sum() < 100.5

    def test_w_below_one_forgets_strictly(self):
        with pytest.warns(UserWarning):
            det = DriftDetector(uniform_prior(), DetectorConfig(forgetting_w=0.9))
        det.step(0)
        det.step(0)
        assert det.data_counts.sum() < det.t

    def test_w1_matches_reference_stepper_bitwise(self):
        # Minimal no-forgetting reference: prior counts plus raw increments.
        rng = np.random.default_rng(9)
        prior = random_prior(rng)
        stream = rng.integers(0, prior.space.K, size=500)
        det = DriftDetector(prior, DetectorConfig(forgetting_w=1.0))
        counts = np.zeros(prior.space.K)
        log_theta0 = np.log(prior.theta0)
        expected_bf = math.log(prior.prior_odds)
        for i, c in enumerate(stream):
            expected_psi = (
                math.log(prior.alpha0[c] + counts[c])
                - log_theta0[c]
                - math.log(prior.sum_alpha0 + float(i))
            )
            result = det.step(int(c))
            expected_bf += expected_psi
            assert result.log_psi == expected_psi
            assert result.log_bf == expected_bf
            counts[c] += 1.0


class TestSnapshot:
    def make_running_detector(self):
        prior = build_prior(demo_baseline())
        h = Distribution.from_frequency(demo_baseline())
        hp = Distribution.from_frequency(demo_drifted())
        stream = sample_stream(mix(h, hp, 0.2), 300, seed=123)
        det = DriftDetector(prior, track_history=True)
        for c in stream[:150]:
            det.step(int(c))
        return det, stream

    def test_round_trip_continues_bit_identically(self):
        det, stream = self.make_running_detector()
        restored = DriftDetector.restore(det.snapshot())
        for c in stream[150:]:
            a = det.step(int(c))
            b = restored.step(int(c))
            assert a.log_psi == b.log_psi
            assert a.log_bf == b.log_bf
        assert det.alarmed_at == restored.alarmed_at
        assert det.psi_log_history == restored.psi_log_history

    def test_snapshot_at_t0_equals_fresh_init(self):
        prior = build_prior(demo_baseline())
        fresh = DriftDetector(prior)
        restored = DriftDetector.restore(fresh.snapshot())
        assert restored.t == 0
        assert restored.log_bf == fresh.log_bf
        assert (restored.data_counts == 0).all()

    def test_truncated_bytes_rejected(self):
        det, _ = self.make_running_detector()
        blob = det.snapshot()
        with pytest.raises(SnapshotError):
            DriftDetector.restore(blob[: len(blob) // 2])

    def test_wrong_payload_rejected(self):
        with pytest.raises(SnapshotError):
            DriftDetector.restore(b'{"format": "something-else"}')
        with pytest.raises(SnapshotError):
            DriftDetector.restore(b"\x00\xff garbage")
