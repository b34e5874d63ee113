import math

import numpy as np
import pytest

from cvqkd.errors import EstimationError, ScheduleError
from cvqkd.physics import DetectorConfig
from cvqkd.protocol import (AttenuationSchedule, PulseRecord, RecordBatch, SystemParams,
                            THREE_RATIO_SCHEDULE, TWO_POINT_SCHEDULE, alice_modulate,
                            estimate_covariance_transmittance, estimate_two_point,
                            honest_measure, honest_variance, run_honest_session,
                            two_point_from_variances, variances_by_ratio)
from cvqkd.rng import chunk_generator

P_DEFAULT = SystemParams()  # V_A=5, eta=0.5, eta_ch=0.9, xi=0.1, I_LO=1e8


def test_schedule_validation():
    with pytest.raises(ScheduleError, match="sum"):
        AttenuationSchedule(((1.0, 0.5), (0.5, 0.4)))
    with pytest.raises(ScheduleError, match="distinct"):
        AttenuationSchedule(((1.0, 0.5), (1.0, 0.5)))
    with pytest.raises(ScheduleError, match=r"\[0, 1\]"):
        AttenuationSchedule(((1.5, 1.0),))
    with pytest.raises(ScheduleError):
        AttenuationSchedule(())


def test_schedule_discard_fraction():
    assert THREE_RATIO_SCHEDULE.discard_fraction() == pytest.approx(0.10, abs=1e-15)
    assert AttenuationSchedule(((1.0, 1.0),)).discard_fraction() == 0.0
    sched = AttenuationSchedule(((1.0, 0.8), (0.5, 0.1), (0.001, 0.1)))
    assert sched.discard_fraction() == pytest.approx(0.20, abs=1e-15)


def test_system_params_validation_and_shot_noise():
    assert P_DEFAULT.shot_noise_unit == pytest.approx(5e7)
    with pytest.raises(ValueError):
        SystemParams(channel_transmittance=0.0)
    with pytest.raises(ValueError):
        SystemParams(excess_noise=-0.1)
    with pytest.raises(ValueError):
        SystemParams(lo_intensity=0.0)


def test_alice_modulate_zero_variance_and_determinism():
    params = SystemParams(modulation_variance=0.0)
    gen = chunk_generator(0, 7, 0)
    assert all(alice_modulate(gen, params) == 0.0 for _ in range(10))
    a = [alice_modulate(chunk_generator(1, 7, i), P_DEFAULT) for i in range(5)]
    b = [alice_modulate(chunk_generator(1, 7, i), P_DEFAULT) for i in range(5)]
    assert a == b


def test_alice_modulate_empirical_variance():
    gen = chunk_generator(2, 7, 0)
    sigma = math.sqrt(5 * 5e7)
    draws = gen.normal(0.0, sigma, 1_000_000)  # same distribution the op draws from
    assert np.var(draws) == pytest.approx(2.5e8, rel=0.01)
    # spot-check the op itself against the distribution scale
    vals = np.array([alice_modulate(chunk_generator(3, 7, i), P_DEFAULT)
                     for i in range(2000)])
    assert np.var(vals) == pytest.approx(2.5e8, rel=0.15)


def test_honest_measure_requires_scheduled_ratio():
    gen = chunk_generator(0, 7, 0)
    with pytest.raises(ScheduleError, match="not part of the active schedule"):
        honest_measure(gen, P_DEFAULT, 0.0, 0.7)


def test_honest_measure_record_fields():
    gen = chunk_generator(0, 7, 1)
    rec = honest_measure(gen, P_DEFAULT, 123.0, 1.0, quadrature="P", slot_index=9)
    assert isinstance(rec, PulseRecord)
    assert rec.ratio_applied == 1.0
    assert rec.alice_quadrature == 123.0
    assert rec.quadrature_choice == "P"
    assert rec.slot_index == 9


def test_honest_session_pure_shot_noise_when_silent():
    params = SystemParams(modulation_variance=0.0, excess_noise=0.0,
                          schedule=TWO_POINT_SCHEDULE)
    batch = run_honest_session(params, 200_000, 5)
    for _, (var, n) in variances_by_ratio(batch).items():
        assert var == pytest.approx(5e7, rel=4 * math.sqrt(2 / n))


def test_honest_session_variance_and_covariance_at_full_transmission():
    params = SystemParams(schedule=AttenuationSchedule(((1.0, 1.0),)))
    batch = run_honest_session(params, 1_000_000, 6)
    var, n = variances_by_ratio(batch)[1.0]
    assert var == pytest.approx(1.6475e8, rel=0.01)
    slope = np.mean(batch.alice_x * batch.bob_y) / np.var(batch.alice_x)
    assert slope == pytest.approx(math.sqrt(0.45), rel=0.01)


def test_honest_variance_formula():
    assert honest_variance(P_DEFAULT, 1.0) == pytest.approx(0.45 * 5.1 * 5e7 + 5e7)
    params = SystemParams(detector=DetectorConfig(electronic_noise=1e6))
    assert honest_variance(params, 0.0) == pytest.approx(5e7 + 1e6)


def test_two_point_inversion_is_exact_on_population_values():
    params = SystemParams(detector=DetectorConfig(efficiency=0.6, electronic_noise=2e5),
                          channel_transmittance=0.8, excess_noise=0.3,
                          modulation_variance=4.0, lo_intensity=2e8)
    r1, r2 = 0.01, 0.9
    n0_est, xi_est = two_point_from_variances(
        honest_variance(params, r1), honest_variance(params, r2), r1, r2,
        0.6, 0.8, 2e5, 4.0)
    assert n0_est == pytest.approx(params.shot_noise_unit, rel=1e-12)
    assert xi_est == pytest.approx(0.3, rel=1e-12)


def test_two_point_degenerate_ratio_error():
    with pytest.raises(EstimationError, match="degenerate"):
        two_point_from_variances(1.0, 1.0, 0.5, 0.5, 0.5, 0.9, 0.0, 5.0)


def test_estimate_two_point_on_honest_session():
    batch = run_honest_session(P_DEFAULT, 1_000_000, 7)
    report = estimate_two_point(batch, P_DEFAULT)
    assert report.shot_noise_est == pytest.approx(5e7, rel=0.01)
    assert report.excess_noise_est == pytest.approx(0.1, abs=0.05)
    assert set(report.variance_per_ratio) == {0.001, 1.0}
    for _, n in report.variance_per_ratio.values():
        assert n >= 2


def test_estimate_two_point_needs_two_ratios():
    params = SystemParams(schedule=AttenuationSchedule(((1.0, 1.0),)))
    batch = run_honest_session(params, 1000, 8)
    with pytest.raises(EstimationError, match=">= 2 distinct ratios"):
        estimate_two_point(batch, params)


def test_estimators_are_permutation_invariant():
    batch = run_honest_session(P_DEFAULT, 4000, 9)
    perm = np.random.default_rng(0).permutation(len(batch))
    shuffled = RecordBatch(batch.slot[perm], batch.quad[perm], batch.ratio[perm],
                           batch.alice_x[perm], batch.bob_y[perm])
    a = estimate_two_point(batch, P_DEFAULT)
    b = estimate_two_point(shuffled, P_DEFAULT)
    assert a.shot_noise_est == pytest.approx(b.shot_noise_est, rel=1e-12)
    assert a.excess_noise_est == pytest.approx(b.excess_noise_est, rel=1e-12)


def test_estimate_covariance_transmittance_honest():
    params = SystemParams(schedule=AttenuationSchedule(((1.0, 0.9), (0.001, 0.1))))
    batch = run_honest_session(params, 1_000_000, 10)
    assert estimate_covariance_transmittance(batch, params) == pytest.approx(0.9, rel=0.02)


def test_estimate_covariance_transmittance_errors():
    params = SystemParams(schedule=AttenuationSchedule(((0.5, 1.0),)))
    batch = run_honest_session(params, 1000, 11)
    with pytest.raises(EstimationError, match="ratio 1"):
        estimate_covariance_transmittance(batch, params)
    silent = SystemParams(modulation_variance=0.0)
    batch2 = run_honest_session(silent, 1000, 12)
    with pytest.raises(EstimationError, match="zero modulation"):
        estimate_covariance_transmittance(batch2, silent)


def test_quadrature_pooling_and_per_quadrature_split():
    batch = run_honest_session(P_DEFAULT, 400_000, 13)
    full = variances_by_ratio(batch)
    x_only = variances_by_ratio(batch, quadrature="X")
    p_only = variances_by_ratio(batch, quadrature="P")
    for r in full:
        assert full[r][1] == x_only[r][1] + p_only[r][1]
        # symmetric model: both quadratures share the same statistics
        assert x_only[r][0] == pytest.approx(p_only[r][0],
                                             rel=6 * math.sqrt(2 / min(x_only[r][1],
                                                                       p_only[r][1])))


def test_record_batch_round_trip_and_lazy_slots():
    batch = run_honest_session(P_DEFAULT, 100, 14)
    assert len(batch) == 100
    assert np.array_equal(batch.slot, np.arange(100))
    rec = batch.record(3)
    assert rec.slot_index == 3
    rebuilt = RecordBatch.from_records(list(batch))
    assert np.array_equal(rebuilt.bob_y, batch.bob_y)
    assert np.array_equal(rebuilt.quad, batch.quad)


def test_monte_carlo_convergence_rate():
    # doubling the slot count shrinks the estimator spread by about sqrt(2)
    def spreads(slots):
        ests = []
        for seed in range(64):
            batch = run_honest_session(P_DEFAULT, slots, 1000 + seed)
            ests.append(estimate_two_point(batch, P_DEFAULT).shot_noise_est)
        return np.std(ests)

    ratio = spreads(20_000) / spreads(40_000)
    assert math.sqrt(2) * 0.8 <= ratio <= math.sqrt(2) * 1.2
