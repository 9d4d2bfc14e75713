import numpy as np
import pytest

from ris_cellfree.channels import ScenarioConfig, build_scenario
from ris_cellfree.metrics import (MODE_RELAXED, MODE_UNIT_MODULUS, PhaseConfig,
                                  Precoder, effective_channel, per_bs_power, wsr)
from ris_cellfree.optimizer import (OptimizerFailure, OptimizerOptions, initialize,
                                    run)
from ris_cellfree.solvers import SolverOptions


def tiny_config(seed, **overrides):
    base = dict(num_bs=2, num_ris=1, num_users=2, num_subcarriers=2,
                bs_antennas=2, user_antennas=2, ris_elements=3,
                bs_positions=((0.0, 3.0), (0.0, -3.0)),
                ris_positions=((10.0, 2.0),),
                user_circle_center=(12.0, 0.0), user_circle_radius=1.0,
                max_power=1.0, noise_power=1e-3, rng_seed=seed)
    base.update(overrides)
    return ScenarioConfig(**base)


class TestInitialize:
    def test_every_bs_starts_at_its_budget(self):
        config = tiny_config(0, max_power=(0.6, 1.7))
        _, prec = initialize(config, np.random.default_rng(0))
        assert per_bs_power(prec) == pytest.approx([0.6, 1.7], abs=1e-9)

    def test_relaxed_phases_inside_unit_disk(self):
        config = tiny_config(1)
        phases, _ = initialize(config, np.random.default_rng(1), MODE_RELAXED)
        assert np.abs(phases.theta).max() <= 1.0

    def test_unit_modulus_phases_on_circle(self):
        config = tiny_config(2)
        phases, _ = initialize(config, np.random.default_rng(2), MODE_UNIT_MODULUS)
        assert np.allclose(np.abs(phases.theta), 1.0)

    def test_deterministic_per_seed(self):
        config = tiny_config(3)
        a = initialize(config, np.random.default_rng(5))
        b = initialize(config, np.random.default_rng(5))
        assert np.array_equal(a[0].theta, b[0].theta)
        assert np.array_equal(a[1].w, b[1].w)

    def test_identical_entry_magnitudes_per_bs(self):
        config = tiny_config(4, max_power=(0.5, 2.0))
        _, prec = initialize(config, np.random.default_rng(7))
        for b in range(2):
            mags = np.abs(prec.block(b))
            assert np.allclose(mags, mags.flat[0])


class TestRun:
    def test_single_user_closed_form(self):
        # R=0, B=K=M=U=P=1: optimum is full power, WSR = log2(1 + P|h|^2 / sigma^2)
        config = tiny_config(5, num_bs=1, num_ris=0, num_users=1, num_subcarriers=1,
                             bs_antennas=1, user_antennas=1,
                             bs_positions=((0.0, 3.0),), ris_positions=(),
                             max_power=0.8, noise_power=1e-4)
        _, channels = build_scenario(config)
        opts = OptimizerOptions(wsr_relative_tolerance=1e-12, max_outer_iterations=50)
        result = run(config, channels, opts, np.random.default_rng(5))
        h_abs2 = float(np.abs(channels.h_direct[0, 0, 0, 0, 0]) ** 2)
        expected = np.log2(1.0 + 0.8 * h_abs2 / 1e-4)
        assert result.wsr_trace[-1] == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_trace_is_monotone(self, seed):
        config = tiny_config(seed + 10)
        _, channels = build_scenario(config)
        result = run(config, channels, OptimizerOptions(max_outer_iterations=20),
                     np.random.default_rng(seed))
        steps = np.diff(result.wsr_trace)
        assert steps.size == 0 or steps.min() >= -1e-8

    def test_final_wsr_matches_recomputation(self):
        config = tiny_config(30)
        _, channels = build_scenario(config)
        result = run(config, channels, OptimizerOptions(max_outer_iterations=15),
                     np.random.default_rng(30))
        h = effective_channel(channels, result.phases)
        recomputed = wsr(h, result.precoder, config.noise_power, config.weights())
        assert recomputed == pytest.approx(result.wsr_trace[-1], abs=1e-9)

    def test_no_ris_never_touches_phase_state(self):
        config = tiny_config(31, num_ris=0, ris_positions=())
        _, channels = build_scenario(config)
        result = run(config, channels, OptimizerOptions(max_outer_iterations=10),
                     np.random.default_rng(31))
        assert result.phases.theta.size == 0
        assert np.all(per_bs_power(result.precoder) <= config.power_budget() + 1e-9)
        assert result.wsr_trace[-1] > 0

    def test_beats_random_search_on_tiny_instance(self):
        # 1e4 random feasible (theta, W) samples lower-bound the optimum
        config = tiny_config(32, num_bs=2, num_ris=1, num_users=2, num_subcarriers=1,
                             bs_antennas=1, user_antennas=1, ris_elements=1,
                             noise_power=1e-2)
        _, channels = build_scenario(config)
        result = run(config, channels, OptimizerOptions(max_outer_iterations=60),
                     np.random.default_rng(32))

        rng = np.random.default_rng(99)
        budget = config.power_budget()
        best = 0.0
        for _ in range(10000):
            theta = np.sqrt(rng.uniform()) * np.exp(1j * rng.uniform(0, 2 * np.pi))
            phases = PhaseConfig(np.array([theta]))
            w = rng.standard_normal((1, 2, 2)) + 1j * rng.standard_normal((1, 2, 2))
            prec = Precoder(w, num_bs=2)
            powers = per_bs_power(prec)
            scale = np.sqrt(np.min(budget / np.maximum(powers, 1e-30)))
            prec = Precoder(w * scale, num_bs=2)
            h = effective_channel(channels, phases)
            best = max(best, wsr(h, prec, config.noise_power, config.weights()))
        assert result.wsr_trace[-1] >= best - 1e-6

    def test_power_feasible_after_every_run(self):
        for seed in range(4):
            config = tiny_config(seed + 40, max_power=(0.9, 1.4))
            _, channels = build_scenario(config)
            result = run(config, channels, OptimizerOptions(max_outer_iterations=8),
                         np.random.default_rng(seed))
            assert np.all(per_bs_power(result.precoder)
                          <= config.power_budget() * (1 + 1e-9))

    def test_surrogate_nondecreasing_across_steps(self):
        config = tiny_config(50)
        _, channels = build_scenario(config)
        opts = OptimizerOptions(max_outer_iterations=12, trace=True)
        result = run(config, channels, opts, np.random.default_rng(50))
        assert result.records is not None
        prev_end = None
        for rec in result.records:
            seq = [rec.surrogate_after_rho, rec.surrogate_after_xi,
                   rec.surrogate_after_active, rec.surrogate_after_varpi,
                   rec.surrogate_after_passive]
            for a, b in zip(seq, seq[1:]):
                assert b >= a - 1e-8
            # rho step maximizes over rho: surrogate equals previous WSR
            if prev_end is not None:
                assert rec.surrogate_after_rho >= prev_end - 1e-8
            prev_end = rec.surrogate_after_passive

    def test_unit_modulus_mode_monotone_and_on_circle(self):
        config = tiny_config(60)
        _, channels = build_scenario(config)
        opts = OptimizerOptions(max_outer_iterations=15,
                                phase_mode=MODE_UNIT_MODULUS)
        result = run(config, channels, opts, np.random.default_rng(60))
        assert np.allclose(np.abs(result.phases.theta), 1.0, atol=1e-12)
        steps = np.diff(result.wsr_trace)
        assert steps.size == 0 or steps.min() >= -1e-8

    def test_converged_flag_and_iteration_count(self):
        config = tiny_config(70)
        _, channels = build_scenario(config)
        result = run(config, channels,
                     OptimizerOptions(max_outer_iterations=100,
                                      wsr_relative_tolerance=1e-3),
                     np.random.default_rng(70))
        assert result.converged
        assert result.iterations_used == result.wsr_trace.size
        assert result.iterations_used < 100

    def test_subsolver_failure_propagates_partial_trace(self):
        config = tiny_config(80)
        _, channels = build_scenario(config)
        opts = OptimizerOptions(
            max_outer_iterations=10,
            active_solver=SolverOptions(max_iterations=1, kkt_tolerance=1e-300))
        with pytest.raises(OptimizerFailure) as excinfo:
            run(config, channels, opts, np.random.default_rng(80))
        assert hasattr(excinfo.value, "wsr_trace")


class TestOptions:
    def test_validation(self):
        with pytest.raises(ValueError):
            OptimizerOptions(max_outer_iterations=0)
        with pytest.raises(ValueError):
            OptimizerOptions(wsr_relative_tolerance=0.0)
