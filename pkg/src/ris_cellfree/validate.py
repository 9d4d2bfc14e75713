"""Quick invariant suite over tiny random instances, exposed via the CLI.

These are self-consistency checks of the library (transform identities,
quadratic-form equivalence, monotone traces, feasibility); the test suite
additionally verifies the same quantities against independent
definition-level oracles.
"""

from __future__ import annotations

import numpy as np

from .channels import ScenarioConfig, build_scenario
from .fp import (active_objective, active_surrogate, build_active_quadratic,
                 build_passive_quadratic, lagrangian_value, mu_weights,
                 passive_objective, passive_surrogate, update_rho, update_varpi,
                 update_xi)
from .metrics import (MODE_RELAXED, MODE_UNIT_MODULUS, PhaseConfig, Precoder,
                      effective_channel, per_bs_power, wsr)
from .optimizer import OptimizerOptions, initialize, run


def _tiny_config(seed: int) -> ScenarioConfig:
    return ScenarioConfig(num_bs=2, num_ris=1, num_users=2, num_subcarriers=2,
                          bs_antennas=2, user_antennas=2, ris_elements=3,
                          max_power=1.0, noise_power=1e-2,
                          user_circle_center=(12.0, 0.0), user_circle_radius=1.0,
                          bs_positions=((0.0, 3.0), (0.0, -3.0)),
                          ris_positions=((10.0, 2.0),),
                          rng_seed=seed)


def _random_state(config: ScenarioConfig, seed: int):
    rng = np.random.default_rng(seed)
    _, channels = build_scenario(config)
    rn = config.num_ris * config.ris_elements
    theta = 0.9 * np.sqrt(rng.uniform(size=rn)) * np.exp(1j * rng.uniform(0, 2 * np.pi, rn))
    phases = PhaseConfig(theta, MODE_RELAXED)
    shape = (config.num_subcarriers, config.num_users,
             config.num_bs * config.bs_antennas)
    w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    precoder = Precoder(w, config.num_bs)
    scale = np.sqrt(config.power_budget().min() / max(per_bs_power(precoder).max(), 1e-30))
    precoder = Precoder(w * scale, config.num_bs)
    return channels, phases, precoder


def _check_fp_identities(seed: int):
    config = _tiny_config(seed)
    channels, phases, precoder = _random_state(config, seed + 1)
    h = effective_channel(channels, phases)
    sigma2, weights = config.noise_power, config.weights()

    rho = update_rho(h, precoder, sigma2)
    target = wsr(h, precoder, sigma2, weights)
    lag = lagrangian_value(h, precoder, rho, sigma2, weights)
    err1 = abs(lag - target) / max(abs(target), 1e-12)

    mu = mu_weights(rho, weights)
    xi = update_xi(h, precoder, mu, sigma2)
    g1 = active_objective(h, precoder, mu, sigma2)
    g2 = active_surrogate(h, precoder, xi, mu, sigma2)
    err2 = abs(g2 - g1) / max(abs(g1), 1e-12)

    varpi = update_varpi(channels, phases, precoder, mu, sigma2)
    g4 = passive_objective(channels, phases, precoder, mu, sigma2)
    g5 = passive_surrogate(channels, phases, precoder, varpi, mu, sigma2)
    err3 = abs(g5 - g4) / max(abs(g4), 1e-12)

    worst = max(err1, err2, err3)
    return worst <= 1e-9, f"max relative identity error {worst:.2e}"


def _check_quadratic_consistency(seed: int):
    config = _tiny_config(seed)
    channels, phases, precoder = _random_state(config, seed + 2)
    h = effective_channel(channels, phases)
    sigma2, weights = config.noise_power, config.weights()
    rng = np.random.default_rng(seed + 3)

    rho = update_rho(h, precoder, sigma2)
    mu = mu_weights(rho, weights)
    xi = update_xi(h, precoder, mu, sigma2)
    quad = build_active_quadratic(h, xi, mu, sigma2)
    w_probe = Precoder(rng.standard_normal(precoder.w.shape)
                       + 1j * rng.standard_normal(precoder.w.shape), config.num_bs)
    g2 = active_surrogate(h, w_probe, xi, mu, sigma2)
    g3 = quad.value(w_probe)
    err_a = abs(g3 - g2) / max(abs(g2), 1.0)

    varpi = update_varpi(channels, phases, precoder, mu, sigma2)
    pquad = build_passive_quadratic(channels, precoder, varpi, mu, sigma2)
    rn = config.num_ris * config.ris_elements
    theta_probe = np.sqrt(rng.uniform(size=rn)) * np.exp(1j * rng.uniform(0, 2 * np.pi, rn))
    probe = PhaseConfig(theta_probe, MODE_RELAXED)
    g5 = passive_surrogate(channels, probe, precoder, varpi, mu, sigma2)
    g6 = pquad.value(theta_probe)
    err_p = abs(g6 - g5) / max(abs(g5), 1.0)

    worst = max(err_a, err_p)
    return worst <= 1e-10, f"max quadratic-form mismatch {worst:.2e}"


def _check_monotone_run(seed: int):
    config = _tiny_config(seed)
    _, channels = build_scenario(config)
    result = run(config, channels, OptimizerOptions(max_outer_iterations=25),
                 np.random.default_rng(seed))
    trace = result.wsr_trace
    drops = np.min(np.diff(trace)) if trace.size > 1 else 0.0
    feas = per_bs_power(result.precoder) - config.power_budget()
    ok = drops >= -1e-8 and np.all(feas <= 1e-9)
    return ok, f"min trace step {drops:.2e}, max power excess {feas.max():.2e}"


def _check_unit_modulus_run(seed: int):
    config = _tiny_config(seed)
    _, channels = build_scenario(config)
    opts = OptimizerOptions(max_outer_iterations=25, phase_mode=MODE_UNIT_MODULUS)
    result = run(config, channels, opts, np.random.default_rng(seed))
    mags = np.abs(result.phases.theta)
    trace = result.wsr_trace
    drops = np.min(np.diff(trace)) if trace.size > 1 else 0.0
    ok = np.allclose(mags, 1.0, atol=1e-12) and drops >= -1e-8
    return ok, f"|theta| range [{mags.min():.12f}, {mags.max():.12f}], min step {drops:.2e}"


def _check_initial_power(seed: int):
    config = _tiny_config(seed)
    _, precoder = initialize(config, np.random.default_rng(seed))
    gap = np.abs(per_bs_power(precoder) - config.power_budget()).max()
    return gap <= 1e-9, f"max |power - budget| = {gap:.2e}"


def _check_channel_determinism(seed: int):
    config = _tiny_config(seed)
    _, first = build_scenario(config)
    _, second = build_scenario(config)
    same = (np.array_equal(first.h_direct, second.h_direct)
            and np.array_equal(first.g_bs_ris, second.g_bs_ris)
            and np.array_equal(first.f_ris_user, second.f_ris_user))
    return same, "bit-identical channel tensors" if same else "channel tensors differ"


def run_validation(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run every check; returns (name, passed, detail) triples."""
    checks = [
        ("channel determinism", _check_channel_determinism),
        ("initial per-BS power at budget", _check_initial_power),
        ("transform identities (rho/xi/varpi)", _check_fp_identities),
        ("quadratic-form consistency", _check_quadratic_consistency),
        ("monotone trace and feasibility", _check_monotone_run),
        ("unit-modulus mode", _check_unit_modulus_run),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn(seed)
        except Exception as exc:   # a crash is a failed check, not a crash of the suite
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
