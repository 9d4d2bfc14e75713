"""Alternating joint-precoding loop: rho -> xi -> W -> varpi -> theta.

Each outer iteration refreshes the Lagrangian auxiliary rho (equal to the
current SINRs), solves the active QCQP for the precoder, then refreshes the
passive auxiliary and solves for the reflection vector.  Every step
maximizes a block of the same decoupled objective, so the weighted
sum-rate trace is nondecreasing up to numerical slack.  With no RIS the
passive steps are skipped and the loop reduces to cell-free-only
precoding.

In unit-modulus mode the relaxed phase solution is pushed to the unit
circle each iteration; the projected point is kept only when it does not
lower the passive surrogate, which preserves the monotone trace.

The relaxed mode carries an escape heuristic against amplitude-collapsed
fixed points (interior reflection magnitudes that the surrogate keeps
self-consistently small): on convergence, the circle projection of the
phases -- feasible in the relaxed set -- is evaluated with a re-optimized
precoder and adopted only if the true weighted sum-rate strictly improves,
in which case the loop continues.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .channels import ChannelSet, ScenarioConfig
from .fp import (AuxState, build_active_quadratic, build_passive_quadratic,
                 lagrangian_value, mu_weights, update_rho, update_varpi, update_xi)
from .metrics import (MODE_RELAXED, MODE_UNIT_MODULUS, EffectiveChannel, PhaseConfig,
                      Precoder, effective_channel, per_bs_power, wsr)
from .solvers import SolverFailure, SolverOptions, solve_active, solve_passive


@dataclass
class OptimizerOptions:
    max_outer_iterations: int = 100
    wsr_relative_tolerance: float = 1e-4
    phase_mode: str = MODE_RELAXED
    active_solver: SolverOptions = field(
        default_factory=lambda: SolverOptions(max_iterations=100, kkt_tolerance=1e-9))
    passive_solver: SolverOptions = field(
        default_factory=lambda: SolverOptions(max_iterations=200000, kkt_tolerance=1e-5))
    trace: bool = False

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        if self.wsr_relative_tolerance <= 0:
            raise ValueError("wsr_relative_tolerance must be > 0")


@dataclass
class IterationRecord:
    """Per-iteration diagnostics emitted when tracing is enabled.

    The surrogate fields hold the decoupled objective after each update
    step; the xi and varpi steps do not change it by construction.
    """

    iteration: int
    wsr: float
    surrogate_after_rho: float
    surrogate_after_xi: float
    surrogate_after_active: float
    surrogate_after_varpi: float
    surrogate_after_passive: float
    per_bs_power: np.ndarray
    active_iterations: int
    passive_iterations: int


@dataclass
class OptimizationResult:
    phases: PhaseConfig
    precoder: Precoder
    wsr_trace: np.ndarray
    iterations_used: int
    converged: bool
    aux: AuxState
    records: list[IterationRecord] | None = None


class OptimizerFailure(RuntimeError):
    """A subsolver failed inside the loop; carries the partial trace."""

    def __init__(self, message, wsr_trace, records=None):
        super().__init__(message)
        self.wsr_trace = np.asarray(wsr_trace, dtype=float)
        self.records = records


def initialize(config: ScenarioConfig, rng: np.random.Generator,
               mode: str = MODE_RELAXED) -> tuple[PhaseConfig, Precoder]:
    """Random reflection coefficients plus an equal-magnitude full-power precoder.

    Draw order: theta first (radius for the relaxed set, then angles),
    then the precoder phases.  Every BS starts exactly at its budget.
    """
    rn = config.num_ris * config.ris_elements
    if mode == MODE_RELAXED:
        radii = np.sqrt(rng.uniform(size=rn))
        theta = radii * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=rn))
    elif mode == MODE_UNIT_MODULUS:
        theta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=rn))
    else:
        raise ValueError(f"unknown phase mode {mode!r}")

    p_n, k_n = config.num_subcarriers, config.num_users
    b_n, m = config.num_bs, config.bs_antennas
    budget = config.power_budget()
    w = np.empty((p_n, k_n, b_n * m), dtype=complex)
    for b in range(b_n):
        mag = np.sqrt(budget[b] / (p_n * k_n * m))
        angles = rng.uniform(0.0, 2.0 * np.pi, size=(p_n, k_n, m))
        w[:, :, b * m:(b + 1) * m] = mag * np.exp(1j * angles)
    return PhaseConfig(theta, mode), Precoder(w, num_bs=b_n)


def _try_circle_escape(channels, phases, precoder, h, warm_duals, current_wsr,
                       sigma2, weights, budget, opts):
    """Candidate jump out of an amplitude-collapsed relaxed fixed point.

    Evaluates the unit-circle projection of the phases (feasible in the
    relaxed set) with a precoder re-optimized for that channel; adopts the
    pair only when the true weighted sum-rate strictly improves.
    """
    from .solvers import unit_modulus_projection

    candidate = PhaseConfig(unit_modulus_projection(phases.theta), MODE_RELAXED)
    h_c = effective_channel(channels, candidate)
    rho_c = np.maximum(update_rho(h_c, precoder, sigma2), 0.0)
    mu_c = mu_weights(rho_c, weights)
    xi_c = update_xi(h_c, precoder, mu_c, sigma2)
    quad_c = build_active_quadratic(h_c, xi_c, mu_c, sigma2)
    try:
        refit = solve_active(quad_c, budget, warm_start=precoder,
                             options=opts.active_solver, warm_duals=warm_duals)
    except SolverFailure:
        return False, phases, precoder, h, warm_duals
    improved = wsr(h_c, refit.precoder, sigma2, weights)
    if improved > current_wsr + 1e-9 * max(1.0, current_wsr):
        return True, candidate, refit.precoder, h_c, refit.duals
    return False, phases, precoder, h, warm_duals


def run(config: ScenarioConfig, channels: ChannelSet,
        options: OptimizerOptions | None = None,
        rng: np.random.Generator | None = None,
        initial_state: tuple[PhaseConfig, Precoder] | None = None) -> OptimizationResult:
    """Run the alternating loop until the relative WSR change falls below tolerance.

    ``initial_state`` replaces the random initialization with a given
    feasible (phases, precoder) pair, e.g. to refine another run's solution.
    """
    opts = options or OptimizerOptions()
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    sigma2 = config.noise_power
    weights = config.weights()
    budget = config.power_budget()
    has_ris = channels.num_ris > 0 and channels.ris_elements > 0

    if initial_state is None:
        phases, precoder = initialize(config, rng, opts.phase_mode)
    else:
        phases, precoder = initial_state
    h = effective_channel(channels, phases)

    wsr_trace: list[float] = []
    records: list[IterationRecord] = [] if opts.trace else None
    aux = AuxState(rho=np.zeros((config.num_users, config.num_subcarriers)),
                   xi=np.zeros((config.num_users, config.num_subcarriers,
                                config.user_antennas), dtype=complex),
                   varpi=np.zeros((config.num_users, config.num_subcarriers,
                                   config.user_antennas), dtype=complex))
    converged = False
    iterations = 0
    warm_duals = None
    escapes_left = 6

    def _surrogate(h_now: EffectiveChannel, prec: Precoder) -> float:
        return lagrangian_value(h_now, prec, aux.rho, sigma2, weights)

    for iterations in range(1, opts.max_outer_iterations + 1):
        # rho update; clamp tiny negative numerical noise (values are SINRs)
        aux.rho = np.maximum(update_rho(h, precoder, sigma2), 0.0)
        mu = mu_weights(aux.rho, weights)
        s_rho = _surrogate(h, precoder) if opts.trace else 0.0

        # active stage
        aux.xi = update_xi(h, precoder, mu, sigma2)
        active_quad = build_active_quadratic(h, aux.xi, mu, sigma2)
        try:
            active = solve_active(active_quad, budget, warm_start=precoder,
                                  options=opts.active_solver, warm_duals=warm_duals)
        except SolverFailure as exc:
            raise OptimizerFailure(f"active solver failed at iteration {iterations}: {exc}",
                                   wsr_trace, records) from exc
        precoder = active.precoder
        warm_duals = active.duals
        s_active = _surrogate(h, precoder) if opts.trace else 0.0

        # passive stage (skipped entirely without RIS elements)
        passive_iterations = 0
        if has_ris:
            aux.varpi = update_varpi(channels, phases, precoder, mu, sigma2)
            passive_quad = build_passive_quadratic(channels, precoder, aux.varpi,
                                                   mu, sigma2)
            try:
                passive = solve_passive(passive_quad, opts.phase_mode,
                                        warm_start=phases, options=opts.passive_solver)
            except SolverFailure as exc:
                raise OptimizerFailure(
                    f"passive solver failed at iteration {iterations}: {exc}",
                    wsr_trace, records) from exc
            passive_iterations = passive.iterations
            new_phases = passive.phases
            if opts.phase_mode == MODE_UNIT_MODULUS:
                # keep the previous (feasible) phases when projection hurts
                if passive_quad.value(new_phases.theta) < passive_quad.value(phases.theta):
                    new_phases = phases
            phases = new_phases
            h = effective_channel(channels, phases)
        s_passive = _surrogate(h, precoder) if opts.trace else 0.0

        current = wsr(h, precoder, sigma2, weights)
        wsr_trace.append(current)
        if opts.trace:
            records.append(IterationRecord(
                iteration=iterations, wsr=current,
                surrogate_after_rho=s_rho, surrogate_after_xi=s_rho,
                surrogate_after_active=s_active, surrogate_after_varpi=s_active,
                surrogate_after_passive=s_passive,
                per_bs_power=per_bs_power(precoder),
                active_iterations=active.iterations,
                passive_iterations=passive_iterations))

        if iterations >= 2:
            delta = abs(wsr_trace[-1] - wsr_trace[-2])
            if delta / max(wsr_trace[-1], 1.0) < opts.wsr_relative_tolerance:
                if (has_ris and opts.phase_mode == MODE_RELAXED and escapes_left > 0):
                    escapes_left -= 1
                    escaped, phases, precoder, h, warm_duals = _try_circle_escape(
                        channels, phases, precoder, h, warm_duals, current,
                        sigma2, weights, budget, opts)
                    if escaped:
                        continue
                converged = True
                break

    return OptimizationResult(phases=phases, precoder=precoder,
                              wsr_trace=np.asarray(wsr_trace),
                              iterations_used=iterations, converged=converged,
                              aux=aux, records=records)
