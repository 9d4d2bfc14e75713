"""Joint active/passive precoding simulator for wideband RIS-aided cell-free networks."""

from .channels import (ChannelSet, ScenarioConfig, build_scenario, generate_channels,
                       path_gain_db, place_users, sample_los, sample_rayleigh)
from .experiment import (ExperimentSpec, SweepRecord, emit_results, parse_config,
                         parse_records, run_sweep)
from .fp import (ActiveQuadratic, AuxState, PassiveQuadratic, build_active_quadratic,
                 build_passive_quadratic, f_kp, q_func, update_rho, update_varpi,
                 update_xi)
from .metrics import (MODE_RELAXED, MODE_UNIT_MODULUS, EffectiveChannel, PhaseConfig,
                      Precoder, effective_channel, per_bs_power, sinr, wsr)
from .optimizer import (OptimizationResult, OptimizerFailure, OptimizerOptions,
                        initialize, run)
from .solvers import (SolverFailure, SolverOptions, kkt_residual_active, solve_active,
                      solve_passive)

__version__ = "0.1.0"
