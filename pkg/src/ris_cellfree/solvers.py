"""In-repo solvers for the two convex precoding subproblems.

Active stage -- maximize ``-W^H A W + 2 Re{V^H W} - Y`` under per-BS power
caps.  Stationarity gives ``(a_p + sum_b lambda_b E_b) w_{p,k} = v_{p,k}``
with E_b the BS-b antenna selector, and the block power of BS b is
nonincreasing in its own dual, so the duals are located by cyclic
coordinate-wise bisection (coordinate descent on the smooth convex dual).

Passive stage -- maximize ``-theta^H L theta + 2 Re{theta^H nu} - zeta``
over per-element unit disks by projected gradient ascent with step 1/L,
L estimated by power iteration.  The unit-modulus variant solves the
relaxed problem, then pushes every entry to the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .fp import ActiveQuadratic, PassiveQuadratic
from .metrics import MODE_RELAXED, MODE_UNIT_MODULUS, PhaseConfig, Precoder, per_bs_power


class SolverFailure(RuntimeError):
    """Raised when a subsolver exhausts its iteration budget; carries the last iterate."""

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass
class SolverOptions:
    max_iterations: int = 200
    kkt_tolerance: float = 1e-8
    dual_bisection_tolerance: float = 1e-12
    step_shrink: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.kkt_tolerance <= 0 or self.dual_bisection_tolerance <= 0:
            raise ValueError("tolerances must be > 0")
        if not 0.0 < self.step_shrink < 1.0:
            raise ValueError("step_shrink must lie in (0, 1)")


@dataclass
class ActiveSolution:
    precoder: Precoder
    duals: np.ndarray
    iterations: int
    residual: float


@dataclass
class PassiveSolution:
    phases: PhaseConfig
    iterations: int
    residual: float
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _require_psd(mat: np.ndarray, name: str) -> None:
    if mat.size == 0:
        return
    scale = max(1.0, float(np.max(np.abs(np.diagonal(mat)))))
    min_eig = float(np.linalg.eigvalsh(mat).min())
    if min_eig < -1e-8 * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {min_eig:.3e})")


# ---------------------------------------------------------------------------
# Active subproblem
# ---------------------------------------------------------------------------

class _ActiveSystem:
    """Stationarity solves for one subcarrier, in a basis adapted to range(a_p).

    The Gram block is generically rank deficient (rank at most K while the
    stacked dimension is B*M), and the null directions matter: they carry
    transmit power between BSs at zero objective cost, so the solution of
    ``(a_p + sum_b lambda_b E_b) w = v`` acquires macroscopic null
    components whenever the duals differ across BSs.  Two measures keep
    this well behaved:

    * all systems are solved in the eigenbasis of a_p with the null block
      eliminated symbolically, so conditioning is governed by genuine
      spectral ratios instead of scale(a)/lambda (which reaches 1e16+ near
      the outer loop's fixed point and would amplify assembly noise into
      garbage power);
    * a ridge of ``ridge_rel * smax(a_p)`` regularizes the objective.
      Without it the dual function is nonsmooth on the cone where duals
      vanish (the inner sup over null components is multi-valued there)
      and cyclic coordinate descent can jam chasing a corner; the ridge
      makes the inner problem strictly concave and the dual smooth.  The
      induced stationarity bias is ~ridge_rel, orders below the solver
      tolerance actually certified.
    """

    def __init__(self, a_p: np.ndarray, v_p: np.ndarray, num_bs: int,
                 rank_floor: float = 1e-13, ridge_rel: float = 1e-12):
        bm = a_p.shape[0]
        m = bm // num_bs
        eig, basis = np.linalg.eigh(a_p)
        scale = max(float(eig[-1]), 0.0) if bm else 0.0
        floor = rank_floor * max(scale, 1e-300)
        span = eig > floor
        self.a_p = a_p
        self.v_p = v_p
        self.block_size = m
        self.scale = scale
        self.ridge = ridge_rel * scale
        self.s_range = eig[span]                     # (r,)
        self.q_range = basis[:, span]                # (BM, r)
        self.q_null = basis[:, ~span]                # (BM, n)
        self.v_range = self.q_range.conj().T @ v_p.T   # (r, K)
        v_null = self.q_null.conj().T @ v_p.T          # (n, K)
        # linear terms of Gram-built quadratics lie in range(a_p) exactly;
        # anything this small in the null block is assembly rounding
        if np.linalg.norm(v_null) <= 1e-8 * max(np.linalg.norm(v_p), 1e-300):
            v_null = np.zeros_like(v_null)
        self.v_null = v_null
        # per-BS overlap blocks Q^H E_b Q, split by range/null columns
        self.overlap_rr = []
        self.overlap_rn = []
        self.overlap_nn = []
        for b in range(num_bs):
            rows_r = self.q_range[b * m:(b + 1) * m, :]
            rows_n = self.q_null[b * m:(b + 1) * m, :]
            self.overlap_rr.append(rows_r.conj().T @ rows_r)
            self.overlap_rn.append(rows_r.conj().T @ rows_n)
            self.overlap_nn.append(rows_n.conj().T @ rows_n)

    @staticmethod
    def _scaled_solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """HPD solve with Jacobi (diagonal) scaling; near-optimal conditioning
        for the strongly graded matrices that arise at high SINR."""
        d = np.sqrt(np.maximum(np.diagonal(mat).real, 1e-300))
        scaled = mat / np.outer(d, d)
        return np.linalg.solve(scaled, rhs / d[:, None]) / d[:, None]

    def solve(self, duals: np.ndarray) -> np.ndarray:
        """Per-user stationary vectors of the ridged system, as (K, BM)."""
        # dominant duals regime: the plainly scaled dense system is benign
        # (condition <= 1 + scale/lambda), while the range/null elimination
        # would suffer eps*lambda cancellation against the small Gram scale
        if duals.size and duals.max() > 1e-3 * self.scale:
            shift = np.repeat(duals, self.block_size) + max(self.ridge, 1e-300)
            lhs = self.a_p + np.diag(shift)
            return self._scaled_solve(lhs, self.v_p.T).T

        r = self.s_range.size
        n = self.q_null.shape[1]
        eps = max(self.ridge, 1e-300)
        d_rr = sum(lam * o for lam, o in zip(duals, self.overlap_rr))
        if n == 0:
            lhs = np.diag(self.s_range + eps) + d_rr
            sol = self._scaled_solve(lhs, self.v_range)
            return (self.q_range @ sol).T

        d_rn = sum(lam * o for lam, o in zip(duals, self.overlap_rn))
        d_nn = sum(lam * o for lam, o in zip(duals, self.overlap_nn))
        t_block = d_nn + eps * np.eye(n)
        if r == 0:
            sol_n = self._scaled_solve(t_block, self.v_null)
            return (self.q_null @ sol_n).T
        t_inv_vn = self._scaled_solve(t_block, self.v_null)
        t_inv_dnr = self._scaled_solve(t_block, d_rn.conj().T)
        schur = np.diag(self.s_range + eps) + d_rr - d_rn @ t_inv_dnr
        sol_r = self._scaled_solve(schur, self.v_range - d_rn @ t_inv_vn)
        sol_n = t_inv_vn - t_inv_dnr @ sol_r
        return (self.q_range @ sol_r + self.q_null @ sol_n).T


def _build_systems(quad: ActiveQuadratic, num_bs: int) -> list:
    return [_ActiveSystem(quad.a[p], quad.v[p], num_bs)
            for p in range(quad.a.shape[0])]


def _stationary_precoder(systems: list, duals: np.ndarray) -> np.ndarray:
    """Stack the per-subcarrier stationarity solves."""
    return np.stack([system.solve(duals) for system in systems])


def _block_power(w: np.ndarray, num_bs: int, b: int) -> float:
    m = w.shape[2] // num_bs
    return float(np.sum(np.abs(w[:, :, b * m:(b + 1) * m]) ** 2))


def _power_at(systems, duals, num_bs, b):
    return _block_power(_stationary_precoder(systems, duals), num_bs, b)


def _complementary_duals(systems, duals, p_max, num_bs, opts, level) -> None:
    """Set ``duals[level:]`` to mutually complementary values, in place.

    Nested coordinate-wise bisection: every probe of the dual at this level
    first re-solves all inner levels to complementarity.  By the envelope
    theorem the probed power is then the (negated) derivative of the
    partially minimized convex dual function, hence nonincreasing in this
    level's dual, which makes plain bisection exact -- including when
    several budgets bind and couple strongly, where one-level-at-a-time
    sweeps crawl.
    """
    if level >= num_bs:
        return
    hint = duals[level]
    budget = p_max[level]

    def power_at(lam: float) -> float:
        duals[level] = lam
        _complementary_duals(systems, duals, p_max, num_bs, opts, level + 1)
        return _power_at(systems, duals, num_bs, level)

    if power_at(0.0) <= budget * (1.0 + 1e-12):
        return
    lo = 0.0
    hi = max(hint, 1.0)
    while power_at(hi) > budget:
        lo = hi
        hi *= 2.0
        if hi > 1e30:
            raise SolverFailure(f"dual bisection for BS {level} failed to bracket "
                                "the budget")
    for _ in range(opts.max_iterations):
        if hi - lo <= opts.dual_bisection_tolerance * hi:
            break
        mid = 0.5 * (lo + hi)
        if power_at(mid) > budget:
            lo = mid
        else:
            hi = mid
    power_at(hi)       # leave this level on the feasible side, inner levels consistent


def kkt_residual_active(precoder: Precoder, quad: ActiveQuadratic, p_max,
                        duals) -> float:
    """Max of normalized stationarity, primal infeasibility and slackness violations.

    Every term is scale-free: stationarity as a per-subcarrier backward
    error (all streams share the Gram block and its assembly noise, which
    bounds what any solver can attain), power gaps against the budget, and
    complementary slackness in duality-gap units -- ``lambda_b * |gap_b|``
    measures that constraint's contribution to the primal-dual gap, so it
    is normalized by the objective scale.
    """
    p_max = np.asarray(p_max, dtype=float)
    duals = np.asarray(duals, dtype=float)
    if np.any(duals < 0):
        raise ValueError("duals must be nonnegative")
    p_n, k_n, bm = quad.v.shape
    m = bm // p_max.size
    shift = np.repeat(duals, m)

    stationarity = 0.0
    for p in range(p_n):
        a_shift = quad.a[p] + np.diag(shift)
        a_scale = float(np.abs(a_shift).max()) if a_shift.size else 0.0
        err = np.linalg.norm(a_shift @ precoder.w[p].T - quad.v[p].T)
        denom = max(1.0, np.linalg.norm(quad.v[p])
                    + a_scale * np.linalg.norm(precoder.w[p]))
        stationarity = max(stationarity, err / denom)

    powers = per_bs_power(precoder)
    objective_scale = max(1.0, abs(quad.value(precoder)), float(duals @ p_max))
    infeasibility = 0.0
    slackness = 0.0
    for b in range(p_max.size):
        gap = powers[b] - p_max[b]
        infeasibility = max(infeasibility, max(0.0, gap) / max(1.0, p_max[b]))
        slackness = max(slackness, duals[b] * abs(gap) / objective_scale)
    return max(stationarity, infeasibility, slackness)


def solve_active(quad: ActiveQuadratic, p_max, warm_start: Precoder | None = None,
                 options: SolverOptions | None = None,
                 warm_duals=None) -> ActiveSolution:
    """Globally solve the active QCQP by nested coordinate-wise dual bisection.

    ``warm_duals`` (e.g. from the previous outer iteration) seeds the
    bisection brackets; the duals themselves are re-derived from scratch.
    """
    opts = options or SolverOptions()
    p_max = np.asarray(p_max, dtype=float)
    if np.any(p_max <= 0):
        raise ValueError("power budgets must be > 0")
    num_bs = p_max.size
    for p in range(quad.a.shape[0]):
        _require_psd(quad.a[p], f"active quadratic block a[{p}]")
    systems = _build_systems(quad, num_bs)

    duals = (np.asarray(warm_duals, dtype=float).copy() if warm_duals is not None
             else np.zeros(num_bs))
    attempts = [duals, np.zeros(num_bs)] if warm_duals is not None else [duals]
    last = warm_start
    evaluations = 0
    for attempt in attempts:
        duals = attempt
        _complementary_duals(systems, duals, p_max, num_bs, opts, 0)
        w = _stationary_precoder(systems, duals)
        last = Precoder(w, num_bs)
        residual = kkt_residual_active(last, quad, p_max, duals)
        evaluations += 1
        # the returned precoder must respect the budgets outright, not just
        # within the KKT tolerance
        feasible = np.all(per_bs_power(last) <= p_max * (1.0 + 1e-10))
        if residual <= opts.kkt_tolerance and feasible:
            return ActiveSolution(precoder=last, duals=duals.copy(),
                                  iterations=evaluations, residual=residual)
    raise SolverFailure("active solver did not meet the KKT tolerance",
                        last_iterate=last)


# ---------------------------------------------------------------------------
# Passive subproblem
# ---------------------------------------------------------------------------

def estimate_curvature(lam: np.ndarray, iterations: int = 50, tol: float = 1e-6) -> float:
    """Largest eigenvalue of the PSD matrix via power iteration (deterministic start)."""
    n = lam.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.default_rng(0)
    vec = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    vec /= np.linalg.norm(vec)
    prev = 0.0
    for _ in range(iterations):
        nxt = lam @ vec
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            return 0.0
        vec = nxt / norm
        est = float((vec.conj() @ (lam @ vec)).real)
        if abs(est - prev) <= tol * max(1.0, abs(est)):
            prev = est
            break
        prev = est
    return max(prev, 0.0)


def project_unit_disk(theta: np.ndarray) -> np.ndarray:
    """Clamp every entry to the closed unit disk, preserving its phase."""
    mag = np.abs(theta)
    scale = np.where(mag > 1.0, 1.0 / np.maximum(mag, 1e-300), 1.0)
    return theta * scale


def unit_modulus_projection(theta: np.ndarray) -> np.ndarray:
    """Push entries to the unit circle; exact zeros map to 1."""
    mag = np.abs(theta)
    out = np.where(mag > 1e-15, theta / np.maximum(mag, 1e-300), 1.0 + 0.0j)
    return out.astype(complex)


def passive_residual(quad: PassiveQuadratic, theta: np.ndarray,
                     curvature: float | None = None) -> float:
    """Scale-free gradient-mapping norm of the relaxed passive problem."""
    theta = np.asarray(theta, dtype=complex).reshape(-1)
    if theta.size == 0:
        return 0.0
    lip = estimate_curvature(quad.lam) if curvature is None else curvature
    grad = quad.nu - quad.lam @ theta
    if lip <= 0.0:
        moved = project_unit_disk(theta + grad) - theta     # linear objective
        return float(np.linalg.norm(moved)) / max(1.0, float(np.linalg.norm(quad.nu)))
    moved = project_unit_disk(theta + grad / lip) - theta
    return lip * float(np.linalg.norm(moved)) / max(1.0, float(np.linalg.norm(quad.nu)))


def _coordinate_sweep_numpy(lam, nu, diag, theta):
    """One cyclic pass of exact per-element maximization (Gauss-Seidel)."""
    rn = theta.size
    for n in range(rn):
        pull = nu[n] - (lam[n] @ theta - diag[n] * theta[n])
        if diag[n] <= 1e-300:
            mag = abs(pull)
            theta[n] = pull / mag if mag > 0.0 else 0.0
            continue
        cand = pull / diag[n]
        mag = abs(cand)
        theta[n] = cand if mag <= 1.0 else cand / mag
    return theta


try:       # optional jit of the hot sweep kernel; semantics match the fallback
    from numba import njit as _njit

    @_njit(cache=True)
    def _coordinate_sweep_jit(lam, nu, diag, theta):   # pragma: no cover
        rn = theta.size
        for n in range(rn):
            pull = nu[n]
            for m in range(rn):
                if m != n:
                    pull -= lam[n, m] * theta[m]
            if diag[n] <= 1e-300:
                mag = abs(pull)
                theta[n] = pull / mag if mag > 0.0 else 0.0
            else:
                cand = pull / diag[n]
                mag = abs(cand)
                theta[n] = cand if mag <= 1.0 else cand / mag
        return theta

    _coordinate_sweep = _coordinate_sweep_jit
except ImportError:        # pragma: no cover
    _coordinate_sweep = _coordinate_sweep_numpy


def solve_passive(quad: PassiveQuadratic, mode: str = MODE_RELAXED,
                  warm_start: PhaseConfig | None = None,
                  options: SolverOptions | None = None) -> PassiveSolution:
    """Solve the relaxed passive QCQP; optionally project onto unit modulus.

    Iterates exact cyclic coordinate ascent over the per-element disks
    (each coordinate update is a closed-form clipped solve), with Aitken
    extrapolation of the sweep map's geometric tail, and certifies the
    result by the projected-gradient residual.  Aitken jumps are accepted
    only when they do not lower the objective, so the iterate trace is
    nondecreasing by construction.
    """
    opts = options or SolverOptions()
    rn = quad.lam.shape[0]
    _require_psd(quad.lam, "passive quadratic matrix")

    if rn == 0:
        return PassiveSolution(PhaseConfig(np.zeros(0, complex), mode), 0, 0.0,
                               np.array([quad.value(np.zeros(0))]))

    theta = (project_unit_disk(warm_start.theta.copy().astype(complex))
             if warm_start is not None else np.zeros(rn, dtype=complex))
    lip = estimate_curvature(quad.lam)
    nu_scale = max(1.0, float(np.linalg.norm(quad.nu)))

    if lip <= 1e-14 * nu_scale:
        # objective is effectively linear: per-entry phase alignment is optimal
        theta = unit_modulus_projection(quad.nu)
        theta[np.abs(quad.nu) <= 1e-300] = 0.0
        if mode == MODE_UNIT_MODULUS:
            theta = unit_modulus_projection(theta)
        return PassiveSolution(PhaseConfig(theta, mode), 0, 0.0,
                               np.array([quad.value(theta)]))

    diag = np.ascontiguousarray(np.maximum(quad.lam.diagonal().real, 0.0))
    lam = np.ascontiguousarray(quad.lam)
    nu = np.ascontiguousarray(quad.nu)
    trace = [quad.value(theta)]
    residual = np.inf
    converged = False
    iterations = 0
    history = [theta.copy()]
    for iterations in range(1, opts.max_iterations + 1):
        theta = _coordinate_sweep(lam, nu, diag, theta)
        grad = nu - lam @ theta
        moved = project_unit_disk(theta + grad / lip)
        residual = lip * float(np.linalg.norm(moved - theta)) / nu_scale
        trace.append(quad.value(theta))
        if residual <= opts.kkt_tolerance:
            converged = True
            break
        # Aitken extrapolation of the sweep map; kept only when it does not
        # lose objective, so monotonicity survives
        history.append(theta.copy())
        if len(history) == 3:
            step1 = history[1] - history[0]
            step2 = history[2] - history[1]
            denom = float((step1.conj() @ step1).real)
            if denom > 0.0:
                ratio = float((step1.conj() @ step2).real) / denom
                if 0.0 < ratio < 0.9999:
                    cand = project_unit_disk(theta + step2 * ratio / (1.0 - ratio))
                    if quad.value(cand) >= trace[-1]:
                        theta = cand
                        trace[-1] = quad.value(cand)
            history = [theta.copy()]
    if not converged:
        raise SolverFailure("passive solver exceeded max_iterations without meeting "
                            "the residual tolerance",
                            last_iterate=PhaseConfig(theta, MODE_RELAXED))

    if mode == MODE_UNIT_MODULUS:
        theta = unit_modulus_projection(theta)
    return PassiveSolution(PhaseConfig(theta, mode), iterations, residual,
                           np.asarray(trace))
