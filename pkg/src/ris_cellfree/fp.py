"""Fractional-programming transforms for the alternating precoding loop.

The weighted sum-rate is first decoupled with a Lagrangian auxiliary
variable rho (one per user/subcarrier), then each of the two remaining
subproblems is turned into a concave quadratic via the multidimensional
complex quadratic transform:

* active stage:  auxiliary xi (length-U vector per (k, p)) yields a
  quadratic in the stacked precoder W with blocks ``a_p`` and linear
  terms ``v_{p,k}``;
* passive stage: auxiliary varpi yields a quadratic in the stacked
  reflection vector theta with Gram matrix Lambda, linear term nu and
  constant zeta.

All closed-form updates solve against the Hermitian positive-definite
interference-plus-noise covariance; no explicit inverse is formed.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .channels import ChannelSet
from .metrics import EffectiveChannel, PhaseConfig, Precoder, received_vectors, sinr


@dataclass
class AuxState:
    """Auxiliary variables of the alternating loop."""

    rho: np.ndarray     # (K, P) nonnegative reals
    xi: np.ndarray      # (K, P, U) complex
    varpi: np.ndarray   # (K, P, U) complex


def update_rho(h: EffectiveChannel, precoder: Precoder, noise_power: float) -> np.ndarray:
    """Optimal rho equals the current per-stream SINR."""
    k_n, p_n = h.h.shape[0], h.h.shape[1]
    rho = np.empty((k_n, p_n))
    for k in range(k_n):
        for p in range(p_n):
            rho[k, p] = sinr(h, precoder, k, p, noise_power)
    return rho


def f_kp(h: EffectiveChannel, precoder: Precoder, k: int, p: int, noise_power: float) -> float:
    """Fractional term with the full signal-plus-interference covariance.

    Equals sinr / (1 + sinr), hence lies in [0, 1).
    """
    if noise_power <= 0:
        raise ValueError("noise_power must be > 0")
    u = h.h.shape[3]
    s = received_vectors(h, precoder, k, p)
    cov = noise_power * np.eye(u, dtype=complex)
    for j in range(s.shape[0]):
        cov += np.outer(s[j], s[j].conj())
    val = s[k].conj() @ np.linalg.solve(cov, s[k])
    return float(val.real)


def lagrangian_value(h: EffectiveChannel, precoder: Precoder, rho: np.ndarray,
                     noise_power: float, weights) -> float:
    """Decoupled objective whose maximizer over rho is the SINR.

    Per stream: eta * (log2(1+rho) + ((1+rho) f_kp - rho) / ln 2).  The 1/ln2
    on the non-logarithm terms makes rho = sinr the exact stationary point of
    the rho update, and the maximum equals the weighted sum-rate.  Dropping
    the factor (a log2/ln mix) would keep the value identity at rho = sinr
    but not the maximizer property; either reading leaves the precoding
    stages unchanged since their weights are rescaled by a positive constant.
    """
    weights = np.asarray(weights, dtype=float)
    k_n, p_n = h.h.shape[0], h.h.shape[1]
    inv_ln2 = 1.0 / np.log(2.0)
    total = 0.0
    for k in range(k_n):
        for p in range(p_n):
            eta = weights[k]
            r = rho[k, p]
            frac = f_kp(h, precoder, k, p, noise_power)
            total += eta * (np.log2(1.0 + r) + ((1.0 + r) * frac - r) * inv_ln2)
    return float(total)


def mu_weights(rho: np.ndarray, weights) -> np.ndarray:
    """Stage weights mu_{k,p} = eta_k * (1 + rho_{k,p})."""
    weights = np.asarray(weights, dtype=float)
    return weights[:, None] * (1.0 + np.asarray(rho, dtype=float))


def _solve_covariance(s: np.ndarray, rhs: np.ndarray, noise_power: float) -> np.ndarray:
    """Solve (sum_j s_j s_j^H + noise * I) x = rhs for the length-U vector x."""
    u = s.shape[1]
    cov = noise_power * np.eye(u, dtype=complex)
    for j in range(s.shape[0]):
        cov += np.outer(s[j], s[j].conj())
    return np.linalg.solve(cov, rhs)


def update_xi(h: EffectiveChannel, precoder: Precoder, mu: np.ndarray,
              noise_power: float) -> np.ndarray:
    """Closed-form quadratic-transform auxiliary for the active stage."""
    k_n, p_n, _, u = h.h.shape
    xi = np.zeros((k_n, p_n, u), dtype=complex)
    for k in range(k_n):
        for p in range(p_n):
            s = received_vectors(h, precoder, k, p)
            xi[k, p] = np.sqrt(mu[k, p]) * _solve_covariance(s, s[k], noise_power)
    return xi


def active_objective(h: EffectiveChannel, precoder: Precoder, mu: np.ndarray,
                     noise_power: float) -> float:
    """Active-stage objective: sum of mu_{k,p} * f_kp."""
    k_n, p_n = h.h.shape[0], h.h.shape[1]
    return float(sum(mu[k, p] * f_kp(h, precoder, k, p, noise_power)
                     for k in range(k_n) for p in range(p_n)))


def active_surrogate(h: EffectiveChannel, precoder: Precoder, xi: np.ndarray,
                     mu: np.ndarray, noise_power: float) -> float:
    """Quadratic-transform minorant of the active objective at fixed xi."""
    k_n, p_n = h.h.shape[0], h.h.shape[1]
    total = 0.0
    for k in range(k_n):
        for p in range(p_n):
            s = received_vectors(h, precoder, k, p)
            x = xi[k, p]
            total += 2.0 * np.sqrt(mu[k, p]) * float((x.conj() @ s[k]).real)
            quad = noise_power * float((x.conj() @ x).real)
            for j in range(s.shape[0]):
                quad += abs(x.conj() @ s[j]) ** 2
            total -= quad
    return float(total)


@dataclass
class ActiveQuadratic:
    """Quadratic form of the active subproblem: -W^H A W + 2 Re{V^H W} - offset.

    ``a[p]`` is the common Hermitian PSD block shared by all users on
    subcarrier p; ``v[p, k]`` is the linear term for stream (p, k).
    """

    a: np.ndarray        # (P, BM, BM)
    v: np.ndarray        # (P, K, BM)
    offset: float        # noise-weighted constant, >= 0
    mu: np.ndarray       # (K, P) stage weights, kept for reference

    def value(self, precoder: Precoder) -> float:
        total = -self.offset
        p_n, k_n = self.v.shape[0], self.v.shape[1]
        for p in range(p_n):
            for k in range(k_n):
                w = precoder.w[p, k]
                total -= float((w.conj() @ self.a[p] @ w).real)
                total += 2.0 * float((self.v[p, k].conj() @ w).real)
        return total


def build_active_quadratic(h: EffectiveChannel, xi: np.ndarray, mu: np.ndarray,
                           noise_power: float) -> ActiveQuadratic:
    """Assemble a_p = sum_k (h xi)(h xi)^H, v_{p,k} = sqrt(mu) h xi and the constant."""
    k_n, p_n, bm, _ = h.h.shape
    a = np.zeros((p_n, bm, bm), dtype=complex)
    v = np.zeros((p_n, k_n, bm), dtype=complex)
    offset = 0.0
    for p in range(p_n):
        for k in range(k_n):
            hx = h.h[k, p] @ xi[k, p]          # (BM,)
            a[p] += np.outer(hx, hx.conj())
            v[p, k] = np.sqrt(mu[k, p]) * hx
            offset += noise_power * float(np.sum(np.abs(xi[k, p]) ** 2))
    return ActiveQuadratic(a=a, v=v, offset=offset, mu=np.array(mu, dtype=float))


def q_func(channels: ChannelSet, phases: PhaseConfig, precoder: Precoder,
           k: int, p: int, j: int) -> np.ndarray:
    """Received symbol-j signal at user k as an explicit function of theta.

    Identically equals h_{k,p}^H w_{p,j} for the matching effective channel.
    """
    b_n, m = channels.num_bs, channels.bs_antennas
    r_n, n = channels.num_ris, channels.ris_elements
    u = channels.user_antennas
    out = np.zeros(u, dtype=complex)
    f_kp_mat = channels.f_ris_user[:, k, p].reshape(r_n * n, u) if r_n else None
    for b in range(b_n):
        w_b = precoder.w[p, j, b * m:(b + 1) * m]
        out += channels.h_direct[b, k, p].conj().T @ w_b
        if r_n:
            g_b = channels.g_bs_ris[b, :, p].reshape(r_n * n, m)
            out += (f_kp_mat.conj().T * phases.theta.conj()) @ (g_b @ w_b)
    return out


def update_varpi(channels: ChannelSet, phases: PhaseConfig, precoder: Precoder,
                 mu: np.ndarray, noise_power: float) -> np.ndarray:
    """Closed-form quadratic-transform auxiliary for the passive stage."""
    k_n, p_n = channels.num_users, channels.num_subcarriers
    u = channels.user_antennas
    varpi = np.zeros((k_n, p_n, u), dtype=complex)
    for k in range(k_n):
        for p in range(p_n):
            q = np.stack([q_func(channels, phases, precoder, k, p, j)
                          for j in range(k_n)])
            varpi[k, p] = np.sqrt(mu[k, p]) * _solve_covariance(q, q[k], noise_power)
    return varpi


def passive_objective(channels: ChannelSet, phases: PhaseConfig, precoder: Precoder,
                      mu: np.ndarray, noise_power: float) -> float:
    """Passive-stage objective: sum of mu_{k,p} * f_kp at the given phases."""
    from .metrics import effective_channel

    h = effective_channel(channels, phases)
    return active_objective(h, precoder, mu, noise_power)


def passive_surrogate(channels: ChannelSet, phases: PhaseConfig, precoder: Precoder,
                      varpi: np.ndarray, mu: np.ndarray, noise_power: float) -> float:
    """Quadratic-transform minorant of the passive objective at fixed varpi."""
    k_n, p_n = channels.num_users, channels.num_subcarriers
    total = 0.0
    for k in range(k_n):
        for p in range(p_n):
            q = np.stack([q_func(channels, phases, precoder, k, p, j)
                          for j in range(k_n)])
            w = varpi[k, p]
            total += 2.0 * np.sqrt(mu[k, p]) * float((w.conj() @ q[k]).real)
            quad = noise_power * float((w.conj() @ w).real)
            for j in range(k_n):
                quad += abs(w.conj() @ q[j]) ** 2
            total -= quad
    return float(total)


@dataclass
class PassiveQuadratic:
    """Quadratic form of the passive subproblem: -theta^H L theta + 2 Re{theta^H nu} - offset."""

    lam: np.ndarray      # (RN, RN) Hermitian PSD Gram matrix
    nu: np.ndarray       # (RN,)
    offset: float
    c: np.ndarray        # (K, P, K) direct-path scalars
    g: np.ndarray        # (K, P, K, RN) reflected-path vectors

    def value(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=complex).reshape(-1)
        quad = float((theta.conj() @ self.lam @ theta).real)
        lin = 2.0 * float((theta.conj() @ self.nu).real)
        return -quad + lin - self.offset


def build_passive_quadratic(channels: ChannelSet, precoder: Precoder, varpi: np.ndarray,
                            mu: np.ndarray, noise_power: float) -> PassiveQuadratic:
    """Assemble Lambda, nu and zeta from the c/g decomposition of the Q functions.

    For each (k, p, j):  c is the theta-independent part of varpi^H Q and
    g collects the per-element reflected contributions, so that
    varpi^H Q = c + theta^H g.
    """
    b_n, m = channels.num_bs, channels.bs_antennas
    r_n, n = channels.num_ris, channels.ris_elements
    k_n, p_n = channels.num_users, channels.num_subcarriers
    rn = r_n * n

    c = np.zeros((k_n, p_n, k_n), dtype=complex)
    g = np.zeros((k_n, p_n, k_n, rn), dtype=complex)
    lam = np.zeros((rn, rn), dtype=complex)
    nu = np.zeros(rn, dtype=complex)
    zeta = 0.0

    for k in range(k_n):
        for p in range(p_n):
            w_aux = varpi[k, p]
            # row vector varpi^H F_{k,p}^H, one entry per RIS element
            f_kp_mat = channels.f_ris_user[:, k, p].reshape(rn, channels.user_antennas)
            x_row = (f_kp_mat @ w_aux).conj() if rn else np.zeros(0, dtype=complex)
            for j in range(k_n):
                c_val = 0.0 + 0.0j
                g_vec = np.zeros(rn, dtype=complex)
                for b in range(b_n):
                    w_b = precoder.w[p, j, b * m:(b + 1) * m]
                    c_val += w_aux.conj() @ (channels.h_direct[b, k, p].conj().T @ w_b)
                    if rn:
                        g_b = channels.g_bs_ris[b, :, p].reshape(rn, m)
                        g_vec += x_row * (g_b @ w_b)
                c[k, p, j] = c_val
                g[k, p, j] = g_vec
                lam += np.outer(g_vec, g_vec.conj())
                zeta += abs(c_val) ** 2
                nu -= np.conj(c_val) * g_vec
            nu += np.sqrt(mu[k, p]) * g[k, p, k]
            zeta += noise_power * float(np.sum(np.abs(w_aux) ** 2))
            zeta -= 2.0 * np.sqrt(mu[k, p]) * float(c[k, p, k].real)

    return PassiveQuadratic(lam=lam, nu=nu, offset=float(zeta), c=c, g=g)
