"""Stacked equivalent channel, SINR, transmit power and the sum-rate objective.

Index conventions:  the stacked equivalent channel ``h[k, p]`` is
(B*M) x U so that ``h[k, p]^H`` maps a stacked transmit vector to the U
receive antennas of user k.  A precoder stores one length-(B*M) vector per
(subcarrier, user) pair, flattening to the canonical (p-major, then k)
vector ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .channels import ChannelSet

MODE_RELAXED = "relaxed"            # |theta_n| <= 1
MODE_UNIT_MODULUS = "unit-modulus"  # |theta_n| = 1
_MODES = (MODE_RELAXED, MODE_UNIT_MODULUS)
_MODE_TOL = 1e-12


@dataclass
class PhaseConfig:
    """Stacked RIS reflection coefficients (length R*N) plus constraint mode."""

    theta: np.ndarray
    mode: str = MODE_RELAXED

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=complex).reshape(-1)
        if self.mode not in _MODES:
            raise ValueError(f"unknown phase mode {self.mode!r}")
        mag = np.abs(self.theta)
        if self.mode == MODE_RELAXED:
            if mag.size and mag.max() > 1.0 + _MODE_TOL:
                raise ValueError(f"relaxed mode requires |theta| <= 1, max is {mag.max()}")
        else:
            if mag.size and np.max(np.abs(mag - 1.0)) > _MODE_TOL:
                raise ValueError("unit-modulus mode requires |theta| = 1")

    @staticmethod
    def zeros(num_ris: int, ris_elements: int, mode: str = MODE_RELAXED) -> "PhaseConfig":
        return PhaseConfig(np.zeros(num_ris * ris_elements, dtype=complex), mode)


@dataclass
class Precoder:
    """Active precoding vectors w[p, k] of length B*M, with the BS block size."""

    w: np.ndarray        # (P, K, B*M)
    num_bs: int

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex)
        if self.w.ndim != 3:
            raise ValueError("precoder array must have shape (P, K, B*M)")
        if not np.all(np.isfinite(self.w)):
            raise ValueError("precoder contains non-finite entries")
        if self.w.shape[2] % self.num_bs != 0:
            raise ValueError("stacked dimension is not divisible by num_bs")

    @property
    def bs_antennas(self) -> int:
        return self.w.shape[2] // self.num_bs

    def block(self, b: int) -> np.ndarray:
        """View of the BS-b antenna block, shape (P, K, M)."""
        m = self.bs_antennas
        return self.w[:, :, b * m:(b + 1) * m]


@dataclass
class EffectiveChannel:
    """Stacked equivalent channels h[k, p] of shape (B*M) x U."""

    h: np.ndarray        # (K, P, B*M, U)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        if self.h.ndim != 4:
            raise ValueError("effective channel must have shape (K, P, B*M, U)")


def stacked_bs_ris(channels: ChannelSet, p: int) -> np.ndarray:
    """Block matrix G_p of shape (R*N, B*M): row-block r, column-block b."""
    r_n, b_n = channels.num_ris, channels.num_bs
    n, m = channels.ris_elements, channels.bs_antennas
    g = np.zeros((r_n * n, b_n * m), dtype=complex)
    for r in range(r_n):
        for b in range(b_n):
            g[r * n:(r + 1) * n, b * m:(b + 1) * m] = channels.g_bs_ris[b, r, p]
    return g


def effective_channel(channels: ChannelSet, phases: PhaseConfig) -> EffectiveChannel:
    """Direct channel plus the RIS cascade F^H Theta^H G, stacked over BSs."""
    b_n, k_n, p_n = channels.num_bs, channels.num_users, channels.num_subcarriers
    m, u = channels.bs_antennas, channels.user_antennas
    r_n, n = channels.num_ris, channels.ris_elements
    if phases.theta.size != r_n * n:
        raise ValueError(f"theta has length {phases.theta.size}, expected {r_n * n}")

    h = np.zeros((k_n, p_n, b_n * m, u), dtype=complex)
    for p in range(p_n):
        g_p = stacked_bs_ris(channels, p) if r_n else None
        for k in range(k_n):
            # direct part: stack H_{b,k,p} over b
            direct = channels.h_direct[:, k, p].reshape(b_n * m, u)
            h[k, p] = direct
            if r_n:
                f_kp = channels.f_ris_user[:, k, p].reshape(r_n * n, u)
                # reflected part of h^H is F^H diag(conj(theta)) G_p
                reflected_h = (f_kp.conj().T * phases.theta.conj()) @ g_p
                h[k, p] += reflected_h.conj().T
    return EffectiveChannel(h=h)


def received_vectors(h: EffectiveChannel, precoder: Precoder, k: int, p: int) -> np.ndarray:
    """All products h_{k,p}^H w_{p,j}, returned as a (K, U) array."""
    return precoder.w[p] @ h.h[k, p].conj()


def sinr(h: EffectiveChannel, precoder: Precoder, k: int, p: int, noise_power: float) -> float:
    """Per-stream SINR with the interference-plus-noise covariance inverted implicitly."""
    if noise_power <= 0:
        raise ValueError("noise_power must be > 0")
    u = h.h.shape[3]
    s = received_vectors(h, precoder, k, p)          # (K, U)
    cov = noise_power * np.eye(u, dtype=complex)
    for j in range(s.shape[0]):
        if j != k:
            cov += np.outer(s[j], s[j].conj())
    val = s[k].conj() @ np.linalg.solve(cov, s[k])
    return max(float(val.real), 0.0)


def wsr(h: EffectiveChannel, precoder: Precoder, noise_power: float, weights) -> float:
    """Weighted sum-rate over all users and subcarriers, in bit/s/Hz."""
    weights = np.asarray(weights, dtype=float)
    k_n, p_n = h.h.shape[0], h.h.shape[1]
    total = 0.0
    for k in range(k_n):
        for p in range(p_n):
            total += weights[k] * np.log2(1.0 + sinr(h, precoder, k, p, noise_power))
    return float(total)


def per_bs_power(precoder: Precoder) -> np.ndarray:
    """Transmit power per BS: sum over (p, k) of the squared BS-block norms."""
    powers = np.empty(precoder.num_bs)
    for b in range(precoder.num_bs):
        blk = precoder.block(b)
        powers[b] = float(np.sum(np.abs(blk) ** 2))
    return powers
