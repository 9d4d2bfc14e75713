"""Scenario geometry and statistical channel generation.

Three link classes with distinct fading models:

* BS -> user:  i.i.d. Rayleigh per subcarrier, log-distance path loss
  (30 dB reference loss at 1 m, exponent 3 by default).
* BS -> RIS:   deterministic rank-1 line-of-sight, identical on every
  subcarrier (20 dB reference loss, exponent 2).
* RIS -> user: i.i.d. Rayleigh per subcarrier (20 dB reference, exponent 2).

The two 20 dB references split the 40 dB budget of the compound
BS-RIS-user link evenly across its hops.

Randomness is drawn from a caller-supplied ``numpy.random.Generator`` in a
fixed order -- user placement first, then the direct channels H over
(b, k, p), then the RIS-user channels F over (r, k, p); the LoS BS-RIS
matrices are deterministic.  A scenario is therefore reproducible from
(config, seed) alone, and scenarios that differ only in the number of
RISs share identical direct channels.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np


def _as_xy(points, name: str) -> tuple[tuple[float, float], ...]:
    """Normalize a position list to a tuple of (x, y) float pairs."""
    out = []
    for p in points:
        if len(p) != 2:
            raise ValueError(f"{name} entries must be 2-D coordinates, got {p!r}")
        out.append((float(p[0]), float(p[1])))
    return tuple(out)


@dataclass(frozen=True)
class ScenarioConfig:
    """Dimensions, geometry and link-budget parameters of one scenario.

    Powers are linear watts, reference losses are dB at 1 m.  The default
    geometry places two BSs at (0, +-10) m and two RISs at (30, 5) and
    (50, -5) m so that user clusters near x = 30 m or x = 50 m sit close
    to a reflecting surface.
    """

    num_bs: int = 2
    num_ris: int = 2
    num_users: int = 4
    num_subcarriers: int = 6
    bs_antennas: int = 8
    user_antennas: int = 2
    ris_elements: int = 32
    bs_positions: tuple = ((0.0, 10.0), (0.0, -10.0))
    ris_positions: tuple = ((28.0, 2.0), (50.0, -2.0))
    user_circle_center: tuple = (40.0, 0.0)
    user_circle_radius: float = 1.0
    max_power: tuple = (1.0,)          # per BS, broadcast if single entry
    noise_power: float = 1e-15         # -120 dBm
    user_weights: tuple = (1.0,)       # per user, broadcast if single entry
    bs_user_ref_loss_db: float = 30.0
    bs_user_exponent: float = 3.0
    bs_ris_ref_loss_db: float = 20.0
    bs_ris_exponent: float = 2.0
    ris_user_ref_loss_db: float = 20.0
    ris_user_exponent: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("num_bs", "num_users", "num_subcarriers", "bs_antennas",
                     "user_antennas", "ris_elements"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.num_ris < 0:
            raise ValueError(f"num_ris must be >= 0, got {self.num_ris}")
        if self.user_circle_radius < 0:
            raise ValueError("user_circle_radius must be >= 0")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be > 0")
        for name in ("bs_user_exponent", "bs_ris_exponent", "ris_user_exponent"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

        object.__setattr__(self, "bs_positions", _as_xy(self.bs_positions, "bs_positions"))
        object.__setattr__(self, "ris_positions", _as_xy(self.ris_positions, "ris_positions"))
        cx, cy = self.user_circle_center
        object.__setattr__(self, "user_circle_center", (float(cx), float(cy)))

        if len(self.bs_positions) != self.num_bs:
            raise ValueError(f"need {self.num_bs} BS positions, got {len(self.bs_positions)}")
        if len(self.ris_positions) < self.num_ris:
            raise ValueError(f"need {self.num_ris} RIS positions, got {len(self.ris_positions)}")

        pmax = self.max_power if hasattr(self.max_power, "__len__") else (self.max_power,)
        if len(pmax) == 1:
            pmax = tuple(float(pmax[0]) for _ in range(self.num_bs))
        else:
            pmax = tuple(float(v) for v in pmax)
        if len(pmax) != self.num_bs or any(v <= 0 for v in pmax):
            raise ValueError("max_power must be positive, one value per BS (or one shared)")
        object.__setattr__(self, "max_power", pmax)

        wts = self.user_weights if hasattr(self.user_weights, "__len__") else (self.user_weights,)
        if len(wts) == 1:
            wts = tuple(float(wts[0]) for _ in range(self.num_users))
        else:
            wts = tuple(float(v) for v in wts)
        if len(wts) != self.num_users or any(v <= 0 for v in wts):
            raise ValueError("user_weights must be positive, one value per user (or one shared)")
        object.__setattr__(self, "user_weights", wts)

    # convenience views used throughout the package
    def power_budget(self) -> np.ndarray:
        return np.asarray(self.max_power, dtype=float)

    def weights(self) -> np.ndarray:
        return np.asarray(self.user_weights, dtype=float)

    def bs_xy(self) -> np.ndarray:
        return np.asarray(self.bs_positions, dtype=float).reshape(self.num_bs, 2)

    def ris_xy(self) -> np.ndarray:
        return np.asarray(self.ris_positions, dtype=float).reshape(-1, 2)[: self.num_ris]


@dataclass
class ChannelSet:
    """Frequency-domain channels for every (BS, RIS, user, subcarrier) tuple.

    Shapes: ``h_direct[b, k, p]`` is M x U, ``g_bs_ris[b, r, p]`` is N x M,
    ``f_ris_user[r, k, p]`` is N x U.  With ``num_ris = 0`` the RIS arrays
    have an empty leading axis.
    """

    h_direct: np.ndarray       # (B, K, P, M, U)
    g_bs_ris: np.ndarray       # (B, R, P, N, M)
    f_ris_user: np.ndarray     # (R, K, P, N, U)

    def __post_init__(self):
        self.h_direct = np.asarray(self.h_direct, dtype=complex)
        self.g_bs_ris = np.asarray(self.g_bs_ris, dtype=complex)
        self.f_ris_user = np.asarray(self.f_ris_user, dtype=complex)
        for name in ("h_direct", "g_bs_ris", "f_ris_user"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")
        if self.h_direct.ndim != 5 or self.g_bs_ris.ndim != 5 or self.f_ris_user.ndim != 5:
            raise ValueError("channel tensors must be 5-dimensional")

    @property
    def num_bs(self) -> int:
        return self.h_direct.shape[0]

    @property
    def num_users(self) -> int:
        return self.h_direct.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.h_direct.shape[2]

    @property
    def bs_antennas(self) -> int:
        return self.h_direct.shape[3]

    @property
    def user_antennas(self) -> int:
        return self.h_direct.shape[4]

    @property
    def num_ris(self) -> int:
        return self.f_ris_user.shape[0]

    @property
    def ris_elements(self) -> int:
        return self.f_ris_user.shape[3]


def place_users(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Drop the K users uniformly on the configured disk.

    Radius is sampled as ``radius * sqrt(u)`` so the distribution is uniform
    over area, not over radius.  Returns a (K, 2) array of positions in m.
    """
    k = config.num_users
    radii = config.user_circle_radius * np.sqrt(rng.uniform(size=k))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=k)
    cx, cy = config.user_circle_center
    return np.column_stack((cx + radii * np.cos(angles), cy + radii * np.sin(angles)))


def path_gain_db(distance_m: float, ref_loss_db: float, exponent: float) -> float:
    """Log-distance attenuation: ref_loss + 10 * exponent * log10(d / 1 m)."""
    if distance_m <= 0.0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    return float(ref_loss_db + 10.0 * exponent * np.log10(distance_m))


def amplitude_gain(loss_db: float) -> float:
    """Linear amplitude factor corresponding to an attenuation in dB."""
    return float(10.0 ** (-loss_db / 20.0))


def sample_rayleigh(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. CN(0, gain^2) matrix: unit-variance fading scaled by the link gain."""
    if rows < 1 or cols < 1:
        raise ValueError("matrix dimensions must be >= 1")
    if gain < 0:
        raise ValueError("amplitude gain must be >= 0")
    scale = gain / np.sqrt(2.0)
    return scale * (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)))


def ula_response(size: int, azimuth_rad: float) -> np.ndarray:
    """Uniform-linear-array response with half-wavelength spacing (unit modulus)."""
    return np.exp(1j * np.pi * np.sin(azimuth_rad) * np.arange(size))


def sample_los(tx_size: int, rx_size: int, gain: float, tx_xy, rx_xy) -> np.ndarray:
    """Rank-1 line-of-sight matrix gain * a_rx a_tx^H between two array positions.

    Steering phases follow the azimuth of the straight path; every entry has
    magnitude ``gain``.  Deterministic (no fading).
    """
    tx_xy = np.asarray(tx_xy, dtype=float)
    rx_xy = np.asarray(rx_xy, dtype=float)
    delta = rx_xy - tx_xy
    if np.hypot(delta[0], delta[1]) == 0.0:
        raise ValueError("LoS endpoints must be distinct positions")
    aod = np.arctan2(delta[1], delta[0])        # departure azimuth at the tx array
    aoa = np.arctan2(-delta[1], -delta[0])      # arrival azimuth at the rx array
    a_tx = ula_response(tx_size, aod)
    a_rx = ula_response(rx_size, aoa)
    return gain * np.outer(a_rx, a_tx.conj())


def generate_channels(config: ScenarioConfig, user_positions,
                      rng: np.random.Generator) -> ChannelSet:
    """Draw the full ChannelSet for one scenario realization.

    Draw order (fixed for reproducibility): H over (b, k, p), then F over
    (r, k, p).  G is deterministic LoS and constant across subcarriers.
    """
    b_n, r_n, k_n, p_n = config.num_bs, config.num_ris, config.num_users, config.num_subcarriers
    m, u, n = config.bs_antennas, config.user_antennas, config.ris_elements
    user_xy = np.asarray(user_positions, dtype=float).reshape(k_n, 2)
    bs_xy = config.bs_xy()
    ris_xy = config.ris_xy()

    h = np.zeros((b_n, k_n, p_n, m, u), dtype=complex)
    for b in range(b_n):
        for k in range(k_n):
            dist = float(np.linalg.norm(user_xy[k] - bs_xy[b]))
            g = amplitude_gain(path_gain_db(dist, config.bs_user_ref_loss_db,
                                            config.bs_user_exponent))
            for p in range(p_n):
                h[b, k, p] = sample_rayleigh(m, u, g, rng)

    f = np.zeros((r_n, k_n, p_n, n, u), dtype=complex)
    for r in range(r_n):
        for k in range(k_n):
            dist = float(np.linalg.norm(user_xy[k] - ris_xy[r]))
            g = amplitude_gain(path_gain_db(dist, config.ris_user_ref_loss_db,
                                            config.ris_user_exponent))
            for p in range(p_n):
                f[r, k, p] = sample_rayleigh(n, u, g, rng)

    g_mat = np.zeros((b_n, r_n, p_n, n, m), dtype=complex)
    for b in range(b_n):
        for r in range(r_n):
            dist = float(np.linalg.norm(ris_xy[r] - bs_xy[b]))
            gain = amplitude_gain(path_gain_db(dist, config.bs_ris_ref_loss_db,
                                               config.bs_ris_exponent))
            los = sample_los(m, n, gain, bs_xy[b], ris_xy[r])
            for p in range(p_n):
                g_mat[b, r, p] = los

    return ChannelSet(h_direct=h, g_bs_ris=g_mat, f_ris_user=f)


def build_scenario(config: ScenarioConfig) -> tuple[np.ndarray, ChannelSet]:
    """Place users and draw channels from the config's own seed."""
    rng = np.random.default_rng(config.rng_seed)
    positions = place_users(config, rng)
    return positions, generate_channels(config, positions, rng)
