"""Downlink channel model: Friis path gain, flat Rayleigh fading, SINR and RSRQ.

All powers are linear watts unless a name carries a _db/_dbm suffix. Cells and
users are integer indices into the gain arrays held by ChannelState.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Philox

SPEED_OF_LIGHT_M_S = 299_792_458.0

# Fading streams are chunked so scalar and vector access agree bit-for-bit.
_FADING_BLOCK = 1024
_U64_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RadioConfig:
    """Static radio parameters shared by every cell."""

    tx_power_dbm: float = 40.0
    rb_bandwidth_hz: float = 180e3
    num_rbs: int = 100
    noise_psd_w_hz: float = 4.0e-21  # thermal floor near 290 K
    carrier_freq_hz: float = 2.0e9
    reuse_factor: int = 1
    rsrq_min_db: float = -40.0
    rsrq_max_db: float = 60.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.tx_power_dbm):
            raise ValueError("tx_power_dbm must be finite")
        if self.num_rbs <= 0:
            raise ValueError("num_rbs must be positive")
        if self.noise_psd_w_hz <= 0:
            raise ValueError("noise_psd_w_hz must be positive")

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)

    @property
    def noise_per_rb_w(self) -> float:
        return self.rb_bandwidth_hz * self.noise_psd_w_hz

    @property
    def full_bandwidth_hz(self) -> float:
        return self.rb_bandwidth_hz * self.num_rbs


@dataclass
class ChannelState:
    """Gains for one TTI: path gain per (cell, user) times a per-user envelope.

    Fading is flat across RBs and shared by all cells observing the user, so
    the (cell, user, rb) gain factorises as base_gain[cell, user] * fading[user].
    """

    base_gain: np.ndarray  # [cells, users]
    fading: np.ndarray  # [users]
    fading_seed: int
    tti: int = 0

    @property
    def num_cells(self) -> int:
        return self.base_gain.shape[0]

    @property
    def num_users(self) -> int:
        return self.base_gain.shape[1]

    def gain(self, cell: int, user: int, rb: int = 0) -> float:
        self._check(cell, user)
        return float(self.base_gain[cell, user] * self.fading[user])

    def _check(self, cell: int, user: int) -> None:
        if not 0 <= cell < self.num_cells:
            raise LookupError(f"unknown cell {cell}")
        if not 0 <= user < self.num_users:
            raise LookupError(f"unknown user {user}")


@dataclass
class LinkQuality:
    """Per-(cell, user) quality over one load-balancing period."""

    sinr_per_rb: float
    avg_sinr: float
    spectral_efficiency: float
    rsrq_db: float


def path_loss(distance_m: float, config: RadioConfig) -> float:
    """Friis free-space power gain (lambda / 4 pi d)^2.

    Distances below 1 m are clamped to 1 m to keep the gain bounded.
    """
    if distance_m < 0:
        raise ValueError("distance must be non-negative")
    d = max(float(distance_m), 1.0)
    lam = SPEED_OF_LIGHT_M_S / config.carrier_freq_hz
    return (lam / (4.0 * math.pi * d)) ** 2


def path_gain_matrix(
    cell_positions: np.ndarray, user_positions: np.ndarray, config: RadioConfig
) -> np.ndarray:
    """Friis gain for every (cell, user) pair; positions are (n, 2) metres."""
    diff = cell_positions[:, None, :] - user_positions[None, :, :]
    dist = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), 1.0)
    lam = SPEED_OF_LIGHT_M_S / config.carrier_freq_hz
    return (lam / (4.0 * math.pi * dist)) ** 2


def _fading_raws(seed: int, user: int, block: int) -> np.ndarray:
    # One Philox stream per (seed, user, block); user and block share a key word.
    key = [seed & _U64_MASK, (((user + 1) << 32) | block) & _U64_MASK]
    return Philox(key=key).random_raw(_FADING_BLOCK)


def fading_block(seed: int, user: int, start_tti: int, n: int) -> np.ndarray:
    """Unit-mean-power Rayleigh envelope gains for n consecutive TTIs."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        tti = start_tti + filled
        block, offset = divmod(tti, _FADING_BLOCK)
        raws = _fading_raws(seed, user, block)
        u = (raws >> np.uint64(11)).astype(np.float64) * 2.0**-53
        gains = -np.log1p(-u)  # |h|^2 ~ Exp(1): Rayleigh amplitude, E[|h|^2]=1
        take = min(n - filled, _FADING_BLOCK - offset)
        out[filled : filled + take] = gains[offset : offset + take]
        filled += take
    return out


def sample_fading(seed: int, user: int, tti: int) -> float:
    """Deterministic fading power gain for one (seed, user, tti) triple."""
    return float(fading_block(seed, user, tti, 1)[0])


def sinr_matrix(rx_power: np.ndarray, noise_w: float) -> np.ndarray:
    """SINR of every (cell, user) pair with all other cells interfering.

    rx_power[c, u] is the received power of cell c at user u on one RB;
    frequency reuse 1 means every non-serving cell contributes interference.
    """
    total = rx_power.sum(axis=0, keepdims=True)
    interference = total - rx_power
    return rx_power / (interference + noise_w)


def compute_sinr(cell: int, user: int, rb: int, state: ChannelState, config: RadioConfig) -> float:
    """Per-RB SINR of `user` when served by `cell` (linear ratio)."""
    state._check(cell, user)
    if not 0 <= rb < config.num_rbs:
        raise LookupError(f"unknown RB {rb}")
    rx = config.tx_power_w * state.base_gain[:, user] * state.fading[user]
    interference = float(rx.sum() - rx[cell])
    return float(rx[cell] / (interference + config.noise_per_rb_w))


def spectral_efficiency(avg_sinr: float) -> float:
    """Shannon efficiency log2(1 + SINR) in bits/s/Hz."""
    if avg_sinr < 0:
        raise ValueError("SINR must be non-negative")
    return math.log2(1.0 + avg_sinr)


def rsrq_db_from_powers(
    signal_w: float, other_w: float, noise_w: float, config: RadioConfig
) -> float:
    """Wideband signal-to-(rest-of-band power + noise) ratio in dB, clipped.

    This is the simulator-internal quality scale; the 25 dB report threshold
    lives on it, not on the 3GPP RSRQ scale.
    """
    denom = other_w + noise_w
    if denom <= 0.0:
        return config.rsrq_max_db
    if signal_w <= 0.0:
        return config.rsrq_min_db
    value = 10.0 * math.log10(signal_w / denom)
    return min(max(value, config.rsrq_min_db), config.rsrq_max_db)


def compute_rsrq(cell: int, user: int, state: ChannelState, config: RadioConfig) -> float:
    """RSRQ-like indicator of `user` for `cell`, averaged over the whole band."""
    state._check(cell, user)
    rx = config.tx_power_w * state.base_gain[:, user] * state.fading[user]
    signal = float(rx[cell])
    other = float(rx.sum() - signal)
    return rsrq_db_from_powers(signal, other, config.noise_per_rb_w, config)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float, floor_db: float = -400.0) -> float:
    if x <= 0:
        return floor_db
    return 10.0 * math.log10(x)
