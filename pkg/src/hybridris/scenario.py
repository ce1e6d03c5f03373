"""Scenario definition and channel generation.

A single feed antenna illuminates a uniform planar array of M = m_x * m_y
reconfigurable elements at near-field distance; each element relays toward K
single-antenna users through Rician fading. Everything downstream consumes
the `Scenario` dataclass and the `ChannelSet` produced here.

All internal math runs in linear units (Watts, linear power ratios, radians).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 3e8  # m/s

# Substream labels so adding draws for one purpose never shifts another.
_STREAM_POSITION = 1
_STREAM_NLOS = 2
_STREAM_SCHEDULE = 3


def dbm_to_watt(p_dbm: float) -> float:
    """P[W] = 10^((P[dBm] - 30)/10)."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watt_to_dbm(p_watt: float) -> float:
    if p_watt <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(p_watt) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Physical and budget parameters for one experiment."""

    m_x: int = 4                       # elements along the x axis
    m_y: int = 5                       # elements along the y axis
    element_spacing: float = 0.05      # m, half wavelength at 3 GHz
    carrier_freq: float = 3e9          # Hz
    feed_distance: float = 0.2         # m, feed antenna to array center
    ris_position: tuple = (0.0, 0.0, 15.0)  # m, array center in world frame
    sector_radius: float = 40.0        # m, users drawn in a 120 deg sector
    user_count: int = 3                # K
    pathloss_ref: float = 1e-3         # linear gain at 1 m (-30 dB)
    pathloss_exp: float = 2.2          # large-scale exponent
    rician_factor: float = 1.9952623149688795  # linear K-factor (3 dB)
    noise_user: float = 1e-9           # W, receiver noise power (-60 dBm)
    noise_ris: float = 1e-9            # W, per-element amplification noise
    p_feed_max: float = 0.1            # W, feed transmit budget (20 dBm)
    p_ris_max: float = 0.1             # W, amplification power budget
    rho_max: float = 4.0               # max amplitude gain of an active element
    rate_min: float = 0.1              # bit/s/Hz per-user rate floor
    amp_efficiency: float = 0.8        # power amplifier efficiency zeta
    p_rf_chain: float = 0.048          # W per RF chain
    p_per_element: float = 0.003981071705534973  # W per element (6 dBm)
    p_circuit: float = 1.0             # W, static circuit power (30 dBm)
    rng_seed: int = 0                  # master seed for all random draws

    def __post_init__(self):
        if self.m_x < 1 or self.m_y < 1:
            raise ValueError("element counts must be at least 1")
        if self.element_spacing <= 0 or self.carrier_freq <= 0:
            raise ValueError("spacing and carrier frequency must be positive")
        if self.feed_distance <= 0:
            raise ValueError("feed distance must be positive")
        if len(self.ris_position) != 3:
            raise ValueError("ris_position must be a 3-vector")
        if self.sector_radius <= 0:
            raise ValueError("sector radius must be positive")
        if self.user_count < 1:
            raise ValueError("need at least one user")
        if self.pathloss_ref <= 0 or self.pathloss_exp <= 0:
            raise ValueError("pathloss parameters must be positive")
        if self.rician_factor < 0:
            raise ValueError("Rician factor must be nonnegative")
        if self.noise_user <= 0 or self.noise_ris < 0:
            raise ValueError("noise powers must be positive (user) / nonnegative (element)")
        if self.p_feed_max <= 0 or self.p_ris_max < 0:
            raise ValueError("power budgets must be positive (feed) / nonnegative (amp)")
        if self.rho_max < 1:
            raise ValueError("rho_max below 1 leaves active elements useless")
        if self.rate_min < 0:
            raise ValueError("rate floor must be nonnegative")
        if not 0 < self.amp_efficiency <= 1:
            raise ValueError("amplifier efficiency must lie in (0, 1]")
        if min(self.p_rf_chain, self.p_per_element, self.p_circuit) < 0:
            raise ValueError("static power terms must be nonnegative")
        object.__setattr__(self, "ris_position", tuple(float(v) for v in self.ris_position))

    @property
    def m(self) -> int:
        """Total element count M."""
        return self.m_x * self.m_y

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    def replace(self, **overrides) -> "Scenario":
        return dataclasses.replace(self, **overrides)


# Power fields accept an explicit `<name>_dbm` alternative in JSON; the two
# ratio fields accept `<name>_db`.
_DBM_FIELDS = (
    "noise_user", "noise_ris", "p_feed_max", "p_ris_max",
    "p_rf_chain", "p_per_element", "p_circuit",
)
_DB_FIELDS = ("pathloss_ref", "rician_factor")


def scenario_from_dict(raw: dict) -> Scenario:
    """Build a Scenario from a parsed JSON document, resolving unit suffixes."""
    known = {f.name for f in dataclasses.fields(Scenario)}
    kwargs = {}
    for key, value in raw.items():
        if key in known:
            kwargs[key] = value
            continue
        if key.endswith("_dbm") and key[:-4] in _DBM_FIELDS:
            base = key[:-4]
            if base in raw:
                raise ValueError(f"both {base} and {key} given")
            kwargs[base] = dbm_to_watt(float(value))
            continue
        if key.endswith("_db") and key[:-3] in _DB_FIELDS:
            base = key[:-3]
            if base in raw:
                raise ValueError(f"both {base} and {key} given")
            kwargs[base] = db_to_linear(float(value))
            continue
        raise ValueError(f"unknown scenario field: {key}")
    if "ris_position" in kwargs:
        kwargs["ris_position"] = tuple(kwargs["ris_position"])
    return Scenario(**kwargs)


def scenario_to_dict(scn: Scenario) -> dict:
    out = dataclasses.asdict(scn)
    out["ris_position"] = list(scn.ris_position)
    return out


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scn: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scn), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class ChannelSet:
    """One realization of every channel the optimizer needs."""

    h: np.ndarray               # (M,) feed -> element, near-field LoS
    g: np.ndarray               # (K, M) element -> user, Rician
    user_positions: np.ndarray  # (K, 3) world frame

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def k(self) -> int:
        return self.g.shape[0]


def element_offsets(scn: Scenario) -> np.ndarray:
    """Signed element offsets from the array center, in meters, shape (M, 2).

    Element (i_x, i_y) sits at offset ((2 i_x - m_x - 1)/2, (2 i_y - m_y - 1)/2)
    times the spacing, with 1-based indices. Flattening is x-major so it
    matches the Kronecker order of `array_response`.
    """
    ix = np.arange(1, scn.m_x + 1)
    iy = np.arange(1, scn.m_y + 1)
    off_x = (2 * ix - scn.m_x - 1) / 2.0 * scn.element_spacing
    off_y = (2 * iy - scn.m_y - 1) / 2.0 * scn.element_spacing
    grid = np.stack(np.meshgrid(off_x, off_y, indexing="ij"), axis=-1)
    return grid.reshape(scn.m, 2)


def near_field_channel(scn: Scenario) -> np.ndarray:
    """Feed-to-array channel h, shape (M,).

    Element m at distance r_m = sqrt(feed_distance^2 + offset^2) from the
    feed sees amplitude 1/sqrt(4 pi r_m^2) and phase 2 pi r_m / wavelength.
    """
    off = element_offsets(scn)
    r = np.sqrt(scn.feed_distance ** 2 + np.sum(off ** 2, axis=1))
    amp = 1.0 / np.sqrt(4.0 * np.pi * r ** 2)
    return amp * np.exp(2j * np.pi * r / scn.wavelength)


def array_response(scn: Scenario, elevation: float, azimuth: float) -> np.ndarray:
    """UPA response, Kronecker of the two axis steering vectors, shape (M,).

    Args:
        elevation: angle from broadside, in [-pi/2, pi/2].
        azimuth: angle in the array plane, in [0, 2 pi].
    """
    if not -np.pi / 2 - 1e-12 <= elevation <= np.pi / 2 + 1e-12:
        raise ValueError("elevation out of range")
    if not 0 <= azimuth <= 2 * np.pi + 1e-12:
        raise ValueError("azimuth out of range")
    k0 = 2.0 * np.pi * scn.element_spacing / scn.wavelength
    ux = np.sin(elevation) * np.cos(azimuth)
    uy = np.sin(elevation) * np.sin(azimuth)
    ax = np.exp(-1j * k0 * ux * np.arange(scn.m_x))
    ay = np.exp(-1j * k0 * uy * np.arange(scn.m_y))
    return np.kron(ax, ay)


def draw_user_positions(scn: Scenario) -> np.ndarray:
    """Uniform draws over a 120 deg ground sector centered at the origin."""
    pos = np.zeros((scn.user_count, 3))
    for k in range(scn.user_count):
        rng = np.random.default_rng([scn.rng_seed, _STREAM_POSITION, k])
        theta = rng.uniform(-np.pi / 3, np.pi / 3)
        radius = scn.sector_radius * np.sqrt(rng.uniform())
        pos[k] = (radius * np.cos(theta), radius * np.sin(theta), 0.0)
    return pos


def _los_angles(scn: Scenario, user_pos: np.ndarray) -> tuple:
    """Elevation/azimuth of the element->user direction for the UPA response."""
    d = user_pos - np.asarray(scn.ris_position)
    u = d / np.linalg.norm(d)
    sin_elev = min(1.0, math.hypot(u[0], u[1]))
    elevation = math.asin(sin_elev)
    azimuth = math.atan2(u[1], u[0]) % (2 * np.pi)
    return elevation, azimuth


def rician_channel(scn: Scenario, user_positions: np.ndarray) -> np.ndarray:
    """Element-to-user channels g, shape (K, M).

    Each row combines the geometric LoS response with an i.i.d. CN(0,1)
    scatter term at the configured Rician factor, under distance pathloss
    pathloss_ref * d^(-pathloss_exp).
    """
    m = scn.m
    g = np.zeros((scn.user_count, m), dtype=complex)
    kappa = scn.rician_factor
    for k in range(scn.user_count):
        rng = np.random.default_rng([scn.rng_seed, _STREAM_NLOS, k])
        d = np.linalg.norm(user_positions[k] - np.asarray(scn.ris_position))
        gain = math.sqrt(scn.pathloss_ref * d ** (-scn.pathloss_exp))
        elevation, azimuth = _los_angles(scn, user_positions[k])
        los = array_response(scn, elevation, azimuth)
        nlos = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
        g[k] = gain * (math.sqrt(kappa / (1 + kappa)) * los
                       + math.sqrt(1 / (1 + kappa)) * nlos)
    return g


def channels(scn: Scenario) -> ChannelSet:
    """Deterministic channel realization for the scenario's seed."""
    pos = draw_user_positions(scn)
    return ChannelSet(h=near_field_channel(scn), g=rician_channel(scn, pos),
                      user_positions=pos)


def random_schedule_mask(scn: Scenario, n_active: int) -> np.ndarray:
    """Seeded uniform draw of n_active element indices, as a 0/1 mask."""
    if not 0 <= n_active <= scn.m:
        raise ValueError("active count out of range")
    rng = np.random.default_rng([scn.rng_seed, _STREAM_SCHEDULE, 0])
    mask = np.zeros(scn.m, dtype=np.int8)
    mask[rng.choice(scn.m, size=n_active, replace=False)] = 1
    return mask


def ula_variant(scn: Scenario) -> Scenario:
    """Same aperture axis and spacing, but an M-antenna line array."""
    return scn.replace(m_x=scn.m, m_y=1)
