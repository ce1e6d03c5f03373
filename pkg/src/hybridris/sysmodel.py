"""System model: solution types, SINR, power accounting, feasibility.

Conventions used throughout the package:

* `u` holds the per-element reflection coefficients with u_m = |beta_m|
  e^{j theta_m}, i.e. the diagonal of the reflection matrix itself.
* `alpha` is the 0/1 mode schedule (1 = active, amplifying; 0 = passive).
* The split form works with z = alpha * u, the active part of the diagonal.

All powers are Watts, all rates bit/s/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import ChannelSet, Scenario

# Absolute tolerances used when verifying a returned point (power / rate).
POWER_TOL = 1e-6
RATE_TOL = 1e-6
AMP_TOL = 1e-6


@dataclass(frozen=True)
class ModeSchedule:
    """Binary active/passive assignment of the M elements."""

    alpha: np.ndarray  # (M,) int8, 1 = active

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.int8)
        if a.ndim != 1:
            raise ValueError("alpha must be a vector")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("alpha entries must be 0 or 1")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def all_passive(cls, m: int) -> "ModeSchedule":
        return cls(np.zeros(m, dtype=np.int8))

    @classmethod
    def all_active(cls, m: int) -> "ModeSchedule":
        return cls(np.ones(m, dtype=np.int8))

    @classmethod
    def from_active_set(cls, active: tuple, m: int) -> "ModeSchedule":
        alpha = np.zeros(m, dtype=np.int8)
        alpha[list(active)] = 1
        return cls(alpha)

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    @property
    def m_act(self) -> int:
        return int(self.alpha.sum())

    @property
    def active_mask(self) -> np.ndarray:
        return self.alpha.astype(bool)

    def active_indices(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(self.alpha))


@dataclass(frozen=True)
class RisCoefficients:
    """Per-element reflection coefficients u_m = |beta_m| e^{j theta_m}."""

    u: np.ndarray  # (M,) complex

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=complex))


@dataclass(frozen=True)
class PowerAllocation:
    """Per-user feed transmit powers, Watts."""

    p: np.ndarray  # (K,) float

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    @property
    def total(self) -> float:
        return float(self.p.sum())


@dataclass(frozen=True)
class SolutionPoint:
    """One complete operating point of the transmitter."""

    schedule: ModeSchedule
    coeffs: RisCoefficients
    power: PowerAllocation

    def __post_init__(self):
        if self.schedule.m != self.coeffs.u.shape[0]:
            raise ValueError("schedule and coefficients disagree on M")

    @property
    def m_act(self) -> int:
        return self.schedule.m_act

    def to_dict(self) -> dict:
        return {
            "alpha": self.schedule.alpha.tolist(),
            "u": {"real": self.coeffs.u.real.tolist(),
                  "imag": self.coeffs.u.imag.tolist()},
            "p": self.power.p.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SolutionPoint":
        u = np.asarray(doc["u"]["real"]) + 1j * np.asarray(doc["u"]["imag"])
        return cls(ModeSchedule(np.asarray(doc["alpha"], dtype=np.int8)),
                   RisCoefficients(u),
                   PowerAllocation(np.asarray(doc["p"], dtype=float)))


def effective_gains(chs: ChannelSet) -> np.ndarray:
    """Per-user cascade coefficients c_k = conj(g_k) * h, shape (K, M).

    The received amplitude at user k is c_k @ u, so everything downstream is
    a function of these vectors.
    """
    return np.conj(chs.g) * chs.h[None, :]


def sinr(chs: ChannelSet, sol: SolutionPoint, scn: Scenario) -> np.ndarray:
    """Per-user SINR of the operating point, shape (K,)."""
    c = effective_gains(chs)
    s2 = np.abs(c @ sol.coeffs.u) ** 2                       # (K,) |g^H Theta h|^2
    z = sol.schedule.alpha * sol.coeffs.u
    ris_noise = scn.noise_ris * (np.abs(chs.g) ** 2 @ np.abs(z) ** 2)
    p = sol.power.p
    total_sig = p.sum() * s2
    out = np.empty(chs.k)
    for k in range(chs.k):
        interference = total_sig[k] - p[k] * s2[k]
        out[k] = p[k] * s2[k] / (interference + ris_noise[k] + scn.noise_user)
    return out


def sinr_from_lifted(chs: ChannelSet, schedule: ModeSchedule, v_mat: np.ndarray,
                     p: np.ndarray, scn: Scenario) -> np.ndarray:
    """SINR written in terms of the lifted matrix V = v v^H with v = conj(u)."""
    c = effective_gains(chs)
    alpha = schedule.alpha.astype(float)
    out = np.empty(chs.k)
    for k in range(chs.k):
        t_k = float(np.real(np.conj(c[k]) @ v_mat @ c[k]))   # Tr(V c_k c_k^H)
        b_diag = alpha * np.abs(chs.g[k]) ** 2
        ris_noise = scn.noise_ris * float(np.real(np.sum(b_diag * np.diag(v_mat))))
        interference = (p.sum() - p[k]) * t_k
        out[k] = p[k] * t_k / (interference + ris_noise + scn.noise_user)
    return out


def sinr_from_split(chs: ChannelSet, u: np.ndarray, z: np.ndarray,
                    p: np.ndarray, scn: Scenario) -> np.ndarray:
    """SINR in the decoupled (u, z) form used by the joint design."""
    c = effective_gains(chs)
    s2 = np.abs(c @ u) ** 2
    ris_noise = scn.noise_ris * (np.abs(chs.g) ** 2 @ np.abs(z) ** 2)
    out = np.empty(chs.k)
    for k in range(chs.k):
        interference = (p.sum() - p[k]) * s2[k]
        out[k] = p[k] * s2[k] / (interference + ris_noise[k] + scn.noise_user)
    return out


def rates(chs: ChannelSet, sol: SolutionPoint, scn: Scenario) -> np.ndarray:
    return np.log2(1.0 + sinr(chs, sol, scn))


def sum_rate(chs: ChannelSet, sol: SolutionPoint, scn: Scenario) -> float:
    return float(np.sum(rates(chs, sol, scn)))


def amplification_power(chs: ChannelSet, sol: SolutionPoint, scn: Scenario) -> float:
    """Power drawn by the active loads: sum_k p_k ||Phi h||^2 + ||Phi||_F^2 sigma_r^2."""
    phi_h = sol.schedule.alpha * sol.coeffs.u * chs.h
    phi_fro2 = float(np.sum(sol.schedule.alpha * np.abs(sol.coeffs.u) ** 2))
    return float(sol.power.p.sum() * np.sum(np.abs(phi_h) ** 2)
                 + phi_fro2 * scn.noise_ris)


def amplification_power_elementwise(chs: ChannelSet, sol: SolutionPoint,
                                    scn: Scenario) -> float:
    """Same quantity accumulated element by element."""
    total = 0.0
    p_sum = sol.power.p.sum()
    for m in range(chs.m):
        if sol.schedule.alpha[m]:
            beta2 = abs(sol.coeffs.u[m]) ** 2
            total += beta2 * (abs(chs.h[m]) ** 2 * p_sum + scn.noise_ris)
    return total


def total_power_terms(p_sum: float, p_act: float, scn: Scenario, *,
                      rf_chains: int = 1, elements: int | None = None) -> float:
    """Consumed power: (p_sum + p_act)/zeta + rf_chains*P_RF + M*P_r + P_c."""
    m = scn.m if elements is None else elements
    return ((p_sum + p_act) / scn.amp_efficiency
            + rf_chains * scn.p_rf_chain
            + m * scn.p_per_element
            + scn.p_circuit)


def total_power(chs: ChannelSet, sol: SolutionPoint, scn: Scenario) -> float:
    return total_power_terms(sol.power.total, amplification_power(chs, sol, scn), scn)


def energy_efficiency(chs: ChannelSet, sol: SolutionPoint, scn: Scenario) -> float:
    """Sum rate over total consumed power, bit/s/Hz/W."""
    return sum_rate(chs, sol, scn) / total_power(chs, sol, scn)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple          # human-readable labels of broken constraints
    slacks: dict = field(compare=False)  # slack >= 0 means satisfied


def check_feasibility(chs: ChannelSet, sol: SolutionPoint, scn: Scenario) -> FeasibilityReport:
    """Verify every problem constraint at the point, with stated tolerances."""
    slacks: dict = {}
    violations = []
    p = sol.power.p

    slacks["power_positive"] = float(p.min())
    if slacks["power_positive"] < -POWER_TOL:
        violations.append("power_positive")

    slacks["feed_power_budget"] = float(scn.p_feed_max - p.sum())
    if slacks["feed_power_budget"] < -POWER_TOL:
        violations.append("feed_power_budget")

    slacks["amp_power_budget"] = float(scn.p_ris_max - amplification_power(chs, sol, scn))
    if slacks["amp_power_budget"] < -POWER_TOL:
        violations.append("amp_power_budget")

    user_rates = rates(chs, sol, scn)
    slacks["min_rate"] = float(user_rates.min() - scn.rate_min)
    if slacks["min_rate"] < -RATE_TOL:
        violations.append("min_rate")

    mods = np.abs(sol.coeffs.u)
    active = sol.schedule.active_mask
    if active.any():
        slacks["active_amp_bound"] = float(scn.rho_max - mods[active].max())
        if slacks["active_amp_bound"] < -AMP_TOL:
            violations.append("active_amp_bound")
    if (~active).any():
        slacks["passive_unit_modulus"] = float(-np.max(np.abs(mods[~active] - 1.0)))
        if slacks["passive_unit_modulus"] < -AMP_TOL:
            violations.append("passive_unit_modulus")

    return FeasibilityReport(feasible=not violations, violations=tuple(violations),
                             slacks=slacks)
