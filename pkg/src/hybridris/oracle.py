"""Grid brute force over mode sets, phases, amplitudes, and powers.

Only viable at toy scale (it enumerates every combination), so the entry
point refuses anything beyond three elements or two users.  The figures
of merit are recomputed here from the raw channel arrays on purpose; the
rest of the package is not imported for the physics, which makes the
comparison against the optimizer an actual cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .scenario import ChannelSet, Scenario
from .sysmodel import ModeSchedule, PowerAllocation, RisCoefficients, SolutionPoint

PHASE_LEVELS = 16
AMP_LEVELS = 8
POWER_LEVELS = 32

MAX_ELEMENTS = 3
MAX_USERS = 2


@dataclass
class OracleResult:
    ee: float | None            # best grid value, None when nothing feasible
    sum_rate: float | None
    p_tot: float | None
    point: SolutionPoint | None
    evaluated: int              # grid cells checked
    feasible: int               # grid cells passing every constraint

    def to_dict(self) -> dict:
        return {
            "ee": self.ee,
            "sum_rate": self.sum_rate,
            "p_tot": self.p_tot,
            "point": self.point.to_dict() if self.point is not None else None,
            "evaluated": self.evaluated,
            "feasible": self.feasible,
        }


def _phase_grid(m: int, levels: int) -> np.ndarray:
    """(levels**m, m) complex unit entries covering the phase lattice."""
    phases = 2.0 * np.pi * np.arange(levels) / levels
    grids = np.meshgrid(*([phases] * m), indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1)
    return np.exp(1j * flat)


def _amp_grid(mask: np.ndarray, levels: int, rho_max: float) -> np.ndarray:
    """(combos, m) amplitudes: passive pinned to 1, active swept to rho."""
    m = mask.shape[0]
    active = np.flatnonzero(mask)
    if active.size == 0:
        return np.ones((1, m))
    sweep = np.linspace(1.0, rho_max, levels)
    rows = np.ones((levels ** active.size, m))
    for col, values in enumerate(itertools.product(sweep, repeat=active.size)):
        rows[col, active] = values
    return rows


def _power_grid(scn: Scenario, k: int, levels: int) -> np.ndarray:
    """(cells, k) per-user feed powers inside the total budget."""
    ladder = np.geomspace(1e-4 * scn.p_feed_max, scn.p_feed_max, levels)
    if k == 1:
        return ladder[:, None]
    pairs = np.array(list(itertools.product(ladder, repeat=k)))
    return pairs[pairs.sum(axis=1) <= scn.p_feed_max + 1e-15]


def brute_force(chs: ChannelSet, scn: Scenario, *,
                phase_levels: int = PHASE_LEVELS,
                amp_levels: int = AMP_LEVELS,
                power_levels: int = POWER_LEVELS) -> OracleResult:
    """Exhaustive search of the discretized design space."""
    m, k = chs.m, chs.k
    if m > MAX_ELEMENTS:
        raise ValueError(f"brute force capped at {MAX_ELEMENTS} elements")
    if k > MAX_USERS:
        raise ValueError(f"brute force capped at {MAX_USERS} users")

    c = np.conj(chs.g) * chs.h[None, :]          # (K, M) cascade channels
    g_abs2 = np.abs(chs.g) ** 2                  # (K, M)
    h_abs2 = np.abs(chs.h) ** 2                  # (M,)
    phases = _phase_grid(m, phase_levels)        # (P, M)
    powers = _power_grid(scn, k, power_levels)   # (Q, K)
    p_sum = powers.sum(axis=1)                   # (Q,)

    fixed_power = (scn.p_rf_chain + m * scn.p_per_element + scn.p_circuit)

    evaluated = 0
    feasible = 0
    best = None
    for bits in itertools.product((0, 1), repeat=m):
        mask = np.array(bits, dtype=np.int8)
        amps = _amp_grid(mask, amp_levels, scn.rho_max)
        for amp in amps:
            u_rows = phases * amp[None, :]                    # (P, M)
            signal = np.abs(u_rows @ c.T) ** 2                # (P, K)
            z2 = (mask * amp) ** 2                            # (M,)
            relayed = scn.noise_ris * (g_abs2 @ z2)           # (K,)
            drain_h = float(h_abs2 @ z2)                      # per-Watt feed
            drain_n = scn.noise_ris * float(z2.sum())
            p_act = p_sum * drain_h + drain_n                 # (Q,)
            amp_ok = p_act <= scn.p_ris_max + 1e-15           # (Q,)

            # SINR per grid pair: own power over everyone else's plus noise
            num = signal[:, None, :] * powers[None, :, :]     # (P, Q, K)
            other = p_sum[None, :, None] - powers[None, :, :]
            den = (signal[:, None, :] * other
                   + relayed[None, None, :] + scn.noise_user)
            rates = np.log2(1.0 + num / den)                  # (P, Q, K)
            rate_ok = (rates >= scn.rate_min).all(axis=2)     # (P, Q)
            ok = rate_ok & amp_ok[None, :]

            evaluated += signal.shape[0] * powers.shape[0]
            if not ok.any():
                continue
            feasible += int(ok.sum())
            total = ((p_sum + p_act) / scn.amp_efficiency
                     + fixed_power)                           # (Q,)
            ee = np.where(ok, rates.sum(axis=2) / total[None, :], -np.inf)
            idx = np.unravel_index(int(np.argmax(ee)), ee.shape)
            value = float(ee[idx])
            if best is None or value > best[0]:
                best = (value,
                        float(rates[idx].sum()),
                        float(total[idx[1]]),
                        mask.copy(),
                        u_rows[idx[0]].copy(),
                        powers[idx[1]].copy())

    if best is None:
        return OracleResult(ee=None, sum_rate=None, p_tot=None, point=None,
                            evaluated=evaluated, feasible=0)
    value, rate, total, mask, u, p = best
    point = SolutionPoint(ModeSchedule(mask), RisCoefficients(u),
                          PowerAllocation(p))
    return OracleResult(ee=value, sum_rate=rate, p_tot=total, point=point,
                        evaluated=evaluated, feasible=feasible)
