"""Convexified subproblems and their SCA surrogates.

Three solvers cover the inner blocks of the optimization:

* `BeamformingSolver` - lifted (SDR) reflection design for a fixed mode
  schedule and power allocation, with a spectral penalty driving the lifted
  matrix back to rank one.
* `PowerSolver` - feed power allocation for fixed reflection coefficients,
  logarithms handled on the exponential cone.
* `JointSolver` - joint schedule + reflection design via a Big-M split of
  the diagonal, relaxed binary variables and a penalty driving them to 0/1.

Each solver compiles its conic problem once per channel realization and
re-solves with updated parameter values across SCA / alternating rounds.
Every constraint row carries a tag from `CONSTRAINT_TAGS`.

SINR-related rows are built in noise-normalized units (channels divided by
the user noise standard deviation) so the backend sees well-scaled data; the
slack products and rate values are invariant to that scaling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .scenario import ChannelSet, Scenario
from .sysmodel import (ModeSchedule, PowerAllocation, RisCoefficients,
                       effective_gains)

LOG2E = math.log2(math.e)

# Safety margin (bit/s/Hz) added to the rate floor inside solver rows so that
# rank-one extraction and rounding cannot push a returned point below the
# true floor beyond the 1e-6 verification tolerance.
RATE_MARGIN = 1e-4

# Exit thresholds shared by the SCA loops.
SCA_OBJ_TOL = 1e-3
RANK_RESIDUAL_TARGET = 1e-5
BINARITY_TARGET = 1e-4
PENALTY_GROWTH = 5.0
PENALTY_CAP = 1e4
# Rounds allowed without improving on the best usable iterate before the
# loop bails out; guards against limit cycles fed by inexact solves.
STALE_LIMIT = 3
# Once the penalty weight is capped, rounds allowed without material gain
# in the unpenalized objective. Large arrays can plateau with the rank
# residual a little above target; grinding the full round budget there
# buys nothing and ends in numerical infeasibility often as not.
PLATEAU_LIMIT = 6
# Worst re-evaluated constraint violation at which a solver point is still
# allowed to steer convergence bookkeeping. Looser points only serve as the
# next expansion, where the iteration can heal them. Calibration: problem
# rows mix nano-watt noise terms with noise-normalized gains around 1e9, so
# an interior-point exit routinely carries absolute violations near 1e-5
# that move the objective by less than the convergence granularity; the
# runaway points this gate exists for violate rows by 0.1 or more.
TRUST_RESIDUAL = 1e-4
# Consecutive untrusted rounds before a descent loop gives up; without a
# trusted point the convergence tests never arm, so the round budget would
# otherwise burn in full every call.
UNTRUSTED_LIMIT = 5
# First solve attempt stays on the interior-point solver; the first-order
# fallback only enters at the bottom of the rescue ladder.
PRIMARY_ONLY = conic.SolveOptions(fallback=None)
WITH_FALLBACK = conic.SolveOptions()


def _trusted(sol) -> bool:
    if sol.status == "optimal":
        return True
    return (sol.status == "inaccurate" and sol.residual is not None
            and sol.residual <= TRUST_RESIDUAL)

CONSTRAINT_TAGS = {
    "feed_power_budget": "total feed transmit power within its budget",
    "power_positive": "per-user transmit powers nonnegative",
    "amp_power_budget": "active-element amplification power within its budget",
    "min_sinr": "per-user SINR meets the minimum-rate target",
    "slack_signal": "reciprocal slack tied to the received signal power",
    "slack_interference": "slack upper-bounds interference plus noise",
    "rate_signal_log": "epigraph of the concave log of received power",
    "rate_bound": "per-user rate below its concave lower bound",
    "psd": "lifted beamforming matrix is positive semidefinite",
    "psd_structure": "embedded matrix stays in the Hermitian subspace",
    "passive_unit_modulus": "passive elements reflect at unit modulus",
    "active_amp_bound": "active amplitude gains capped at rho_max",
    "active_amp_floor": "active elements amplify at or above unit gain",
    "bigm_inactive_zero": "inactive entries of the split diagonal forced to zero",
    "bigm_active_equal": "active entries of the split diagonal track u",
    "modulus_upper": "element moduli capped at rho_max",
    "modulus_lower_linearized": "linearized unit-modulus floor on each element",
    "passive_coupling": "u and its active part agree as alpha goes passive",
    "relaxed_binary_box": "relaxed schedule variables within [0, 1]",
    "signal_energy_epigraph": "epigraph of the received signal energy",
    "noise_energy_epigraph": "epigraph of relayed amplifier-noise energy",
    "amp_energy_epigraph": "epigraph of amplified feed and noise energy",
}


def min_sinr_target(scn: Scenario) -> float:
    """SINR floor used inside solver rows (includes the safety margin)."""
    return 2.0 ** (scn.rate_min + RATE_MARGIN) - 1.0


# ---------------------------------------------------------------------------
# Candidate mode sets
# ---------------------------------------------------------------------------


def active_count_upper_bound(h: np.ndarray, p: PowerAllocation,
                             scn: Scenario) -> tuple:
    """Largest number of simultaneously active elements the budget admits.

    With every active amplitude at its break-even value 1, element m drains
    |h_m|^2 * sum(p) + sigma_r^2 from the amplification budget; sorting the
    channel energies ascending gives the longest affordable prefix.

    Returns (upper_bound, element indices sorted by ascending |h_m|^2).
    """
    p_sum = float(np.sum(p.p))
    if p_sum <= 0:
        raise ValueError("total feed power must be positive")
    psi = (scn.p_ris_max - scn.noise_ris) / p_sum
    energies = np.abs(h) ** 2
    order = np.argsort(energies, kind="stable")
    if psi <= 0:
        return 0, tuple(int(i) for i in order)
    prefix = np.cumsum(energies[order])
    count = int(np.searchsorted(prefix, psi, side="right"))
    return min(count, h.shape[0]), tuple(int(i) for i in order)


def enumerate_candidate_sets(m: int, upper_bound: int,
                             include_empty: bool = True):
    """Yield candidate active sets of size <= upper_bound, smallest first."""
    if upper_bound > m or upper_bound < 0:
        raise ValueError("upper bound out of range")
    if include_empty:
        yield ()
    for size in range(1, upper_bound + 1):
        yield from itertools.combinations(range(m), size)


def candidate_count(m: int, upper_bound: int, include_empty: bool = True) -> int:
    total = 1 if include_empty else 0
    for size in range(1, upper_bound + 1):
        total += math.comb(m, size)
    return total


# ---------------------------------------------------------------------------
# SCA surrogates (numeric forms; the solvers reuse the same coefficients)
# ---------------------------------------------------------------------------


def rate_bound_coefficients(x0: float, y0: float) -> tuple:
    """Coefficients (const, coef_x, coef_y) of the affine rate lower bound.

    bound(x, y) = const - coef_x * x - coef_y * y, tight at (x0, y0).
    """
    if x0 <= 0 or y0 <= 0:
        raise ValueError("expansion point must be positive")
    coef_x = LOG2E / (x0 + x0 ** 2 * y0)
    coef_y = LOG2E / (y0 + y0 ** 2 * x0)
    const = math.log2(1.0 + 1.0 / (x0 * y0)) + coef_x * x0 + coef_y * y0
    return const, coef_x, coef_y


def rate_lower_bound_affine(x, y, x0: float, y0: float):
    """Affine lower bound on log2(1 + 1/(x y)) expanded at (x0, y0)."""
    const, coef_x, coef_y = rate_bound_coefficients(x0, y0)
    return const - coef_x * x - coef_y * y


def dominant_eigvec(h: np.ndarray) -> np.ndarray:
    """Unit top eigenvector of a Hermitian matrix with deterministic ties.

    Candidates within numerical tie of the top eigenvalue are phase-fixed
    (first significant entry real positive) and compared lexicographically by
    real parts, largest first.
    """
    h = 0.5 * (h + h.conj().T)
    eigvals, eigvecs = np.linalg.eigh(h)
    top = eigvals[-1]
    tied = [i for i in range(len(eigvals))
            if eigvals[i] >= top - 1e-12 * max(1.0, abs(top))]
    best, best_key = None, None
    for i in tied:
        v = eigvecs[:, i]
        idx = int(np.argmax(np.abs(v) > 1e-12))
        if abs(v[idx]) > 0:
            v = v * np.conj(v[idx] / abs(v[idx]))
        key = tuple(np.round(v.real, 12))
        if best_key is None or key > best_key:
            best, best_key = v, key
    return best


def spectral_linearization(u_mat: np.ndarray, u_prev: np.ndarray) -> float:
    """Penalty surrogate: nuclear norm minus linearized spectral norm.

    Upper-bounds ||U||_* - ||U||_2 for Hermitian U, with equality at the
    expansion point; zero exactly when the expansion is rank one and U stays
    there.
    """
    eigvals = np.linalg.eigvalsh(0.5 * (u_mat + u_mat.conj().T))
    nuclear = float(np.sum(np.abs(eigvals)))
    delta = dominant_eigvec(u_prev)
    prev_spectral = float(np.linalg.eigvalsh(0.5 * (u_prev + u_prev.conj().T))[-1])
    linearized = prev_spectral + float(np.real(
        np.conj(delta) @ (u_mat - u_prev) @ delta))
    return nuclear - linearized


def signal_bound_coefficients(c: np.ndarray, u0: np.ndarray) -> tuple:
    """Affine minorant coefficients of |c^T u|^2 expanded at u0.

    Returns (const, coef_re, coef_im) with
    bound(u) = const + coef_re @ Re(u) + coef_im @ Im(u).
    """
    s0 = complex(np.dot(c, u0))
    w = np.conj(s0) * c
    coef_re = 2.0 * w.real
    coef_im = -2.0 * w.imag
    const = abs(s0) ** 2 - coef_re @ u0.real - coef_im @ u0.imag
    return const, coef_re, coef_im


def signal_power_linearized(c: np.ndarray, u: np.ndarray, u0: np.ndarray) -> float:
    """Numeric value of the |c^T u|^2 minorant expanded at u0."""
    const, coef_re, coef_im = signal_bound_coefficients(c, u0)
    return const + coef_re @ u.real + coef_im @ u.imag


def binary_penalty(alpha, alpha0):
    """Affine majorant of alpha (1 - alpha), tight at alpha0."""
    alpha = np.asarray(alpha, dtype=float)
    alpha0 = np.asarray(alpha0, dtype=float)
    return alpha - alpha0 ** 2 - 2.0 * alpha0 * (alpha - alpha0)


def interference_log_tangent(q, q0, shared, floor):
    """Tangent majorant of log2(shared q + floor), tight at q0.

    The power stage subtracts this term from each user's rate, so the
    tangent turns the rate into an affine minorant; only the slope shows
    up in the solver objective, the constant cancels in the argmax.
    """
    base = np.log2(shared * q0 + floor)
    slope = shared * LOG2E / (shared * q0 + floor)
    return base + slope * (q - q0)


# ---------------------------------------------------------------------------
# Shared report type
# ---------------------------------------------------------------------------


@dataclass
class SubproblemReport:
    status: str            # optimal | stalled | infeasible | max_iters | failed
    iterations: int
    objective: float | None       # value of the tracked (true) objective
    rank_residual: float | None = None
    binarity: float | None = None
    fallback: bool = False
    solver_time: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "stalled", "max_iters")


def _canonical_u(u: np.ndarray) -> np.ndarray:
    """Fix the global phase so the first significant entry is real positive."""
    norm = np.linalg.norm(u)
    if norm == 0:
        return u
    idx = int(np.argmax(np.abs(u) > 1e-12 * norm))
    if abs(u[idx]) > 0:
        u = u * np.conj(u[idx] / abs(u[idx]))
    return u


# ---------------------------------------------------------------------------
# Beamforming (lifted SDR with spectral penalty)
# ---------------------------------------------------------------------------


@dataclass
class BeamformingIterate:
    """Expansion point carried between SCA rounds / outer iterations."""
    v_mat: np.ndarray   # (M, M) complex Hermitian lifted matrix
    x: np.ndarray       # (K,) noise-normalized signal slacks
    y: np.ndarray       # (K,) noise-normalized interference slacks


def initial_coefficients(chs: ChannelSet) -> np.ndarray:
    """Unit-modulus start co-phased to the strongest user's cascade.

    Aligning the full feed-to-user product (not just the feed leg) makes
    the start coherent at that user; with one user this is already the
    optimal passive phasing, so the lifted stage only has to confirm it.
    """
    c = effective_gains(chs)
    k_star = int(np.argmax(np.sum(np.abs(c), axis=1)))
    return np.exp(-1j * np.angle(c[k_star]))


def initial_power_split(chs: ChannelSet, scn: Scenario,
                        schedule: ModeSchedule) -> PowerAllocation | None:
    """Uniform feed split, shrunk so unit-gain actives fit the amp budget.

    Returns None when even that is impossible (the schedule cannot operate).
    """
    p_total = scn.p_feed_max
    if schedule.m_act > 0:
        drain = float(np.sum(np.abs(chs.h[schedule.active_mask]) ** 2))
        headroom = scn.p_ris_max - schedule.m_act * scn.noise_ris
        if headroom <= 0:
            return None
        if drain > 0:
            p_total = min(p_total, headroom / drain)
    if p_total <= 0:
        return None
    return PowerAllocation(np.full(chs.k, p_total / chs.k))


def initial_iterate(chs: ChannelSet, scn: Scenario, schedule: ModeSchedule,
                    u0: np.ndarray, p: PowerAllocation) -> BeamformingIterate:
    """Slack expansion at equality for the given starting point."""
    sigma = math.sqrt(scn.noise_user)
    c_bar = effective_gains(chs) / sigma
    g_bar2 = np.abs(chs.g / sigma) ** 2
    v = np.conj(u0)
    v_mat = np.outer(v, np.conj(v))
    t_bar = np.abs(c_bar @ u0) ** 2
    z2 = (schedule.alpha * np.abs(u0)) ** 2
    x = 1.0 / np.maximum(p.p * t_bar, 1e-30)
    y = (p.total - p.p) * t_bar + scn.noise_ris * (g_bar2 @ z2) + 1.0
    return BeamformingIterate(v_mat=v_mat, x=x, y=y)


class BeamformingSolver:
    """Reflection design at a fixed schedule, compiled once per channel set."""

    def __init__(self, chs: ChannelSet, scn: Scenario, schedule: ModeSchedule,
                 amplitude_floor: float | None = None):
        self.chs, self.scn, self.schedule = chs, scn, schedule
        self.m, self.k = chs.m, chs.k
        self.sigma2 = scn.noise_user
        sigma = math.sqrt(self.sigma2)
        self.c_bar = effective_gains(chs) / sigma            # (K, M)
        self.g_bar2 = np.abs(chs.g / sigma) ** 2             # (K, M)
        alpha = schedule.alpha.astype(float)
        self.w1 = alpha * np.abs(chs.h) ** 2                 # amp drain per unit p_sum
        self.w2 = alpha * scn.noise_ris                      # amp drain from noise
        self.b0 = scn.noise_ris * self.g_bar2 * alpha[None, :]  # relayed noise coef
        self.gamma = min_sinr_target(scn)
        self.emb_p = [conic.embed_hermitian(np.outer(self.c_bar[k],
                                                     np.conj(self.c_bar[k])))
                      for k in range(self.k)]
        self.floor = amplitude_floor
        self._build()

    def _build(self) -> None:
        m, k = self.m, self.k
        prob = conic.ConicProblem("beamforming")
        s = prob.add_symmetric("S", 2 * m)
        x = prob.add_vector("X", k, nonneg=True)
        y = prob.add_vector("Y", k, nonneg=True)

        self.p_a = prob.param("a", (k,))            # gamma*Q_k - p_k
        self.p_q = prob.param("q", (k,))            # Q_k = p_sum - p_k
        self.p_p = prob.param("p", (k,))            # p_k
        self.p_psum = prob.param("p_sum")
        self.p_objamp = prob.param("obj_amp", (m,))  # (xi/zeta) amp coefficients
        self.p_bx = prob.param("bx", (k,))
        self.p_by = prob.param("by", (k,))
        self.p_tau = prob.param("tau")
        self.p_wpen = prob.param("w_pen", (2 * m, 2 * m))

        diag_v = conic.embedded_diag(s, m)
        t_bar = [conic.trace_pairing(s, self.emb_p[kk]) for kk in range(k)]

        prob.psd(s, "psd")
        conic.add_embedding_structure(prob, s, m, "psd_structure")

        passive = np.flatnonzero(self.schedule.alpha == 0)
        active = np.flatnonzero(self.schedule.alpha == 1)
        if passive.size:
            prob.zero(diag_v[passive] - 1.0, "passive_unit_modulus")
        if active.size:
            prob.nonneg(self.scn.rho_max ** 2 - diag_v[active], "active_amp_bound")
            if self.floor is not None:
                prob.nonneg(diag_v[active] - self.floor ** 2, "active_amp_floor")

        prob.nonneg(self.scn.p_ris_max - self.p_psum * (self.w1 @ diag_v)
                    - self.w2 @ diag_v, "amp_power_budget")

        for kk in range(k):
            prob.nonneg(-(self.p_a[kk] * t_bar[kk] + self.gamma * (self.b0[kk] @ diag_v)
                          + self.gamma), "min_sinr")
            prob.rotated_soc(x[kk], self.p_p[kk] * t_bar[kk], 1.0, "slack_signal")
            prob.nonneg(y[kk] - self.p_q[kk] * t_bar[kk] - self.b0[kk] @ diag_v - 1.0,
                        "slack_interference")

        objective = (-self.p_bx @ x - self.p_by @ y - self.p_objamp @ diag_v
                     - self.p_tau * 0.5 * conic.cp.trace(s)
                     + conic.trace_pairing(s, self.p_wpen))
        prob.maximize(objective)
        self.prob = prob
        self._svar, self._xvar, self._yvar = s, x, y

    def _set_point(self, p: np.ndarray, xi: float, tau: float,
                   it: BeamformingIterate, obj_scale: float = 1.0) -> None:
        p_sum = float(p.sum())
        q = p_sum - p
        self.p_a.value = self.gamma * q - p
        self.p_q.value = q
        self.p_p.value = p
        self.p_psum.value = p_sum
        self.p_objamp.value = obj_scale * (xi / self.scn.amp_efficiency) * (
            self.w1 * p_sum + self.w2)
        bx = np.empty(self.k)
        by = np.empty(self.k)
        for kk in range(self.k):
            _, bx[kk], by[kk] = rate_bound_coefficients(it.x[kk], it.y[kk])
        self.p_bx.value = obj_scale * bx
        self.p_by.value = obj_scale * by
        delta = dominant_eigvec(it.v_mat)
        self.p_tau.value = obj_scale * tau
        self.p_wpen.value = obj_scale * tau * conic.embed_hermitian(
            np.outer(delta, np.conj(delta)))

    def _true_objective(self, v_mat, x, y, p, xi, tau) -> tuple:
        """(penalized value, rate part, amp part) of the exact objective."""
        rates = float(np.sum(np.log2(1.0 + 1.0 / np.maximum(x * y, 1e-30))))
        p_act = float(p.sum() * (self.w1 @ np.real(np.diag(v_mat)))
                      + self.w2 @ np.real(np.diag(v_mat)))
        amp_cost = xi * p_act / self.scn.amp_efficiency
        penalty = tau * conic.rank_residual(v_mat)
        return rates - amp_cost - penalty, rates, p_act

    def run(self, p: PowerAllocation, xi: float, tau: float | None = None,
            expansion: BeamformingIterate | None = None,
            max_rounds: int = 30) -> tuple:
        """Iterate the penalized SDR until stable and near rank one.

        Returns (RisCoefficients, BeamformingIterate, SubproblemReport).
        """
        it = expansion or initial_iterate(
            self.chs, self.scn, self.schedule, initial_coefficients(self.chs), p)
        pvec = np.asarray(p.p, dtype=float)
        base, rates0, _ = self._true_objective(it.v_mat, it.x, it.y, pvec, xi, 0.0)
        tau_now = tau if tau is not None else 1e-2 * max(1.0, abs(base))
        trace = []
        # A caller-provided expansion is itself the previous SCA iterate:
        # if the first round cannot improve on its value, the loop is at a
        # fixed point and must stop right there. Re-expanding exactly at an
        # optimum puts every bound row on the boundary and the interior
        # point method returns garbage from there.
        last_obj = base if expansion is not None else None
        status = "max_iters"
        total_time = 0.0
        residual = None
        best_obj = None
        best_it = None
        best_residual = None
        stale = 0
        untrusted = 0
        plateau = 0
        best_bare = None
        for round_idx in range(max_rounds):
            self._set_point(pvec, xi, tau_now, it)
            sol = self.prob.solve(PRIMARY_ONLY)
            if sol.status == "failed":
                # Rescue ladder, cheapest first: rescaling the objective
                # usually unsticks the interior point in a few tens of ms,
                # while the first-order fallback takes half a second to
                # produce a point that is rarely trusted anyway.
                self._set_point(pvec, xi, tau_now, it, obj_scale=10.0)
                retry = self.prob.solve(PRIMARY_ONLY)
                total_time += retry.solver_time
                if retry.status != "failed":
                    sol = retry
                else:
                    self._set_point(pvec, xi, tau_now, it)
                    sol = self.prob.solve(WITH_FALLBACK)
            total_time += sol.solver_time
            if sol.status in ("infeasible", "failed") \
                    or sol.values.get("S") is None:
                # A dead round late in the squeeze does not invalidate the
                # certified rounds before it; only a run with nothing
                # usable at all is reported as lost.
                if best_it is not None:
                    status = "stalled"
                    break
                lost = "infeasible" if sol.status == "infeasible" else "failed"
                return None, it, SubproblemReport(
                    status=lost, iterations=round_idx, objective=None,
                    solver_time=total_time, trace=trace)
            trusted = _trusted(sol)
            v_mat = conic.de_embed(sol.values["S"])
            x = np.maximum(np.asarray(sol.values["X"], dtype=float), 1e-30)
            y = np.maximum(np.asarray(sol.values["Y"], dtype=float), 1e-30)
            residual = conic.rank_residual(v_mat)
            true_obj, rates, p_act = self._true_objective(v_mat, x, y, pvec, xi, tau_now)
            trace.append({"round": round_idx, "tau": tau_now,
                          "objective": true_obj, "rates": rates,
                          "rank_residual": residual,
                          "solver_status": sol.status,
                          "solver_time": sol.solver_time})
            it = BeamformingIterate(v_mat=v_mat, x=x, y=y)
            if not trusted:
                # usable only as the next expansion; the iteration heals it
                untrusted += 1
                if untrusted >= UNTRUSTED_LIMIT:
                    break
                continue
            untrusted = 0
            bare = true_obj + tau_now * residual
            if best_bare is None or bare > best_bare + SCA_OBJ_TOL:
                best_bare = bare if best_bare is None else max(best_bare, bare)
                plateau = 0
            elif tau_now >= PENALTY_CAP and residual > RANK_RESIDUAL_TARGET:
                plateau += 1
                if plateau >= PLATEAU_LIMIT:
                    status = "stalled"
                    break
            if residual <= RANK_RESIDUAL_TARGET:
                material = best_obj is None or true_obj > best_obj + SCA_OBJ_TOL
                if best_obj is None or true_obj > best_obj:
                    best_obj, best_it, best_residual = true_obj, it, residual
                stale = 0 if material else stale + 1
                if stale >= STALE_LIMIT:
                    status = "stalled"
                    break
            converged = (last_obj is not None
                         and abs(true_obj - last_obj) < SCA_OBJ_TOL)
            if converged and residual <= RANK_RESIDUAL_TARGET:
                status = "optimal"
                break
            if residual > RANK_RESIDUAL_TARGET and tau_now < PENALTY_CAP:
                tau_now = min(tau_now * PENALTY_GROWTH, PENALTY_CAP)
                last_obj = None  # objective not comparable across tau bumps
            else:
                last_obj = true_obj

        reported_obj = trace[-1]["objective"] if trace else None
        if best_it is not None:
            # hand back the best usable round, not the tail of a limit cycle
            it, residual, reported_obj = best_it, best_residual, best_obj
        coeffs = self._extract(it.v_mat)
        return coeffs, it, SubproblemReport(
            status=status, iterations=len(trace), objective=reported_obj,
            rank_residual=residual, solver_time=total_time, trace=trace)

    def _extract(self, v_mat: np.ndarray) -> RisCoefficients:
        v = conic.extract_rank_one(v_mat)
        u = np.conj(v)
        mods = np.abs(u)
        phases = np.where(mods > 1e-12, u / np.where(mods > 1e-12, mods, 1.0), 1.0)
        lo = self.floor if self.floor is not None else 0.0
        target = np.where(self.schedule.alpha == 1,
                          np.clip(mods, lo, self.scn.rho_max), 1.0)
        return RisCoefficients(_canonical_u(phases * target))


def solve_beamforming(chs: ChannelSet, scn: Scenario, schedule: ModeSchedule,
                      p: PowerAllocation, xi: float, tau: float | None = None,
                      expansion: BeamformingIterate | None = None,
                      amplitude_floor: float | None = None) -> tuple:
    """One-shot convenience wrapper around `BeamformingSolver.run`."""
    solver = BeamformingSolver(chs, scn, schedule, amplitude_floor)
    return solver.run(p, xi, tau=tau, expansion=expansion)


# ---------------------------------------------------------------------------
# Power allocation (exponential-cone)
# ---------------------------------------------------------------------------


@dataclass
class PowerModel:
    """Linear-gain description of the downlink seen by the power solver.

    Rates are log2(own_k p_k + shared_k sum(p) + floor_k)
    - log2(shared_k (sum(p) - p_k) + floor_k); the RIS path uses shared
    gains (every symbol rides the same effective channel), the RF baseline
    uses own gains with zero shared part.
    """
    own: np.ndarray        # (K,) signal gain on the user's own power only
    shared: np.ndarray     # (K,) gain multiplying the total feed power
    floor: np.ndarray      # (K,) noise-normalized additive floor (>= ~1)
    amp_lin: float         # P_act = amp_lin * sum(p) + amp_const
    amp_const: float
    p_fixed: float         # static consumed power (chains, elements, circuit)

    @property
    def k(self) -> int:
        return self.own.shape[0]


def ris_power_model(chs: ChannelSet, scn: Scenario, schedule: ModeSchedule,
                    coeffs: RisCoefficients, *, rf_chains: int = 1) -> PowerModel:
    """Power model of the reflect-array downlink at fixed coefficients."""
    c = effective_gains(chs)
    s2 = np.abs(c @ coeffs.u) ** 2 / scn.noise_user
    z2 = (schedule.alpha * np.abs(coeffs.u)) ** 2
    relayed = scn.noise_ris * (np.abs(chs.g) ** 2 @ z2) / scn.noise_user
    phi_h = schedule.alpha * np.abs(coeffs.u * chs.h) ** 2
    return PowerModel(
        own=np.zeros(chs.k),
        shared=s2,
        floor=relayed + 1.0,
        amp_lin=float(np.sum(phi_h)),
        amp_const=float(np.sum(z2)) * scn.noise_ris,
        p_fixed=(rf_chains * scn.p_rf_chain + scn.m * scn.p_per_element
                 + scn.p_circuit),
    )


def model_rates(model: PowerModel, p: np.ndarray) -> np.ndarray:
    total = p.sum()
    received = model.own * p + model.shared * total + model.floor
    without = model.shared * (total - p) + model.floor
    return np.log2(received) - np.log2(without)


def model_total_power(model: PowerModel, p: np.ndarray, scn: Scenario) -> float:
    p_act = model.amp_lin * p.sum() + model.amp_const
    return (p.sum() + p_act) / scn.amp_efficiency + model.p_fixed


class PowerSolver:
    """Feed power allocation; compiled once per user count."""

    def __init__(self, k: int):
        self.k = k
        prob = conic.ConicProblem("power")
        p = prob.add_vector("p", k)
        t = prob.add_vector("t", k)
        self.p_own = prob.param("own", (k,))
        self.p_shared = prob.param("shared", (k,))
        self.p_floor = prob.param("floor", (k,))
        self.p_pf = prob.param("p_feed_max")
        self.p_pr = prob.param("p_ris_max")
        self.p_amp_lin = prob.param("amp_lin")
        self.p_amp_const = prob.param("amp_const")
        self.p_sin_a = prob.param("sin_a", (k,))   # gamma * shared
        self.p_sin_b = prob.param("sin_b", (k,))   # gamma*shared + own + shared
        self.p_sin_c = prob.param("sin_c", (k,))   # gamma * floor
        self.p_wobj = prob.param("w_obj", (k,))

        prob.nonneg(p, "power_positive")
        prob.nonneg(self.p_pf - conic.cp.sum(p), "feed_power_budget")
        prob.nonneg(self.p_pr - self.p_amp_lin * conic.cp.sum(p)
                    - self.p_amp_const, "amp_power_budget")
        total = conic.cp.sum(p)
        for kk in range(k):
            prob.exp_log(t[kk], self.p_own[kk] * p[kk]
                         + self.p_shared[kk] * total + self.p_floor[kk],
                         "rate_signal_log")
            prob.nonneg(-(self.p_sin_a[kk] * total - self.p_sin_b[kk] * p[kk]
                          + self.p_sin_c[kk]), "min_sinr")
        prob.maximize(conic.cp.sum(t) / math.log(2.0) + self.p_wobj @ p)
        self.prob = prob
        self._pvar = p

    def run(self, model: PowerModel, scn: Scenario, xi: float,
            p0: np.ndarray, max_rounds: int = 30) -> tuple:
        """SCA rounds on the interference linearization; exact when none.

        Returns (PowerAllocation, SubproblemReport)."""
        gamma = min_sinr_target(scn)
        self.p_own.value = model.own
        self.p_shared.value = model.shared
        self.p_floor.value = model.floor
        self.p_pf.value = scn.p_feed_max
        self.p_pr.value = scn.p_ris_max
        self.p_amp_lin.value = model.amp_lin
        self.p_amp_const.value = model.amp_const
        self.p_sin_a.value = gamma * model.shared
        self.p_sin_b.value = (gamma + 1.0) * model.shared + model.own
        self.p_sin_c.value = gamma * model.floor

        radiated_coef = xi * (1.0 + model.amp_lin) / scn.amp_efficiency
        p_now = np.asarray(p0, dtype=float)
        obj_now = self._objective(model, p_now, scn, xi)
        trace = []
        status = "max_iters"
        total_time = 0.0
        for round_idx in range(max_rounds):
            q = p_now.sum() - p_now
            lin = model.shared * LOG2E / (model.shared * q + model.floor)
            w = np.full(self.k, -radiated_coef)
            for j in range(self.k):
                w[j] -= lin.sum() - lin[j]
            self.p_wobj.value = w
            sol = self.prob.solve()
            total_time += sol.solver_time
            if sol.status == "infeasible":
                return None, SubproblemReport(
                    status="infeasible", iterations=round_idx, objective=None,
                    solver_time=total_time, trace=trace)
            if sol.status == "failed" or sol.values.get("p") is None:
                return None, SubproblemReport(
                    status="failed", iterations=round_idx, objective=None,
                    solver_time=total_time, trace=trace)
            p_new = np.maximum(np.asarray(sol.values["p"], dtype=float), 0.0)
            obj_new = self._objective(model, p_new, scn, xi)
            trace.append({"round": round_idx, "objective": obj_new,
                          "solver_status": sol.status,
                          "solver_time": sol.solver_time})
            # the starting point may not satisfy all rows, so round 0 always
            # moves to the solver output; afterwards keep monotone ascent
            if round_idx > 0 and obj_new < obj_now - 1e-9:
                status = "optimal"
                break
            improved = obj_new - obj_now
            p_now, obj_now = p_new, obj_new
            if round_idx > 0 and improved < SCA_OBJ_TOL:
                status = "optimal"
                break
        return PowerAllocation(p_now), SubproblemReport(
            status=status, iterations=len(trace), objective=obj_now,
            solver_time=total_time, trace=trace)

    @staticmethod
    def _objective(model: PowerModel, p: np.ndarray, scn: Scenario,
                   xi: float) -> float:
        rates = float(np.sum(model_rates(model, p)))
        return rates - xi * model_total_power(model, p, scn)


def solve_power_allocation(chs: ChannelSet, scn: Scenario, schedule: ModeSchedule,
                           coeffs: RisCoefficients, xi: float,
                           p0: PowerAllocation | None = None) -> tuple:
    """One-shot convenience wrapper around `PowerSolver.run`."""
    model = ris_power_model(chs, scn, schedule, coeffs)
    start = p0 or initial_power_split(chs, scn, schedule)
    if start is None:
        return None, SubproblemReport(status="infeasible", iterations=0,
                                      objective=None)
    solver = PowerSolver(chs.k)
    return solver.run(model, scn, xi, start.p)


# ---------------------------------------------------------------------------
# Joint schedule + reflection design (Big-M split, penalized binaries)
# ---------------------------------------------------------------------------


@dataclass
class JointIterate:
    alpha: np.ndarray   # (M,) relaxed or rounded schedule expansion
    u: np.ndarray       # (M,) complex coefficients expansion
    x: np.ndarray       # (K,)
    y: np.ndarray       # (K,)


def initial_joint_iterate(chs: ChannelSet, scn: Scenario,
                          p: PowerAllocation) -> JointIterate:
    alpha0 = np.full(chs.m, 0.5)
    u0 = initial_coefficients(chs)
    return refreshed_joint_iterate(chs, scn, alpha0, u0, p)


def refreshed_joint_iterate(chs: ChannelSet, scn: Scenario, alpha: np.ndarray,
                            u: np.ndarray, p: PowerAllocation) -> JointIterate:
    sigma = math.sqrt(scn.noise_user)
    c_bar = effective_gains(chs) / sigma
    g_bar2 = np.abs(chs.g / sigma) ** 2
    z = alpha * u
    sig = np.abs(c_bar @ u) ** 2
    relayed = scn.noise_ris * (g_bar2 @ np.abs(z) ** 2)
    x = 1.0 / np.maximum(p.p * sig, 1e-30)
    y = (p.total - p.p) * sig + relayed + 1.0
    return JointIterate(alpha=np.asarray(alpha, dtype=float), u=u, x=x, y=y)


class JointSolver:
    """Joint mode schedule and reflection design, compiled once per channel set."""

    def __init__(self, chs: ChannelSet, scn: Scenario,
                 big_m_constant: float | None = None):
        self.chs, self.scn = chs, scn
        self.m, self.k = chs.m, chs.k
        sigma = math.sqrt(scn.noise_user)
        self.c_bar = effective_gains(chs) / sigma
        self.g_bar = np.abs(chs.g) / sigma
        self.h_abs = np.abs(chs.h)
        self.gamma = min_sinr_target(scn)
        self.c_tilde = big_m_constant if big_m_constant is not None else 2.0 * scn.rho_max
        self._build()

    def _build(self) -> None:
        m, k = self.m, self.k
        cp = conic.cp
        prob = conic.ConicProblem("joint")
        alpha = prob.add_vector("alpha", m)
        ur = prob.add_vector("ur", m)
        ui = prob.add_vector("ui", m)
        zr = prob.add_vector("zr", m)
        zi = prob.add_vector("zi", m)
        x = prob.add_vector("X", k, nonneg=True)
        y = prob.add_vector("Y", k, nonneg=True)
        r = prob.add_vector("R", k)
        sig = prob.add_vector("sig", k)
        zng = prob.add_vector("zng", k)
        zh = prob.add_scalar("zh")
        zn = prob.add_scalar("zn")

        self.p_pvec = prob.param("p", (k,))
        self.p_psum = prob.param("p_sum")
        self.p_gq = prob.param("gq", (k,))          # gamma * Q_k
        self.p_q = prob.param("q", (k,))            # Q_k
        self.p_dir_r = prob.param("dir_r", (m,))    # modulus floor direction
        self.p_dir_i = prob.param("dir_i", (m,))
        self.p_pir = prob.param("pi_r", (k, m))     # p_k * signal minorant coefs
        self.p_pii = prob.param("pi_i", (k, m))
        self.p_pic = prob.param("pi_c", (k,))
        self.p_abar = prob.param("abar", (k,))      # rate bound constants
        self.p_bx = prob.param("bx", (k,))
        self.p_by = prob.param("by", (k,))
        self.p_ozh = prob.param("ozh")              # xi/zeta * sum(p)
        self.p_ozn = prob.param("ozn")              # xi/zeta * sigma_r^2
        self.p_mu = prob.param("mu_coef", (m,))     # mu * (1 - 2 alpha_n)

        for mm in range(m):
            prob.soc(self.c_tilde * alpha[mm], cp.hstack([zr[mm], zi[mm]]),
                     "bigm_inactive_zero")
            prob.soc(self.c_tilde * (1.0 - alpha[mm]),
                     cp.hstack([zr[mm] - ur[mm], zi[mm] - ui[mm]]),
                     "bigm_active_equal")
            prob.soc(self.scn.rho_max, cp.hstack([ur[mm], ui[mm]]), "modulus_upper")
            prob.soc(1.0 - alpha[mm],
                     cp.hstack([ur[mm] - zr[mm], ui[mm] - zi[mm]]),
                     "passive_coupling")
        prob.nonneg(cp.multiply(self.p_dir_r, ur) + cp.multiply(self.p_dir_i, ui)
                    - 1.0, "modulus_lower_linearized")
        prob.nonneg(alpha, "relaxed_binary_box")
        prob.nonneg(1.0 - alpha, "relaxed_binary_box")

        for kk in range(k):
            s_re = self.c_bar[kk].real @ ur - self.c_bar[kk].imag @ ui
            s_im = self.c_bar[kk].imag @ ur + self.c_bar[kk].real @ ui
            prob.rotated_soc(sig[kk], 1.0, cp.hstack([s_re, s_im]),
                             "signal_energy_epigraph")
            gz = cp.hstack([cp.multiply(self.g_bar[kk], zr),
                            cp.multiply(self.g_bar[kk], zi)])
            prob.rotated_soc(zng[kk], 1.0, gz, "noise_energy_epigraph")
        prob.rotated_soc(zh, 1.0, cp.hstack([cp.multiply(self.h_abs, zr),
                                             cp.multiply(self.h_abs, zi)]),
                         "amp_energy_epigraph")
        prob.rotated_soc(zn, 1.0, cp.hstack([zr, zi]), "amp_energy_epigraph")

        prob.nonneg(self.scn.p_ris_max - self.p_psum * zh
                    - self.scn.noise_ris * zn, "amp_power_budget")

        nr = self.scn.noise_ris
        for kk in range(k):
            p_i_k = (self.p_pir[kk] @ ur + self.p_pii[kk] @ ui + self.p_pic[kk])
            prob.nonneg(p_i_k - self.p_gq[kk] * sig[kk] - self.gamma * nr * zng[kk]
                        - self.gamma, "min_sinr")
            prob.rotated_soc(x[kk], p_i_k, 1.0, "slack_signal")
            prob.nonneg(y[kk] - self.p_q[kk] * sig[kk] - nr * zng[kk] - 1.0,
                        "slack_interference")
            prob.nonneg(self.p_abar[kk] - self.p_bx[kk] * x[kk]
                        - self.p_by[kk] * y[kk] - r[kk], "rate_bound")

        prob.maximize(cp.sum(r) - self.p_ozh * zh - self.p_ozn * zn
                      - self.p_mu @ alpha)
        self.prob = prob

    def _set_point(self, p: np.ndarray, xi: float, mu: float,
                   it: JointIterate) -> None:
        p_sum = float(p.sum())
        q = p_sum - p
        self.p_pvec.value = p
        self.p_psum.value = p_sum
        self.p_gq.value = self.gamma * q
        self.p_q.value = q
        mods = np.maximum(np.abs(it.u), 1e-9)
        self.p_dir_r.value = it.u.real / mods
        self.p_dir_i.value = it.u.imag / mods
        pir = np.empty((self.k, self.m))
        pii = np.empty((self.k, self.m))
        pic = np.empty(self.k)
        abar = np.empty(self.k)
        bx = np.empty(self.k)
        by = np.empty(self.k)
        for kk in range(self.k):
            const, coef_re, coef_im = signal_bound_coefficients(self.c_bar[kk], it.u)
            pir[kk] = p[kk] * coef_re
            pii[kk] = p[kk] * coef_im
            pic[kk] = p[kk] * const
            abar[kk], bx[kk], by[kk] = rate_bound_coefficients(it.x[kk], it.y[kk])
        self.p_pir.value = pir
        self.p_pii.value = pii
        self.p_pic.value = pic
        self.p_abar.value = abar
        self.p_bx.value = bx
        self.p_by.value = by
        self.p_ozh.value = xi * p_sum / self.scn.amp_efficiency
        self.p_ozn.value = xi * self.scn.noise_ris / self.scn.amp_efficiency
        self.p_mu.value = mu * (1.0 - 2.0 * it.alpha)

    def run(self, p: PowerAllocation, xi: float, mu: float | None = None,
            expansion: JointIterate | None = None,
            max_rounds: int = 40) -> tuple:
        """Penalized SCA to a binary schedule, then rounding and projection.

        Returns (ModeSchedule, RisCoefficients, JointIterate, SubproblemReport).
        """
        pvec = np.asarray(p.p, dtype=float)
        it = expansion or initial_joint_iterate(self.chs, self.scn, p)
        rates0 = float(np.sum(np.log2(1.0 + 1.0 / np.maximum(it.x * it.y, 1e-30))))
        mu_now = mu if mu is not None else 1e-2 * max(1.0, abs(rates0))
        trace = []
        status = "max_iters"
        last_obj = None
        total_time = 0.0
        binarity = None
        untrusted = 0
        alpha_val, u_val = it.alpha, it.u
        for round_idx in range(max_rounds):
            self._set_point(pvec, xi, mu_now, it)
            sol = self.prob.solve(PRIMARY_ONLY)
            if sol.status == "failed":
                sol = self.prob.solve(WITH_FALLBACK)
            total_time += sol.solver_time
            if sol.status == "infeasible":
                return (None, None, it, SubproblemReport(
                    status="infeasible", iterations=round_idx, objective=None,
                    solver_time=total_time, trace=trace))
            if sol.status == "failed" or sol.values.get("alpha") is None:
                return (None, None, it, SubproblemReport(
                    status="failed", iterations=round_idx, objective=None,
                    solver_time=total_time, trace=trace))
            alpha_val = np.clip(np.asarray(sol.values["alpha"], dtype=float), 0.0, 1.0)
            u_val = np.asarray(sol.values["ur"]) + 1j * np.asarray(sol.values["ui"])
            x = np.maximum(np.asarray(sol.values["X"], dtype=float), 1e-30)
            y = np.maximum(np.asarray(sol.values["Y"], dtype=float), 1e-30)
            zh = float(sol.values["zh"])
            zn = float(sol.values["zn"])
            binarity = float(np.sum(alpha_val * (1.0 - alpha_val)))
            rates = float(np.sum(np.log2(1.0 + 1.0 / np.maximum(x * y, 1e-30))))
            true_obj = (rates - xi * (pvec.sum() * zh + self.scn.noise_ris * zn)
                        / self.scn.amp_efficiency
                        - mu_now * binarity)
            trace.append({"round": round_idx, "mu": mu_now, "objective": true_obj,
                          "rates": rates, "binarity": binarity,
                          "solver_status": sol.status,
                          "solver_time": sol.solver_time})
            it = JointIterate(alpha=alpha_val, u=u_val, x=x, y=y)
            if not _trusted(sol):
                # next expansion only; do not let it steer the penalty logic
                untrusted += 1
                if untrusted >= UNTRUSTED_LIMIT:
                    break
                continue
            untrusted = 0
            converged = (last_obj is not None
                         and abs(true_obj - last_obj) < SCA_OBJ_TOL)
            if converged and binarity <= BINARITY_TARGET:
                status = "optimal"
                break
            if binarity > BINARITY_TARGET and mu_now < PENALTY_CAP:
                mu_now = min(mu_now * PENALTY_GROWTH, PENALTY_CAP)
                last_obj = None
            else:
                last_obj = true_obj

        schedule, coeffs, fallback = self._round_and_project(alpha_val, u_val, pvec)
        it_out = refreshed_joint_iterate(self.chs, self.scn,
                                         schedule.alpha.astype(float),
                                         coeffs.u, PowerAllocation(pvec))
        return schedule, coeffs, it_out, SubproblemReport(
            status=status, iterations=len(trace),
            objective=trace[-1]["objective"] if trace else None,
            binarity=binarity, fallback=fallback,
            solver_time=total_time, trace=trace)

    def _round_and_project(self, alpha_val: np.ndarray, u_val: np.ndarray,
                           p: np.ndarray) -> tuple:
        """Round at 0.5 (ties passive), re-project u, repair the amp budget."""
        rounded = (alpha_val > 0.5).astype(np.int8)
        mods = np.abs(u_val)
        phases = np.where(mods > 1e-12, u_val / np.where(mods > 1e-12, mods, 1.0), 1.0)
        target = np.where(rounded == 1,
                          np.clip(mods, 1.0, self.scn.rho_max), 1.0)
        u = phases * target
        fallback = False
        drained = self._amp_power(rounded, u, p)
        if drained > self.scn.p_ris_max + 1e-12:
            # shrink active gains toward break-even until the budget fits
            lo, hi = 0.0, 1.0
            base = np.where(rounded == 1, 1.0, target)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                trial = base + mid * (target - base)
                if self._amp_power(rounded, phases * trial, p) <= self.scn.p_ris_max:
                    lo = mid
                else:
                    hi = mid
            u = phases * (base + lo * (target - base))
            if self._amp_power(rounded, u, p) > self.scn.p_ris_max + 1e-12:
                rounded = np.zeros(self.m, dtype=np.int8)
                u = phases * np.ones(self.m)
                fallback = True
        return (ModeSchedule(rounded), RisCoefficients(_canonical_u(u)), fallback)

    def _amp_power(self, alpha: np.ndarray, u: np.ndarray, p: np.ndarray) -> float:
        z2 = (alpha * np.abs(u)) ** 2
        return float(p.sum() * np.sum(z2 * self.h_abs ** 2)
                     + self.scn.noise_ris * np.sum(z2))


def solve_joint_big_m(chs: ChannelSet, scn: Scenario, p: PowerAllocation,
                      xi: float, mu: float | None = None,
                      big_m_constant: float | None = None,
                      expansion: JointIterate | None = None) -> tuple:
    """One-shot convenience wrapper around `JointSolver.run`."""
    solver = JointSolver(chs, scn, big_m_constant=big_m_constant)
    return solver.run(p, xi, mu=mu, expansion=expansion)
