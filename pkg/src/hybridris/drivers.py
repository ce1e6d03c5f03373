"""Two-layer fractional-programming drivers.

The outer layer is a Dinkelbach loop on the ratio weight xi.  The inner
layer alternates convexified subproblems, and an update is accepted only
if it does not decrease the true objective R - xi * P evaluated at the
verified physical operating point (a feasible point always beats an
infeasible one).  Because each inner loop starts from the previous outer
iteration's point, whose objective at the freshly updated xi is exactly
zero, the acceptance rule makes the xi sequence nondecreasing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import subproblems as sub
from .scenario import ChannelSet, Scenario
from .sysmodel import (
    ModeSchedule,
    PowerAllocation,
    RisCoefficients,
    SolutionPoint,
    check_feasibility,
    sum_rate,
    total_power,
)

EPS_INNER = 1e-3        # relative objective change that stops the inner loop
EPS_OUTER = 1e-3        # |xi' - xi| threshold for the outer loop
MAX_INNER = 20
MAX_OUTER = 30
ENUMERATION_LIMIT = 12  # benchmark ceiling on M for enum-vs-joint timing
CANDIDATE_LIMIT = 4096  # refuse exhaustive search over more sets than this

# Flat schema for per-stage trace rows (the CSV log adds a seed column).
TRACE_FIELDS = (
    "scheme", "candidate", "outer_iter", "inner_iter", "stage", "xi",
    "objective", "accepted", "sum_rate", "p_tot", "rank_residual",
    "binarity", "solver_status", "solve_time_s",
)

OUTER_TRACE_FIELDS = (
    "outer_iter", "xi", "sum_rate", "p_tot", "objective", "inner_iters",
    "xi_next",
)


def dinkelbach_update(rate_sum: float, p_total: float) -> float:
    """Next ratio weight: the rate-to-power ratio of the current point."""
    if p_total <= 0:
        raise ValueError("total consumed power must be positive")
    return rate_sum / p_total


@dataclass
class SolveReport:
    """Outcome of one two-layer run, JSON-serializable via `to_dict`."""

    scheme: str
    status: str                     # converged | max_iters | infeasible | failed
    ee: float | None = None
    sum_rate: float | None = None
    p_tot: float | None = None
    xi: float | None = None        # final ratio weight; equals ee at the point
    m_act: int | None = None
    outer_iters: int = 0
    runtime_s: float = 0.0
    point: SolutionPoint | None = None
    outer_trace: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "max_iters")

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "status": self.status,
            "ee": self.ee,
            "sum_rate": self.sum_rate,
            "p_tot": self.p_tot,
            "xi": self.xi,
            "m_act": self.m_act,
            "outer_iters": self.outer_iters,
            "runtime_s": self.runtime_s,
            "point": self.point.to_dict() if self.point is not None else None,
            "outer_trace": self.outer_trace,
            "detail": self.detail,
        }


@dataclass
class _AOState:
    """Mutable bundle the inner loop threads through its stages."""

    point: SolutionPoint
    feasible: bool
    beam_iter: sub.BeamformingIterate | None = None
    joint_iter: sub.JointIterate | None = None


def _eta(chs: ChannelSet, scn: Scenario, point: SolutionPoint,
         xi: float) -> float:
    """True objective R - xi * P at a physical operating point."""
    return sum_rate(chs, point, scn) - xi * total_power(chs, point, scn)


def _verified(chs: ChannelSet, scn: Scenario, point: SolutionPoint) -> bool:
    return check_feasibility(chs, point, scn).feasible


def _blank_row(scheme: str, candidate: str, outer_iter: int, inner_iter: int,
               stage: str, xi: float) -> dict:
    row = dict.fromkeys(TRACE_FIELDS, "")
    row.update(scheme=scheme, candidate=candidate, outer_iter=outer_iter,
               inner_iter=inner_iter, stage=stage, xi=float(xi))
    return row


def _inner_ao(chs: ChannelSet, scn: Scenario, state: _AOState, steps: list,
              xi: float, trace: list, scheme: str, candidate: str,
              outer_iter: int) -> tuple:
    """Alternate the stage steps under the monotone acceptance rule.

    Returns (state, objective value, number of sweeps used).
    """
    cur_eta = _eta(chs, scn, state.point, xi)
    prev_eta = None
    sweeps = 0
    for inner in range(MAX_INNER):
        sweeps = inner + 1
        for stage, step in steps:
            row = _blank_row(scheme, candidate, outer_iter, inner, stage, xi)
            cand_state, rep = step(state, xi)
            row.update(solver_status=rep.status,
                       solve_time_s=float(rep.solver_time))
            if rep.rank_residual is not None:
                row["rank_residual"] = float(rep.rank_residual)
            if rep.binarity is not None:
                row["binarity"] = float(rep.binarity)
            if cand_state is None:
                row["accepted"] = 0
                trace.append(row)
                continue
            cand_eta = _eta(chs, scn, cand_state.point, xi)
            accept = ((cand_state.feasible and not state.feasible)
                      or (cand_state.feasible == state.feasible
                          and cand_eta >= cur_eta))
            if accept:
                state, cur_eta = cand_state, cand_eta
            row.update(objective=float(cand_eta), accepted=int(accept),
                       sum_rate=float(sum_rate(chs, cand_state.point, scn)),
                       p_tot=float(total_power(chs, cand_state.point, scn)))
            trace.append(row)
        # Absolute test, same constant as the outer ratio update: the
        # objective here heads to zero at the fractional root, so a
        # relative test would tighten without bound right at the end.
        if prev_eta is not None and abs(cur_eta - prev_eta) <= EPS_INNER:
            break
        prev_eta = cur_eta
    return state, cur_eta, sweeps


def _two_layer(chs: ChannelSet, scn: Scenario, state: _AOState, steps: list,
               trace: list, scheme: str, candidate: str = "") -> tuple:
    """Dinkelbach outer loop around `_inner_ao`.

    Returns (state, xi, outer trace rows, status).
    """
    xi = 0.0
    outer_rows = []
    status = "max_iters"
    for outer in range(MAX_OUTER):
        state, eta_val, sweeps = _inner_ao(
            chs, scn, state, steps, xi, trace, scheme, candidate, outer)
        if not state.feasible:
            status = "infeasible"
            break
        rate = sum_rate(chs, state.point, scn)
        ptot = total_power(chs, state.point, scn)
        xi_next = dinkelbach_update(rate, ptot)
        outer_rows.append({
            "outer_iter": outer, "xi": float(xi), "sum_rate": float(rate),
            "p_tot": float(ptot), "objective": float(eta_val),
            "inner_iters": sweeps, "xi_next": float(xi_next),
        })
        converged = abs(xi_next - xi) <= EPS_OUTER
        xi = xi_next
        if converged:
            status = "converged"
            break
    return state, xi, outer_rows, status


# ---------------------------------------------------------------------------
# Stage step factories
# ---------------------------------------------------------------------------


def _beamforming_step(chs: ChannelSet, scn: Scenario,
                      solver: sub.BeamformingSolver):
    def step(state: _AOState, xi: float) -> tuple:
        coeffs, it, rep = solver.run(state.point.power, xi,
                                     expansion=state.beam_iter)
        if coeffs is None:
            return None, rep
        point = SolutionPoint(state.point.schedule, coeffs, state.point.power)
        return _AOState(point, _verified(chs, scn, point), beam_iter=it,
                        joint_iter=state.joint_iter), rep
    return step


def _power_step(chs: ChannelSet, scn: Scenario, solver: sub.PowerSolver):
    def step(state: _AOState, xi: float) -> tuple:
        model = sub.ris_power_model(chs, scn, state.point.schedule,
                                    state.point.coeffs)
        alloc, rep = solver.run(model, scn, xi, state.point.power.p)
        if alloc is None:
            return None, rep
        point = SolutionPoint(state.point.schedule, state.point.coeffs, alloc)
        return _AOState(point, _verified(chs, scn, point),
                        beam_iter=state.beam_iter,
                        joint_iter=state.joint_iter), rep
    return step


def _joint_step(chs: ChannelSet, scn: Scenario, solver: sub.JointSolver,
                counters: dict):
    # The binarity penalty is a continuation parameter: restarting its ramp
    # on every alternation step would re-spin the whole relaxation schedule,
    # so the weight reached in one step seeds the next.
    mu_carry: list = [None]

    def step(state: _AOState, xi: float) -> tuple:
        schedule, coeffs, it, rep = solver.run(state.point.power, xi,
                                               mu=mu_carry[0],
                                               expansion=state.joint_iter)
        if rep.trace:
            mu_carry[0] = rep.trace[-1]["mu"]
        if schedule is None:
            counters["joint_failures"] = counters.get("joint_failures", 0) + 1
            return None, rep
        if rep.fallback:
            counters["rounding_fallbacks"] = (
                counters.get("rounding_fallbacks", 0) + 1)
        point = SolutionPoint(schedule, coeffs, state.point.power)
        return _AOState(point, _verified(chs, scn, point), beam_iter=None,
                        joint_iter=it), rep
    return step


# ---------------------------------------------------------------------------
# Schedule-at-a-time search (exhaustive over admissible candidate sets)
# ---------------------------------------------------------------------------


def _initial_state(chs: ChannelSet, scn: Scenario,
                   schedule: ModeSchedule) -> _AOState | None:
    start = sub.initial_power_split(chs, scn, schedule)
    if start is None:
        return None
    point = SolutionPoint(schedule, RisCoefficients(
        sub.initial_coefficients(chs)), start)
    return _AOState(point, _verified(chs, scn, point))


def _candidate_label(active_set: tuple) -> str:
    return "+".join(str(i) for i in active_set) if active_set else "passive"


def _run_schedule(chs: ChannelSet, scn: Scenario, schedule: ModeSchedule,
                  power_solver: sub.PowerSolver, trace: list, scheme: str,
                  candidate: str, amplitude_floor: float | None = None):
    """One complete two-layer run at a fixed mode schedule.

    Returns (state, xi, outer rows, status); state is None when the
    schedule cannot even be initialized.
    """
    state = _initial_state(chs, scn, schedule)
    if state is None:
        return None, None, [], "infeasible"
    beam_solver = sub.BeamformingSolver(chs, scn, schedule,
                                        amplitude_floor=amplitude_floor)
    steps = [("beamforming", _beamforming_step(chs, scn, beam_solver)),
             ("power", _power_step(chs, scn, power_solver))]
    return _two_layer(chs, scn, state, steps, trace, scheme, candidate)


def _finish(report: SolveReport, chs: ChannelSet, scn: Scenario,
            state: _AOState, xi: float, outer_rows: list,
            status: str) -> SolveReport:
    """Fill the summary fields from a finished feasible state."""
    rate = float(sum_rate(chs, state.point, scn))
    ptot = float(total_power(chs, state.point, scn))
    report.status = status
    report.ee = rate / ptot
    report.sum_rate = rate
    report.p_tot = ptot
    report.xi = float(xi)
    report.m_act = int(state.point.m_act)
    report.outer_iters = len(outer_rows)
    report.point = state.point
    report.outer_trace = outer_rows
    return report


def algorithm1(chs: ChannelSet, scn: Scenario, *, allow_large: bool = False,
               include_empty: bool = True) -> SolveReport:
    """Exhaustive search over candidate active sets, best report wins.

    Every admissible candidate gets a cold-started two-layer run, so the
    result does not depend on enumeration order.
    """
    t0 = time.perf_counter()
    trace: list = []
    # The count bound uses the most generous feed split: the full budget.
    probe = PowerAllocation(np.full(chs.k, scn.p_feed_max / chs.k))
    bound, _ = sub.active_count_upper_bound(chs.h, probe, scn)
    n_cand = sum(math.comb(chs.m, j) for j in range(bound + 1))
    if n_cand > CANDIDATE_LIMIT and not allow_large:
        raise ValueError(
            f"exhaustive search over {n_cand} candidate sets (M={chs.m}, "
            f"count bound {bound}) exceeds the limit of {CANDIDATE_LIMIT}; "
            f"pass allow_large=True to force")
    power_solver = sub.PowerSolver(chs.k)
    summaries = []
    best = None
    for cand in sub.enumerate_candidate_sets(chs.m, bound,
                                             include_empty=include_empty):
        label = _candidate_label(cand)
        schedule = ModeSchedule.from_active_set(cand, chs.m)
        state, xi, outer_rows, status = _run_schedule(
            chs, scn, schedule, power_solver, trace, "hybrid-enum", label)
        entry = {"active_set": list(cand), "status": status, "ee": None}
        if state is not None and status in ("converged", "max_iters") \
                and state.feasible:
            entry["ee"] = float(xi)
            entry["outer_iters"] = len(outer_rows)
            if best is None or xi > best[0]:
                best = (xi, state, outer_rows, status, cand)
        summaries.append(entry)
    runtime = time.perf_counter() - t0
    report = SolveReport(scheme="hybrid-enum", status="infeasible",
                         runtime_s=runtime, trace=trace,
                         detail={"candidates": summaries,
                                 "active_bound": int(bound)})
    if best is None:
        return report
    xi, state, outer_rows, status, cand = best
    report.detail["active_set"] = list(cand)
    report.runtime_s = runtime
    return _finish(report, chs, scn, state, xi, outer_rows, status)


def solve_fixed_schedule(chs: ChannelSet, scn: Scenario,
                         schedule: ModeSchedule, *,
                         scheme: str = "fixed-schedule",
                         amplitude_floor: float | None = None) -> SolveReport:
    """Two-layer run with the mode schedule pinned by the caller."""
    t0 = time.perf_counter()
    trace: list = []
    power_solver = sub.PowerSolver(chs.k)
    state, xi, outer_rows, status = _run_schedule(
        chs, scn, schedule, power_solver, trace, scheme,
        _candidate_label(schedule.active_indices()),
        amplitude_floor=amplitude_floor)
    runtime = time.perf_counter() - t0
    report = SolveReport(scheme=scheme, status="infeasible",
                         runtime_s=runtime, trace=trace,
                         detail={"active_set": list(schedule.active_indices())})
    if state is None or status == "infeasible" or not state.feasible:
        return report
    report = _finish(report, chs, scn, state, xi, outer_rows, status)
    report.runtime_s = runtime
    return report


# ---------------------------------------------------------------------------
# Joint relaxation search (low-complexity path)
# ---------------------------------------------------------------------------


def algorithm2(chs: ChannelSet, scn: Scenario) -> SolveReport:
    """Joint schedule-and-coefficient relaxation alternated with power.

    Starts from the all-passive phase-matched point, so the rounded joint
    solution only ever replaces it when the true objective does not drop.
    Falls back to all-passive power-only optimization when the joint
    subproblem never produces a usable point.
    """
    t0 = time.perf_counter()
    trace: list = []
    state = _initial_state(chs, scn, ModeSchedule.all_passive(chs.m))
    if state is None:
        return SolveReport(scheme="hybrid-joint", status="infeasible",
                           runtime_s=time.perf_counter() - t0, trace=trace)
    state.joint_iter = sub.initial_joint_iterate(chs, scn, state.point.power)
    joint_solver = sub.JointSolver(chs, scn)
    power_solver = sub.PowerSolver(chs.k)
    counters: dict = {}
    steps = [("joint", _joint_step(chs, scn, joint_solver, counters)),
             ("power", _power_step(chs, scn, power_solver))]
    state, xi, outer_rows, status = _two_layer(
        chs, scn, state, steps, trace, "hybrid-joint")
    detail = dict(counters)
    if status == "infeasible" or not state.feasible:
        # Power-only rescue at the all-passive phase-matched coefficients.
        rescue = _initial_state(chs, scn, ModeSchedule.all_passive(chs.m))
        rescue_steps = [("power", _power_step(chs, scn, power_solver))]
        state, xi, outer_rows, status = _two_layer(
            chs, scn, rescue, rescue_steps, trace, "hybrid-joint",
            candidate="rescue")
        detail["fallback"] = "all-passive-power-only"
    runtime = time.perf_counter() - t0
    report = SolveReport(scheme="hybrid-joint", status="infeasible",
                         runtime_s=runtime, trace=trace, detail=detail)
    if status == "infeasible" or not state.feasible:
        return report
    report = _finish(report, chs, scn, state, xi, outer_rows, status)
    report.runtime_s = runtime
    return report
