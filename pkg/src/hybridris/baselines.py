"""Comparison schemes evaluated under the same power accounting.

Two fixed-mode variants reuse the alternating driver with a pinned
schedule.  The RF-chain baseline replaces the reflect array with an
M-antenna line array driven by zero-forcing precoding, so only the power
allocation is optimized; it pays for M RF chains and no per-element
electronics.
"""

from __future__ import annotations

import time

import numpy as np

from . import subproblems as sub
from .drivers import (
    EPS_OUTER,
    MAX_OUTER,
    SolveReport,
    _blank_row,
    dinkelbach_update,
    solve_fixed_schedule,
)
from .scenario import ChannelSet, Scenario, random_schedule_mask
from .sysmodel import ModeSchedule

# Diagonal loading applied to the user Gram matrix when it is numerically
# rank deficient; flagged in the report whenever used.
ZF_LOADING = 1e-9
ZF_COND_LIMIT = 1e12


def full_active(chs: ChannelSet, scn: Scenario) -> SolveReport:
    """Every element amplifying: schedule all-ones, gains kept at or above 1."""
    return solve_fixed_schedule(chs, scn, ModeSchedule.all_active(chs.m),
                                scheme="full-active", amplitude_floor=1.0)


def full_passive(chs: ChannelSet, scn: Scenario) -> SolveReport:
    """Every element reflecting at unit modulus, no injected noise."""
    return solve_fixed_schedule(chs, scn, ModeSchedule.all_passive(chs.m),
                                scheme="full-passive")


def random_schedule(chs: ChannelSet, scn: Scenario,
                    n_active: int) -> SolveReport:
    """Seeded uniform draw of the active set, then the usual alternation."""
    mask = random_schedule_mask(scn, n_active)
    report = solve_fixed_schedule(chs, scn, ModeSchedule(mask),
                                  scheme="random-schedule")
    report.detail["n_active"] = int(n_active)
    return report


def zf_precoder(chs_ula: ChannelSet, scn: Scenario) -> tuple:
    """Column-normalized zero-forcing precoder for the line-array downlink.

    Returns (W, own_gains, residual, loaded): W is (M, K), own_gains are
    the noise-normalized per-user power gains of the diagonalized channel,
    residual is the worst leftover cross-user coupling, and loaded flags
    the rank-deficiency rescue.
    """
    g = chs_ula.g
    k, m = g.shape
    if k > m:
        raise ValueError("zero-forcing needs at least as many antennas as users")
    gram = g @ g.conj().T
    loaded = bool(np.linalg.cond(gram) > ZF_COND_LIMIT)
    if loaded:
        gram = gram + ZF_LOADING * np.eye(k)
    w = g.conj().T @ np.linalg.inv(gram)
    w = w / np.linalg.norm(w, axis=0, keepdims=True)
    effective = g @ w
    own = np.abs(np.diag(effective)) ** 2 / scn.noise_user
    off = effective - np.diag(np.diag(effective))
    residual = float(np.abs(off).max()) if k > 1 else 0.0
    return w, own, residual, loaded


def zf_power_model(chs_ula: ChannelSet, scn: Scenario) -> tuple:
    """Interference-free power model charged for M RF chains."""
    w, own, residual, loaded = zf_precoder(chs_ula, scn)
    k, m = chs_ula.k, chs_ula.m
    model = sub.PowerModel(
        own=own,
        shared=np.zeros(k),
        floor=np.ones(k),
        amp_lin=0.0,
        amp_const=0.0,
        p_fixed=m * scn.p_rf_chain + scn.p_circuit,
    )
    return model, w, residual, loaded


def zf_rf_chain(chs_ula: ChannelSet, scn: Scenario) -> SolveReport:
    """Fully digital baseline: ratio loop over the power allocation only."""
    t0 = time.perf_counter()
    trace: list = []
    model, w, residual, loaded = zf_power_model(chs_ula, scn)
    detail = {"zf_residual": residual, "diagonal_loading": loaded}
    solver = sub.PowerSolver(chs_ula.k)
    p = np.full(chs_ula.k, scn.p_feed_max / chs_ula.k)
    xi = 0.0
    outer_rows = []
    status = "max_iters"
    rate = ptot = None
    for outer in range(MAX_OUTER):
        alloc, rep = solver.run(model, scn, xi, p)
        row = _blank_row("zf-rf-chain", "", outer, 0, "power", xi)
        row.update(solver_status=rep.status,
                   solve_time_s=float(rep.solver_time))
        if alloc is None:
            trace.append(row)
            status = "infeasible"
            break
        p = alloc.p
        rate = float(np.sum(sub.model_rates(model, p)))
        ptot = float(sub.model_total_power(model, p, scn))
        row.update(objective=float(rate - xi * ptot), accepted=1,
                   sum_rate=rate, p_tot=ptot)
        trace.append(row)
        xi_next = dinkelbach_update(rate, ptot)
        outer_rows.append({
            "outer_iter": outer, "xi": float(xi), "sum_rate": rate,
            "p_tot": ptot, "objective": float(rate - xi * ptot),
            "inner_iters": rep.iterations, "xi_next": float(xi_next),
        })
        converged = abs(xi_next - xi) <= EPS_OUTER
        xi = xi_next
        if converged:
            status = "converged"
            break
    runtime = time.perf_counter() - t0
    report = SolveReport(scheme="zf-rf-chain", status=status,
                         runtime_s=runtime, trace=trace, detail=detail)
    if status in ("converged", "max_iters") and rate is not None:
        report.ee = rate / ptot
        report.sum_rate = rate
        report.p_tot = ptot
        report.xi = float(xi)
        report.m_act = 0
        report.outer_iters = len(outer_rows)
        report.outer_trace = outer_rows
        report.detail["p"] = [float(v) for v in p]
    return report
