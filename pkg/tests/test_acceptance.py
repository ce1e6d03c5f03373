"""Full-pipeline acceptance battery.

Every criterion prints one verdict line on the unbuffered stdout, so a
complete run reads as a report card even under output capture. The heavy
fixtures run whole seed batteries once per session and are shared by the
checks that grade different aspects of the same runs.
"""

import sys
import time
import warnings

import numpy as np
import pytest

from hybridris import baselines, drivers, oracle
from hybridris import subproblems as sub
from hybridris.scenario import (
    ChannelSet,
    Scenario,
    channels,
    random_schedule_mask,
)
from hybridris.sysmodel import (
    ModeSchedule,
    check_feasibility,
    effective_gains,
    sinr,
    sinr_from_lifted,
    sinr_from_split,
    amplification_power,
    amplification_power_elementwise,
    PowerAllocation,
    RisCoefficients,
    SolutionPoint,
)

warnings.filterwarnings("ignore", message="Solution may be inaccurate")

# Batteries. Element counts use the fixed 4-wide panel except where a
# 10-element panel keeps a subset comparison non-degenerate.
SMALL_SIZES = ((2, 1), (3, 1))      # (m_x, m_y) for the grid-oracle match
SMALL_SEEDS = tuple(range(10))
SMALL_BATTERY = dict(user_count=1, p_feed_max=0.01, p_ris_max=0.05)

HEAD_SEEDS = tuple(range(20))
# 10 dBm feed with a 50 mW amplification budget: two active elements are
# affordable, so the exhaustive search faces a real candidate set (37).
HEAD_BATTERY = dict(m_x=4, m_y=2, user_count=2, p_feed_max=0.01,
                    p_ris_max=0.05)

APERTURE_COLUMNS = (2, 3, 4, 5)     # m_y sweep: 8, 12, 16, 20 elements
APERTURE_BATTERY = dict(m_x=4, user_count=1)

LADDER_BUDGETS = (0.05, 0.1, 0.2, 0.4)
# 0 dBm feed keeps per-element amplification cheap, so the best active
# count genuinely climbs with the budget instead of saturating at once.
LADDER_BATTERY = dict(m_x=4, m_y=2, user_count=1, p_feed_max=0.001)

QUALITY_COUNTS = (3, 8)
QUALITY_BATTERY = dict(m_x=5, m_y=2, user_count=1, p_feed_max=0.001,
                       p_ris_max=0.1)


def verdict(tag: str, ok: bool, detail: str) -> bool:
    print(f"{tag} {'PASS' if ok else 'FAIL'}: {detail}",
          file=sys.__stdout__, flush=True)
    return ok


def cascade_order(chs) -> np.ndarray:
    """Element indices sorted by falling cascade strength, first user."""
    return np.argsort(-np.abs(effective_gains(chs)[0]))


def xi_path(report) -> list:
    rows = report.outer_trace
    return [float(r["xi"]) for r in rows] + [float(rows[-1]["xi_next"])]


# ---------------------------------------------------------------------------
# Heavy shared batteries
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_match():
    """Grid oracle vs exhaustive search on 2- and 3-element arrays."""
    runs = []
    for m_x, m_y in SMALL_SIZES:
        for seed in SMALL_SEEDS:
            scn = Scenario(m_x=m_x, m_y=m_y, rng_seed=seed, **SMALL_BATTERY)
            chs = channels(scn)
            t0 = time.perf_counter()
            orc = oracle.brute_force(chs, scn)
            rep = drivers.algorithm1(chs, scn)
            runs.append({"m": scn.m, "seed": seed, "oracle": orc,
                         "report": rep, "scn": scn, "chs": chs,
                         "wall_s": time.perf_counter() - t0})
    return runs


@pytest.fixture(scope="module")
def head_to_head():
    """Both search schemes plus the all-active/all-passive baselines."""
    runs = []
    for seed in HEAD_SEEDS:
        scn = Scenario(rng_seed=seed, **HEAD_BATTERY)
        chs = channels(scn)
        runs.append({
            "seed": seed, "scn": scn, "chs": chs,
            "enum": drivers.algorithm1(chs, scn),
            "joint": drivers.algorithm2(chs, scn),
            "full_active": baselines.full_active(chs, scn),
            "full_passive": baselines.full_passive(chs, scn),
        })
    return runs


@pytest.fixture(scope="module")
def rising_aperture():
    """Exhaustive search across four panel sizes at stock power levels.

    All sizes of one seed share a single channel draw: the smaller panels
    are leading subpanels of the largest one (element order is x-major, so
    a prefix of columns is a contiguous rectangle). Growing the aperture on
    the same realization is the paired experiment; independent draws per
    size would need far more seeds to see the trend through the noise.
    """
    runs = {m_y: [] for m_y in APERTURE_COLUMNS}
    top = max(APERTURE_COLUMNS)
    for seed in HEAD_SEEDS:
        base = Scenario(m_y=top, rng_seed=seed, **APERTURE_BATTERY)
        full = channels(base)
        for m_y in APERTURE_COLUMNS:
            scn = base.replace(m_y=m_y)
            chs = ChannelSet(h=full.h[:scn.m], g=full.g[:, :scn.m],
                             user_positions=full.user_positions)
            runs[m_y].append(
                {"scn": scn, "chs": chs,
                 "report": drivers.algorithm1(chs, scn)})
    return runs


@pytest.fixture(scope="module")
def count_ladder():
    """Best active count over nested strongest-first sets, per budget."""
    runs = {pr: [] for pr in LADDER_BUDGETS}
    for seed in HEAD_SEEDS:
        for pr in LADDER_BUDGETS:
            scn = Scenario(p_ris_max=pr, rng_seed=seed, **LADDER_BATTERY)
            chs = channels(scn)
            order = cascade_order(chs)
            ladder = []
            for k in range(scn.m + 1):
                sched = ModeSchedule.from_active_set(
                    tuple(int(i) for i in order[:k]), scn.m)
                rep = drivers.solve_fixed_schedule(chs, scn, sched)
                if rep.ok:
                    ladder.append({"k": k, "ee": rep.ee, "report": rep})
            # The ratio iteration resolves the objective to 1e-3; counts
            # whose ratios agree within that are interchangeable to the
            # optimizer, so report the largest of them. Anything finer
            # reads solver noise as a preference.
            top = max(r["ee"] for r in ladder)
            best = [r for r in ladder if r["ee"] >= top - 1e-3][-1]
            runs[pr].append(best)
    return runs


@pytest.fixture(scope="module")
def schedule_quality():
    """Strongest-cascade active sets against seeded random ones."""
    runs = {k: [] for k in QUALITY_COUNTS}
    for seed in HEAD_SEEDS:
        scn = Scenario(rng_seed=seed, **QUALITY_BATTERY)
        chs = channels(scn)
        order = cascade_order(chs)
        for k in QUALITY_COUNTS:
            opt = ModeSchedule.from_active_set(
                tuple(int(i) for i in order[:k]), scn.m)
            rnd = ModeSchedule(random_schedule_mask(scn, k))
            runs[k].append({
                "optimized": drivers.solve_fixed_schedule(chs, scn, opt),
                "random": drivers.solve_fixed_schedule(chs, scn, rnd),
            })
    return runs


def all_runs(small_match, head_to_head, rising_aperture) -> list:
    """(chs, scn, report) triples for every battery run."""
    out = [(r["chs"], r["scn"], r["report"]) for r in small_match]
    for r in head_to_head:
        out.append((r["chs"], r["scn"], r["enum"]))
        out.append((r["chs"], r["scn"], r["joint"]))
    for cells in rising_aperture.values():
        out += [(c["chs"], c["scn"], c["report"]) for c in cells]
    return out


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def test_a1_matches_grid_oracle_on_tiny_arrays(small_match):
    worst = min(r["report"].ee / r["oracle"].ee for r in small_match)
    slowest = max(r["wall_s"] for r in small_match)
    ok = worst >= 0.95 and slowest < 300.0
    assert verdict(
        "A1", ok,
        f"search/oracle ratio >= {worst:.4f} over {len(small_match)} runs "
        f"(floor 0.95), slowest seed {slowest:.1f}s (cap 300s)")


def test_a2_dominates_single_mode_baselines(head_to_head):
    beats_both = 0
    beats_passive = 0
    for r in head_to_head:
        rivals = [b.ee for b in (r["full_active"], r["full_passive"])
                  if b.ee is not None]
        if r["enum"].ee >= max(rivals) - 1e-6:
            beats_both += 1
        if r["enum"].ee >= r["full_passive"].ee - 1e-6:
            beats_passive += 1
    n = len(head_to_head)
    ok = beats_both >= 0.9 * n and beats_passive == n
    assert verdict(
        "A2", ok,
        f"beats best baseline on {beats_both}/{n} seeds (needs >=18), "
        f"all-passive on {beats_passive}/{n} (needs all)")


def test_a3_joint_matches_search_at_a_fraction_of_the_cost(head_to_head):
    ee_enum = np.mean([r["enum"].ee for r in head_to_head])
    ee_joint = np.mean([r["joint"].ee for r in head_to_head])
    t_enum = np.mean([r["enum"].runtime_s for r in head_to_head])
    t_joint = np.mean([r["joint"].runtime_s for r in head_to_head])
    ok = ee_joint >= 0.95 * ee_enum and t_joint <= 0.1 * t_enum
    assert verdict(
        "A3", ok,
        f"mean efficiency ratio {ee_joint / ee_enum:.4f} (floor 0.95), "
        f"joint {t_enum / t_joint:.0f}x faster (needs >=10x)")


def test_a4_ratio_iteration_converges_monotonically(
        small_match, head_to_head, rising_aperture):
    runs = all_runs(small_match, head_to_head, rising_aperture)
    worst_step = 0.0
    worst_final = 0.0
    max_outer = 0
    converged = 0
    for _, _, rep in runs:
        path = xi_path(rep)
        worst_step = max(worst_step,
                         max(a - b for a, b in zip(path, path[1:])))
        worst_final = max(worst_final, abs(path[-1] - path[-2]))
        max_outer = max(max_outer, rep.outer_iters)
        converged += rep.status == "converged"
    ok = (converged == len(runs) and max_outer <= 30
          and worst_step <= 1e-12 and worst_final <= 1e-3)
    assert verdict(
        "A4", ok,
        f"{converged}/{len(runs)} runs converged within {max_outer} outer "
        f"rounds (cap 30), final ratio step <= {worst_final:.2e} (cap 1e-3), "
        f"largest ratio decrease {worst_step:.1e}")


def test_a5_surrogate_bounds_tight_and_valid():
    rng = np.random.default_rng(20260816)
    tight_err = 0.0
    worst_violation = 0.0  # positive = surrogate on the wrong side

    def track(expansion_gap, sample_gaps):
        nonlocal tight_err, worst_violation
        tight_err = max(tight_err, abs(float(expansion_gap)))
        worst_violation = max(worst_violation,
                              float(np.max(sample_gaps, initial=-np.inf)))

    for _ in range(100):
        # rate minorant in the auxiliary (x, y) pair
        x0, y0 = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=2))
        x = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=100))
        y = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=100))
        exact = np.log2(1.0 + 1.0 / (x * y))
        bound = sub.rate_lower_bound_affine(x, y, x0, y0)
        track(sub.rate_lower_bound_affine(x0, y0, x0, y0)
              - np.log2(1.0 + 1.0 / (x0 * y0)),
              bound - exact)

        # received-power minorant in the coefficient vector
        m = int(rng.integers(2, 13))
        c = rng.normal(size=m) + 1j * rng.normal(size=m)
        u0 = rng.normal(size=m) + 1j * rng.normal(size=m)
        track(sub.signal_power_linearized(c, u0, u0) - abs(c @ u0) ** 2,
              [sub.signal_power_linearized(c, u, u0) - abs(c @ u) ** 2
               for u in (rng.normal(size=(100, m))
                         + 1j * rng.normal(size=(100, m)))])

        # rank-gap majorant in the lifted matrix
        m = int(rng.integers(2, 9))
        a0 = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        u_prev = a0 @ a0.conj().T
        gaps = []
        for _ in range(100):
            a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
            u_mat = a @ a.conj().T
            eig = np.linalg.eigvalsh(u_mat)
            true_gap = float(np.sum(np.abs(eig)) - eig[-1])
            gaps.append(true_gap - sub.spectral_linearization(u_mat, u_prev))
        eig0 = np.linalg.eigvalsh(u_prev)
        track(sub.spectral_linearization(u_prev, u_prev)
              - (np.sum(np.abs(eig0)) - eig0[-1]), gaps)

        # binary-gap majorant in the relaxed schedule
        a0 = rng.uniform(size=8)
        al = rng.uniform(size=(100, 8))
        track(np.max(np.abs(sub.binary_penalty(a0, a0) - a0 * (1 - a0))),
              al * (1 - al) - sub.binary_penalty(al, a0))

        # interference-log majorant in the rival power total
        shared = np.exp(rng.uniform(np.log(1e-6), 0.0))
        floor = np.exp(rng.uniform(np.log(1e-6), 0.0))
        q0 = rng.uniform(0.0, 1.0)
        q = rng.uniform(0.0, 1.0, size=100)
        track(sub.interference_log_tangent(q0, q0, shared, floor)
              - np.log2(shared * q0 + floor),
              np.log2(shared * q + floor)
              - sub.interference_log_tangent(q, q0, shared, floor))

    ok = tight_err <= 1e-9 and worst_violation <= 1e-9
    assert verdict(
        "A5", ok,
        f"five bounds: expansion error <= {tight_err:.1e} and worst "
        f"wrong-side slack {worst_violation:.1e} over 5x100x100 samples "
        f"(caps 1e-9)")


def test_a6_model_forms_agree():
    rng = np.random.default_rng(31415)
    worst_sinr = 0.0
    worst_power = 0.0
    for i in range(100):
        scn = Scenario(m_x=int(rng.integers(2, 5)),
                       m_y=int(rng.integers(1, 3)),
                       user_count=int(rng.integers(1, 4)),
                       rng_seed=int(rng.integers(1 << 30)))
        chs = channels(scn)
        mask = rng.integers(0, 2, size=scn.m).astype(np.int8)
        sched = ModeSchedule(mask)
        mods = np.where(mask == 1, rng.uniform(0.3, scn.rho_max, size=scn.m),
                        1.0)
        u = mods * np.exp(1j * rng.uniform(0, 2 * np.pi, size=scn.m))
        p = rng.uniform(0.1, 1.0, size=chs.k)
        p *= rng.uniform(0.2, 1.0) * scn.p_feed_max / p.sum()
        pt = SolutionPoint(sched, RisCoefficients(u), PowerAllocation(p))

        direct = sinr(chs, pt, scn)
        v = np.conj(u)
        lifted = sinr_from_lifted(chs, sched, np.outer(v, np.conj(v)), p, scn)
        split = sinr_from_split(chs, u, mask * u, p, scn)
        scale = np.maximum(np.abs(direct), 1e-30)
        worst_sinr = max(worst_sinr,
                         float(np.max(np.abs(direct - lifted) / scale)),
                         float(np.max(np.abs(direct - split) / scale)))

        total = amplification_power(chs, pt, scn)
        per_elem = amplification_power_elementwise(chs, pt, scn)
        worst_power = max(worst_power, abs(total - per_elem))
    ok = worst_sinr <= 1e-9 and worst_power <= 1e-12
    assert verdict(
        "A6", ok,
        f"three SINR forms within {worst_sinr:.1e} relative (cap 1e-9), "
        f"two amplification-drain forms within {worst_power:.1e} (cap 1e-12)")


def test_a7_trends_follow_the_resources(rising_aperture, count_ladder,
                                        schedule_quality):
    ee_by_m = [float(np.mean([c["report"].ee for c in rising_aperture[m_y]]))
               for m_y in APERTURE_COLUMNS]
    aperture_ok = all(b >= a for a, b in zip(ee_by_m, ee_by_m[1:]))

    act_by_budget = [float(np.mean([r["k"] for r in count_ladder[pr]]))
                     for pr in LADDER_BUDGETS]
    ladder_ok = all(b >= a for a, b in zip(act_by_budget, act_by_budget[1:]))

    quality_ok = True
    margins = {}
    for k in QUALITY_COUNTS:
        opt = float(np.mean([r["optimized"].ee for r in schedule_quality[k]]))
        rnd = float(np.mean([r["random"].ee for r in schedule_quality[k]]))
        margins[k] = opt / rnd
        quality_ok = quality_ok and opt >= rnd

    ok = aperture_ok and ladder_ok and quality_ok
    assert verdict(
        "A7", ok,
        f"mean ratio vs panel size {[round(v, 3) for v in ee_by_m]} "
        f"({'up' if aperture_ok else 'NOT up'}); mean active count vs budget "
        f"{[round(v, 2) for v in act_by_budget]} "
        f"({'up' if ladder_ok else 'NOT up'}); picked/random ratio "
        f"{ {k: round(v, 3) for k, v in margins.items()} } (needs >=1)")


def test_a8_lifted_solutions_recover_rank_one(
        small_match, head_to_head, rising_aperture):
    runs = all_runs(small_match, head_to_head, rising_aperture)
    rows = 0
    worst_residual = 0.0
    infeasible_points = 0
    for chs, scn, rep in runs:
        for row in rep.trace:
            if row["stage"] == "beamforming" \
                    and row["solver_status"] == "optimal" \
                    and row["rank_residual"] != "":
                rows += 1
                worst_residual = max(worst_residual,
                                     float(row["rank_residual"]))
        if rep.point is not None \
                and not check_feasibility(chs, rep.point, scn).feasible:
            infeasible_points += 1
    ok = rows > 0 and worst_residual <= 1e-5 and infeasible_points == 0
    assert verdict(
        "A8", ok,
        f"rank residual <= {worst_residual:.1e} on {rows} settled lifted "
        f"solves (cap 1e-5), {infeasible_points} final points failed the "
        f"1e-6 feasibility recheck")
