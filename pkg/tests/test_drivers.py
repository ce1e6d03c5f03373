"""Two-layer driver tests: ratio updates, traces, and both search paths."""

import json
import warnings

import numpy as np
import pytest

from hybridris import drivers
from hybridris import subproblems as sub
from hybridris.scenario import Scenario, channels, random_schedule_mask
from hybridris.sysmodel import (
    ModeSchedule,
    check_feasibility,
    energy_efficiency,
    sum_rate,
    total_power,
)

warnings.filterwarnings("ignore", message="Solution may be inaccurate")


def small_scenario(**kw):
    base = dict(m_x=2, m_y=1, user_count=1, rate_min=0.1, p_feed_max=0.1,
                p_ris_max=0.6, rng_seed=3)
    base.update(kw)
    return Scenario(**base)


def xi_sequence(report):
    return [row["xi"] for row in report.outer_trace] + [report.xi]


class TestDinkelbachUpdate:
    def test_ratio(self):
        assert drivers.dinkelbach_update(4.0, 2.0) == 2.0

    def test_zero_rate(self):
        assert drivers.dinkelbach_update(0.0, 1.5) == 0.0

    def test_nonpositive_power_rejected(self):
        with pytest.raises(ValueError):
            drivers.dinkelbach_update(1.0, 0.0)
        with pytest.raises(ValueError):
            drivers.dinkelbach_update(1.0, -2.0)


class TestAlgorithm1:
    @pytest.fixture(scope="class")
    def solved(self):
        scn = small_scenario()
        chs = channels(scn)
        return scn, chs, drivers.algorithm1(chs, scn)

    def test_converged_and_feasible(self, solved):
        scn, chs, rep = solved
        assert rep.status == "converged"
        assert rep.ok
        assert check_feasibility(chs, rep.point, scn).feasible

    def test_xi_trace_nondecreasing(self, solved):
        _, _, rep = solved
        xis = xi_sequence(rep)
        assert all(b >= a - 1e-9 for a, b in zip(xis, xis[1:]))

    def test_objective_rows_shrink_toward_zero(self, solved):
        _, _, rep = solved
        objs = [row["objective"] for row in rep.outer_trace]
        assert all(b <= a + 1e-9 for a, b in zip(objs, objs[1:]))
        assert all(o >= -1e-9 for o in objs)
        assert abs(objs[-1]) <= drivers.EPS_OUTER * rep.p_tot + 1e-9

    def test_final_ratio_step_is_small(self, solved):
        _, _, rep = solved
        last = rep.outer_trace[-1]
        assert abs(last["xi_next"] - last["xi"]) <= drivers.EPS_OUTER

    def test_summary_fields_consistent(self, solved):
        scn, chs, rep = solved
        assert rep.ee == pytest.approx(rep.sum_rate / rep.p_tot, abs=1e-9)
        assert rep.ee == pytest.approx(rep.xi, abs=1e-9)
        assert rep.ee == pytest.approx(
            energy_efficiency(chs, rep.point, scn), abs=1e-9)
        assert rep.m_act == rep.point.m_act
        assert rep.outer_iters == len(rep.outer_trace)

    def test_beats_all_passive_candidate(self, solved):
        _, _, rep = solved
        passive = next(c for c in rep.detail["candidates"]
                       if c["active_set"] == [])
        assert passive["ee"] is not None
        assert rep.ee >= passive["ee"] - 1e-9

    def test_candidate_count_matches_bound(self, solved):
        _, chs, rep = solved
        bound = rep.detail["active_bound"]
        assert len(rep.detail["candidates"]) == sub.candidate_count(
            chs.m, bound)

    def test_report_is_json_serializable(self, solved):
        _, _, rep = solved
        doc = json.loads(json.dumps(rep.to_dict()))
        assert doc["scheme"] == "hybrid-enum"
        assert doc["point"]["p"]

    def test_trace_row_schema(self, solved):
        _, _, rep = solved
        assert rep.trace
        for row in rep.trace:
            assert set(row) == set(drivers.TRACE_FIELDS)
        for row in rep.outer_trace:
            assert set(row) == set(drivers.OUTER_TRACE_FIELDS)

    def test_deterministic_rerun(self, solved):
        scn, chs, rep = solved
        again = drivers.algorithm1(chs, scn)
        assert again.ee == rep.ee
        assert np.array_equal(again.point.coeffs.u, rep.point.coeffs.u)
        assert np.array_equal(again.point.power.p, rep.point.power.p)

    def test_enumeration_order_invariance(self, solved, monkeypatch):
        scn, chs, rep = solved
        original = sub.enumerate_candidate_sets

        def reversed_enumeration(m, upper_bound, include_empty=True):
            yield from reversed(list(original(m, upper_bound,
                                              include_empty=include_empty)))

        monkeypatch.setattr(sub, "enumerate_candidate_sets",
                            reversed_enumeration)
        flipped = drivers.algorithm1(chs, scn)
        assert flipped.ee == pytest.approx(rep.ee, abs=1e-6)

    def test_zero_bound_reduces_to_passive_only(self):
        scn = small_scenario(p_ris_max=5e-10)  # below the injected noise
        chs = channels(scn)
        rep = drivers.algorithm1(chs, scn)
        assert rep.detail["active_bound"] == 0
        assert len(rep.detail["candidates"]) == 1
        assert rep.m_act == 0
        assert rep.ok

    def test_large_search_guard(self):
        # A generous amplification budget admits every element, so the
        # candidate count hits 2^16 and the guard must refuse.
        scn = small_scenario(m_x=4, m_y=4, p_ris_max=60.0)
        chs = channels(scn)
        with pytest.raises(ValueError, match="candidate sets"):
            drivers.algorithm1(chs, scn)

    def test_large_array_cheap_budget_ok(self):
        # The same 16-element array with a starved battery affords no
        # active elements at all; the search is one candidate and must run.
        scn = small_scenario(m_x=4, m_y=4, user_count=1, p_ris_max=0.05)
        chs = channels(scn)
        rep = drivers.algorithm1(chs, scn)
        assert rep.ok
        assert rep.m_act == 0

    def test_all_candidates_infeasible(self):
        # Two users behind the same rank-one effective channel cannot both
        # clear five bits: the interference floor caps the worse SINR.
        scn = small_scenario(m_y=2, user_count=2, rate_min=5.0)
        chs = channels(scn)
        rep = drivers.algorithm1(chs, scn)
        assert rep.status == "infeasible"
        assert not rep.ok
        assert rep.point is None


class TestFeedStarvedActivation:
    @pytest.fixture(scope="class")
    def solved(self):
        scn = Scenario(m_x=2, m_y=2, user_count=1, rate_min=0.1,
                       p_feed_max=1e-3, p_ris_max=0.05, rng_seed=5)
        chs = channels(scn)
        return scn, chs, drivers.algorithm1(chs, scn)

    def test_activation_beats_passive(self, solved):
        _, _, rep = solved
        passive = next(c for c in rep.detail["candidates"]
                       if c["active_set"] == [])
        assert rep.m_act >= 1
        assert rep.ee > 1.5 * passive["ee"]

    def test_point_respects_amplitude_and_budget(self, solved):
        scn, chs, rep = solved
        fr = check_feasibility(chs, rep.point, scn)
        assert fr.feasible, fr.violations
        active = rep.point.schedule.active_mask
        assert np.abs(rep.point.coeffs.u[active]).max() <= scn.rho_max + 1e-9


class TestAlgorithm2:
    @pytest.fixture(scope="class")
    def solved(self):
        scn = Scenario(m_x=2, m_y=2, user_count=2, rate_min=0.1,
                       p_feed_max=0.1, p_ris_max=0.4, rng_seed=7)
        chs = channels(scn)
        return scn, chs, drivers.algorithm2(chs, scn)

    def test_converged_and_feasible(self, solved):
        scn, chs, rep = solved
        assert rep.ok
        assert check_feasibility(chs, rep.point, scn).feasible

    def test_xi_trace_nondecreasing(self, solved):
        _, _, rep = solved
        xis = xi_sequence(rep)
        assert all(b >= a - 1e-9 for a, b in zip(xis, xis[1:]))

    def test_schedule_strictly_binary(self, solved):
        _, _, rep = solved
        alpha = rep.point.schedule.alpha.astype(float)
        assert np.sum(alpha * (1.0 - alpha)) == 0.0

    def test_improves_on_starting_point(self, solved):
        scn, chs, rep = solved
        start = drivers._initial_state(chs, scn,
                                       ModeSchedule.all_passive(chs.m))
        started = sum_rate(chs, start.point, scn) / total_power(
            chs, start.point, scn)
        assert rep.ee >= started - 1e-9

    def test_deterministic_rerun(self, solved):
        scn, chs, rep = solved
        again = drivers.algorithm2(chs, scn)
        assert again.ee == rep.ee
        assert np.array_equal(again.point.coeffs.u, rep.point.coeffs.u)

    def test_report_is_json_serializable(self, solved):
        _, _, rep = solved
        doc = json.loads(json.dumps(rep.to_dict()))
        assert doc["scheme"] == "hybrid-joint"

    def test_unreachable_rate_floor_reported_infeasible(self):
        scn = Scenario(m_x=2, m_y=2, user_count=2, rate_min=5.0,
                       p_feed_max=0.1, p_ris_max=0.4, rng_seed=7)
        chs = channels(scn)
        rep = drivers.algorithm2(chs, scn)
        assert rep.status == "infeasible"
        assert rep.detail.get("fallback") == "all-passive-power-only"


class TestFixedSchedule:
    def test_random_mask_schedule(self):
        scn = small_scenario(m_y=2)
        chs = channels(scn)
        mask = random_schedule_mask(scn, 1)
        rep = drivers.solve_fixed_schedule(chs, scn, ModeSchedule(mask),
                                           scheme="random-schedule")
        assert rep.scheme == "random-schedule"
        assert rep.ok
        assert rep.m_act == 1
        assert np.array_equal(rep.point.schedule.alpha, mask)

    def test_amplitude_floor_keeps_actives_amplifying(self):
        scn = small_scenario(p_feed_max=1e-3, p_ris_max=0.05)
        chs = channels(scn)
        rep = drivers.solve_fixed_schedule(
            chs, scn, ModeSchedule.all_active(chs.m), scheme="full-active",
            amplitude_floor=1.0)
        assert rep.ok
        assert np.abs(rep.point.coeffs.u).min() >= 1.0 - 1e-9
        assert check_feasibility(chs, rep.point, scn).feasible
