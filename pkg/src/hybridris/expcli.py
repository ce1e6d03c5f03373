"""Command line front end: single runs, sweeps, baselines, timing, brute force.

Artifacts are plain JSON and CSV so downstream tooling does not need this
package installed. Units are annotated in `#` comment lines ahead of every
CSV header. Wall-clock numbers live only in the CSV outputs; report.json
carries no timing so a rerun with the same seed is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context

import numpy as np

from . import baselines as bl
from . import drivers, oracle
from .scenario import (Scenario, channels, random_schedule_mask, save_scenario,
                       scenario_from_dict, ula_variant)
from .sysmodel import ModeSchedule

SCHEMES = ("hybrid-enum", "hybrid-joint", "full-active", "full-passive",
           "random-schedule", "zf-rf-chain")
BASELINE_SCHEMES = ("full-active", "full-passive", "zf-rf-chain")
DEFAULT_SWEEP_SCHEMES = ("hybrid-joint", "full-active", "full-passive",
                         "zf-rf-chain")
SWEEP_AXES = ("M", "R_min", "P_r_max", "scheme", "M_act")

RESULT_FIELDS = ("axis", "value", "scheme", "seed", "m", "k", "ee",
                 "sum_rate", "p_tot", "m_act", "outer_iters", "runtime_s",
                 "status")
RESULT_COMMENTS = (
    "# units: ee bit/s/Hz/W, sum_rate bit/s/Hz, p_tot W, runtime_s seconds",
    "# the value column follows the axis: M and M_act are element counts,"
    " R_min bit/s/Hz, P_r_max W",
)
TRACE_COMMENT = ("# units: xi and objective bit/s/Hz/W-weighted,"
                 " sum_rate bit/s/Hz, p_tot W, solve_time_s seconds")
TIMING_FIELDS = ("k", "m", "seeds", "mean_enum_s", "mean_joint_s", "speedup")
TIMING_COMMENT = ("# mean wall-clock seconds over the seed list;"
                  " speedup = mean_enum_s / mean_joint_s")
TIMING_USER_COUNTS = (3, 6)


# ---------------------------------------------------------------------------
# config loading


def _die_config(path: str, lineno: int, message: str) -> None:
    print(f"{path}:{lineno}: {message}", file=sys.stderr)
    raise SystemExit(2)


def _key_line(text: str, key: str) -> int:
    """1-based line of the first occurrence of a quoted JSON key."""
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return 1


def load_config(path: str | None) -> tuple[Scenario, dict]:
    """Read a scenario config; None means the built-in defaults.

    Returns the scenario plus the raw document (the picklable form handed
    to sweep workers). Any problem exits with code 2 and a file:line
    prefix on stderr.
    """
    if path is None:
        return Scenario(), {}
    if not os.path.exists(path):
        _die_config(path, 1, "config file not found")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        _die_config(path, err.lineno, f"invalid JSON: {err.msg}")
    if not isinstance(raw, dict):
        _die_config(path, 1, "expected a JSON object of scenario fields")
    try:
        scn = scenario_from_dict(raw)
    except (TypeError, ValueError) as err:
        message = str(err)
        key = next((k for k in raw if k in message), None)
        _die_config(path, _key_line(text, key) if key else 1, message)
    return scn, raw


def parse_seeds(text: str | None, default) -> list[int]:
    """Seed lists: "7", "0,3,9", or an inclusive range "0..19"."""
    if text is None:
        return list(default)
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty seed list")
    return out


def parse_schedule(text: str, scn: Scenario) -> ModeSchedule:
    """Schedule specs: "none", "random:N", or active indices "0,2,5"."""
    if text in ("", "none", "passive"):
        return ModeSchedule(np.zeros(scn.m, dtype=np.int8))
    if text.startswith("random:"):
        return ModeSchedule(random_schedule_mask(scn, int(text[len("random:"):])))
    idx = sorted({int(p) for p in text.split(",")})
    if idx[0] < 0 or idx[-1] >= scn.m:
        raise ValueError(f"schedule index out of range for M={scn.m}")
    return ModeSchedule.from_active_set(tuple(idx), scn.m)


# ---------------------------------------------------------------------------
# scheme dispatch and artifact writers


def run_scheme(scheme: str, scn: Scenario,
               n_active: int | None = None) -> drivers.SolveReport:
    """Run one named scheme on a fresh channel draw for the scenario."""
    if scheme == "zf-rf-chain":
        return bl.zf_rf_chain(channels(ula_variant(scn)), scn)
    chs = channels(scn)
    if scheme == "hybrid-enum":
        return drivers.algorithm1(chs, scn)
    if scheme == "hybrid-joint":
        return drivers.algorithm2(chs, scn)
    if scheme == "full-active":
        return bl.full_active(chs, scn)
    if scheme == "full-passive":
        return bl.full_passive(chs, scn)
    if scheme == "random-schedule":
        count = n_active if n_active is not None else max(1, scn.m // 2)
        return bl.random_schedule(chs, scn, count)
    raise ValueError(f"unknown scheme: {scheme}")


def report_document(rep: drivers.SolveReport) -> dict:
    doc = rep.to_dict()
    # Timing belongs to the CSV outputs; dropping it keeps report.json
    # byte-identical across reruns of the same seed.
    doc.pop("runtime_s", None)
    return doc


def write_report(path: str, rep: drivers.SolveReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_document(rep), fh, indent=2)
        fh.write("\n")


def write_trace(path: str, seed: int, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TRACE_COMMENT + "\n")
        writer = csv.DictWriter(fh, fieldnames=("seed",) + drivers.TRACE_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({"seed": seed, **row})


def write_results(path: str, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for comment in RESULT_COMMENTS:
            fh.write(comment + "\n")
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        writer.writerows(rows)


def result_row(axis: str, value, scheme: str, seed: int, scn: Scenario,
               rep: drivers.SolveReport | None = None,
               error: str | None = None) -> dict:
    row = dict.fromkeys(RESULT_FIELDS, "")
    row.update(axis=axis, value=value, scheme=scheme, seed=seed,
               m=scn.m, k=scn.user_count)
    if error is not None:
        row["status"] = f"error:{error}"
        return row
    row["status"] = rep.status
    row["outer_iters"] = rep.outer_iters
    row["runtime_s"] = float(rep.runtime_s)
    if rep.ok and rep.ee is not None:
        row["ee"] = float(rep.ee)
        row["sum_rate"] = float(rep.sum_rate)
        row["p_tot"] = float(rep.p_tot)
        row["m_act"] = int(rep.m_act)
    return row


# ---------------------------------------------------------------------------
# sweeps


def apply_axis(scn: Scenario, axis: str, value) -> Scenario:
    if axis == "M":
        m = int(value)
        if m % scn.m_x != 0:
            raise ValueError(f"M={m} is not a multiple of m_x={scn.m_x}")
        return scn.replace(m_y=m // scn.m_x)
    if axis == "R_min":
        return scn.replace(rate_min=float(value))
    if axis == "P_r_max":
        return scn.replace(p_ris_max=float(value))
    # scheme and M_act vary the run, not the scenario
    return scn


def parse_values(axis: str, text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty value list")
    if axis in ("M", "M_act"):
        return [int(p) for p in parts]
    if axis in ("R_min", "P_r_max"):
        return [float(p) for p in parts]
    for p in parts:
        if p not in SCHEMES:
            raise ValueError(f"unknown scheme: {p}")
    return parts


def _sweep_cell(task: tuple) -> dict:
    """One (value, scheme, seed) run; always returns a row, never raises."""
    raw, axis, value, scheme, seed, n_active = task
    scn = scenario_from_dict(raw).replace(rng_seed=seed)
    try:
        scn = apply_axis(scn, axis, value)
        rep = run_scheme(scheme, scn, n_active=n_active)
    except Exception as err:  # a sweep must survive any one bad cell
        return result_row(axis, value, scheme, seed, scn,
                          error=type(err).__name__)
    return result_row(axis, value, scheme, seed, scn, rep=rep)


def run_cells(tasks: list, jobs: int) -> list:
    """Row per task, preserving task order regardless of worker count."""
    if jobs > 1:
        ctx = get_context("spawn")  # avoid forking a BLAS-threaded parent
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            return list(pool.map(_sweep_cell, tasks))
    return [_sweep_cell(t) for t in tasks]


def _sweep_tasks(raw: dict, axis: str, values: list, schemes: list,
                 seeds: list) -> list:
    tasks = []
    for value in values:
        if axis == "scheme":
            cell_schemes = [(value, None)]
        elif axis == "M_act":
            cell_schemes = [("random-schedule", int(value))]
        else:
            cell_schemes = [(s, None) for s in schemes]
        for scheme, n_active in cell_schemes:
            for seed in seeds:
                tasks.append((raw, axis, value, scheme, seed, n_active))
    return tasks


def _print_rows(rows: list) -> None:
    for i, row in enumerate(rows, start=1):
        ee = row["ee"] if row["ee"] != "" else "-"
        print(f"[{i}/{len(rows)}] {row['scheme']} {row['axis']}="
              f"{row['value']} seed={row['seed']}: {row['status']} ee={ee}")


def cmd_sweep(args, parser) -> int:
    _, raw = load_config(args.config)
    try:
        values = parse_values(args.axis, args.values)
        seeds = parse_seeds(args.seeds, range(20))
    except ValueError as err:
        parser.error(str(err))
    if args.scheme:
        schemes = [s.strip() for s in args.scheme.split(",") if s.strip()]
        unknown = [s for s in schemes if s not in SCHEMES]
        if unknown:
            parser.error(f"unknown scheme: {unknown[0]}")
    else:
        schemes = list(DEFAULT_SWEEP_SCHEMES)
    tasks = _sweep_tasks(raw, args.axis, values, schemes, seeds)
    rows = run_cells(tasks, args.jobs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "results.csv")
    write_results(path, rows)
    _print_rows(rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_baselines(args, parser) -> int:
    _, raw = load_config(args.config)
    try:
        seeds = parse_seeds(args.seeds, range(20))
    except ValueError as err:
        parser.error(str(err))
    if args.scheme:
        values = parse_values("scheme", args.scheme)
    else:
        values = list(BASELINE_SCHEMES)
    tasks = _sweep_tasks(raw, "scheme", values, [], seeds)
    rows = run_cells(tasks, args.jobs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "results.csv")
    write_results(path, rows)
    _print_rows(rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


# ---------------------------------------------------------------------------
# single runs, brute force, timing


def cmd_solve(args, parser) -> int:
    scn0, _ = load_config(args.config)
    try:
        seeds = parse_seeds(args.seeds, [0])
    except ValueError as err:
        parser.error(str(err))
    for seed in seeds:
        scn = scn0.replace(rng_seed=seed)
        try:
            if args.fixed_schedule is not None:
                schedule = parse_schedule(args.fixed_schedule, scn)
                rep = drivers.solve_fixed_schedule(channels(scn), scn,
                                                   schedule)
            else:
                rep = run_scheme(args.scheme, scn)
        except ValueError as err:
            parser.error(str(err))
        outdir = os.path.join(args.out, f"{rep.scheme}-seed{seed}")
        os.makedirs(outdir, exist_ok=True)
        save_scenario(scn, os.path.join(outdir, "scenario.json"))
        write_report(os.path.join(outdir, "report.json"), rep)
        write_trace(os.path.join(outdir, "trace.csv"), seed, rep.trace)
        ee = f"{rep.ee:.6g}" if rep.ee is not None else "-"
        print(f"{rep.scheme} seed={seed}: status={rep.status} ee={ee} "
              f"m_act={rep.m_act} -> {outdir}")
    return 0


def cmd_bruteforce(args, parser) -> int:
    scn0, _ = load_config(args.config)
    try:
        seeds = parse_seeds(args.seeds, [0])
    except ValueError as err:
        parser.error(str(err))
    for seed in seeds:
        scn = scn0.replace(rng_seed=seed)
        try:
            res = oracle.brute_force(channels(scn), scn)
        except ValueError as err:
            parser.error(str(err))
        outdir = os.path.join(args.out, f"bruteforce-seed{seed}")
        os.makedirs(outdir, exist_ok=True)
        save_scenario(scn, os.path.join(outdir, "scenario.json"))
        with open(os.path.join(outdir, "report.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(res.to_dict(), fh, indent=2)
            fh.write("\n")
        ee = f"{res.ee:.6g}" if res.ee is not None else "-"
        print(f"bruteforce seed={seed}: ee={ee} "
              f"evaluated={res.evaluated} feasible={res.feasible}")
    return 0


def cmd_time(args, parser) -> int:
    scn0, _ = load_config(args.config)
    if scn0.m > drivers.ENUMERATION_LIMIT:
        parser.error(f"timing runs the exhaustive search; M={scn0.m} "
                     f"exceeds its limit of {drivers.ENUMERATION_LIMIT}")
    try:
        seeds = parse_seeds(args.seeds, [0, 1, 2])
    except ValueError as err:
        parser.error(str(err))
    rows = []
    slower = []
    for k in TIMING_USER_COUNTS:
        t_enum, t_joint = [], []
        for seed in seeds:
            scn = scn0.replace(user_count=k, rng_seed=seed)
            chs = channels(scn)
            t_enum.append(drivers.algorithm1(chs, scn).runtime_s)
            t_joint.append(drivers.algorithm2(chs, scn).runtime_s)
        mean_enum = float(np.mean(t_enum))
        mean_joint = float(np.mean(t_joint))
        speedup = mean_enum / mean_joint
        rows.append({"k": k, "m": scn0.m, "seeds": len(seeds),
                     "mean_enum_s": mean_enum, "mean_joint_s": mean_joint,
                     "speedup": speedup})
        print(f"K={k}: enumeration {mean_enum:.2f}s, "
              f"joint {mean_joint:.2f}s, speedup {speedup:.1f}x")
        if mean_enum <= mean_joint:
            slower.append(k)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "timing.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TIMING_COMMENT + "\n")
        writer = csv.DictWriter(fh, fieldnames=TIMING_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote timing to {path}")
    if slower:
        print(f"warning: joint design was not faster at K={slower}",
              file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", default=None,
                    help="scenario JSON; omitted means the built-in defaults")
    sp.add_argument("--seeds", default=None,
                    help='seed list: "7", "0,3,9", or a range "0..19"')
    sp.add_argument("--out", default="runs",
                    help="output directory (default: runs)")
    sp.add_argument("--jobs", type=int, default=1,
                    help="worker processes for sweep cells (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridris",
        description="Energy-efficiency experiments for a hybrid "
                    "active-passive RIS transmitter.")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("solve", help="one run per seed, full artifacts")
    _add_common(sp)
    sp.add_argument("--scheme", default="hybrid-joint", choices=SCHEMES,
                    help="design scheme (default: hybrid-joint)")
    sp.add_argument("--fixed-schedule", default=None,
                    help='pin the element modes: "none", "random:N", '
                         'or active indices "0,2,5"')
    sp.set_defaults(func=cmd_solve)

    sp = subs.add_parser("sweep", help="axis sweep to results.csv")
    _add_common(sp)
    sp.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sp.add_argument("--values", required=True,
                    help="comma-separated axis values")
    sp.add_argument("--scheme", default=None,
                    help="comma-separated schemes (default: "
                         + ",".join(DEFAULT_SWEEP_SCHEMES) + ")")
    sp.set_defaults(func=cmd_sweep)

    sp = subs.add_parser("baselines",
                         help="baseline schemes on the base scenario")
    _add_common(sp)
    sp.add_argument("--scheme", default=None,
                    help="comma-separated subset (default: "
                         + ",".join(BASELINE_SCHEMES) + ")")
    sp.set_defaults(func=cmd_baselines)

    sp = subs.add_parser("bruteforce",
                         help="grid-search certificate for tiny scenarios")
    _add_common(sp)
    sp.set_defaults(func=cmd_bruteforce)

    sp = subs.add_parser("time",
                         help="wall-clock comparison of the two designs")
    _add_common(sp)
    sp.set_defaults(func=cmd_time)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
