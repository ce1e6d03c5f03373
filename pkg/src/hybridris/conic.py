"""Small conic-program IR over a mature convex backend.

Variables are real (scalars, vectors, symmetric matrices); complex Hermitian
PSD blocks enter through `embed_hermitian`. Every constraint row carries a
tag naming the model constraint it encodes so problems can be audited row by
row, and solve results re-evaluate all rows to report a primal residual.

This module is the only one that imports the backend (cvxpy, solved with
CLARABEL and falling back to SCS). Coefficients that change between solves
of the same problem structure are declared via `ConicProblem.param`, which
lets the backend reuse its canonicalization across repeated solves.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

CONES = ("nonnegative", "zero", "second-order", "rotated-second-order",
         "exponential", "positive-semidefinite")

_STATUS_MAP = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "inaccurate",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    "infeasible_or_unbounded": "infeasible",
}


@dataclass(frozen=True)
class SolveOptions:
    solver: str = "CLARABEL"
    fallback: str | None = "SCS"
    tolerance: float = 1e-8
    max_iters: int = 200_000
    # The fallback is a first-order method; asking it for interior-point
    # accuracy makes every rescue solve take seconds instead of tens of ms.
    fallback_tolerance: float = 1e-6
    fallback_max_iters: int = 10_000
    verbose: bool = False


@dataclass(frozen=True)
class ConicSolution:
    status: str            # optimal | infeasible | inaccurate | failed
    values: dict           # variable name -> numpy value (empty unless solved)
    objective: float | None
    solver_time: float     # seconds
    iterations: int
    # Max constraint violation re-evaluated at the returned point. Filled
    # for inaccurate exits, where callers must decide whether to trust the
    # point; None on clean ones (use max_violation() for an ad-hoc check).
    residual: float | None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class ConicProblem:
    """Tagged-cone problem built from real variables, maximizing an affine objective."""

    def __init__(self, name: str = ""):
        self.name = name
        self._vars: dict = {}
        self._params: dict = {}
        self._rows: list = []       # (tag, cone, cvxpy constraint)
        self._objective = None
        self._compiled = {}

    # -- variables and parameters -------------------------------------------------

    def _register(self, name: str, var):
        if name in self._vars or name in self._params:
            raise ValueError(f"duplicate name: {name}")
        self._vars[name] = var
        return var

    def add_scalar(self, name: str, nonneg: bool = False):
        return self._register(name, cp.Variable(name=name, nonneg=nonneg))

    def add_vector(self, name: str, n: int, nonneg: bool = False):
        if n < 1:
            raise ValueError("vector length must be positive")
        return self._register(name, cp.Variable(n, name=name, nonneg=nonneg))

    def add_symmetric(self, name: str, n: int):
        if n < 1:
            raise ValueError("matrix order must be positive")
        return self._register(name, cp.Variable((n, n), name=name, symmetric=True))

    def param(self, name: str, shape=(), value=None):
        """Declare an updatable affine coefficient (kept across re-solves)."""
        if name in self._params or name in self._vars:
            raise ValueError(f"duplicate name: {name}")
        p = cp.Parameter(shape, name=name)
        if value is not None:
            p.value = value
        self._params[name] = p
        return p

    # -- constraint rows ------------------------------------------------------

    def _add_row(self, tag: str, cone: str, constraint) -> None:
        if not tag or not isinstance(tag, str):
            raise ValueError("every constraint row needs a non-empty tag")
        self._rows.append((tag, cone, constraint))
        self._compiled = {}

    def nonneg(self, expr, tag: str) -> None:
        """expr >= 0 elementwise."""
        self._check_affine(expr)
        self._add_row(tag, "nonnegative", expr >= 0)

    def zero(self, expr, tag: str) -> None:
        """expr == 0 elementwise."""
        self._check_affine(expr)
        self._add_row(tag, "zero", expr == 0)

    def soc(self, bound, vec, tag: str) -> None:
        """||vec||_2 <= bound."""
        self._check_affine(bound)
        self._check_affine(vec)
        if isinstance(bound, (int, float)):
            bound = cp.Constant(float(bound))
        self._add_row(tag, "second-order", cp.SOC(bound, _as_vector(vec)))

    def rotated_soc(self, x, y, vec, tag: str) -> None:
        """x * y >= ||vec||^2 with x, y >= 0, as a plain second-order row."""
        self._check_affine(x)
        self._check_affine(y)
        self._check_affine(vec)
        stacked = cp.hstack([2.0 * _as_vector(vec), cp.reshape(x - y, (1,), order="C")])
        self._add_row(tag, "rotated-second-order", cp.SOC(x + y, stacked))

    def exp_log(self, t, x, tag: str) -> None:
        """t <= log(x), encoded on the exponential cone."""
        self._check_affine(t)
        self._check_affine(x)
        self._add_row(tag, "exponential", t <= cp.log(x))

    def psd(self, expr, tag: str) -> None:
        """expr is symmetric positive semidefinite."""
        if expr.shape[0] != expr.shape[1]:
            raise ValueError("PSD block must be square")
        self._add_row(tag, "positive-semidefinite", expr >> 0)

    # -- objective and solving --------------------------------------------------

    @staticmethod
    def _check_affine(expr) -> None:
        if isinstance(expr, (int, float, np.ndarray)):
            return
        if not expr.is_affine():
            raise ValueError("expression must be affine in the variables")

    def maximize(self, expr) -> None:
        self._check_affine(expr)
        self._objective = cp.Maximize(expr)
        self._compiled = {}

    def tags(self) -> set:
        return {tag for tag, _, _ in self._rows}

    def rows_by_tag(self) -> dict:
        out: dict = {}
        for tag, cone, _ in self._rows:
            out.setdefault(tag, []).append(cone)
        return out

    def _problem(self, solver: str) -> cp.Problem:
        # One Problem object per solver: cvxpy keys its canonicalization
        # cache on the (problem, solver) pair, so sharing a single object
        # between the primary and the fallback would recanonicalize on
        # every switch. The expression graph itself is shared.
        if self._objective is None:
            raise ValueError("objective not set")
        prob = self._compiled.get(solver)
        if prob is None:
            prob = cp.Problem(self._objective, [c for _, _, c in self._rows])
            self._compiled[solver] = prob
        return prob

    def solve(self, opts: SolveOptions = SolveOptions()) -> ConicSolution:
        status, message = "failed", ""
        t0 = time.perf_counter()
        for solver in (opts.solver, opts.fallback):
            if solver is None:
                continue
            problem = self._problem(solver)
            try:
                problem.solve(solver=solver, verbose=opts.verbose,
                              **_solver_args(solver, opts))
            except cp.SolverError as err:
                message = f"{solver}: {err}"
                continue
            status = _STATUS_MAP.get(problem.status, None)
            if status is None:
                status, message = "failed", f"{solver}: {problem.status}"
                if "unbounded" in str(problem.status):
                    message = f"{solver}: unbounded"
            if status in ("optimal", "inaccurate", "infeasible"):
                break
        wall = time.perf_counter() - t0

        values: dict = {}
        residual = None
        objective = None
        if status in ("optimal", "inaccurate"):
            values = {name: np.array(v.value) if v.value is not None else None
                      for name, v in self._vars.items()}
            objective = float(problem.value)
            if status == "inaccurate":
                # The trust gate needs the true violation only for shaky
                # exits; evaluating every row on clean ones is pure drag.
                residual = self.max_violation()
        stats = problem.solver_stats
        solver_time = wall if stats is None or stats.solve_time is None else stats.solve_time
        iters = 0 if stats is None or stats.num_iters is None else int(stats.num_iters)
        return ConicSolution(status=status, values=values, objective=objective,
                             solver_time=float(solver_time), iterations=iters,
                             residual=residual, message=message)

    def max_violation(self) -> float:
        """Re-evaluate every row at the current primal point."""
        worst = 0.0
        for _, _, constraint in self._rows:
            v = constraint.violation()
            worst = max(worst, float(np.max(v)))
        return worst

    def to_json(self) -> str:
        """Structural dump (sizes and tags, not data) for solver-bug triage."""
        doc = {
            "name": self.name,
            "variables": {n: list(np.shape(v)) for n, v in self._vars.items()},
            "parameters": {n: list(np.shape(p)) for n, p in self._params.items()},
            "rows": [{"tag": tag, "cone": cone} for tag, cone, _ in self._rows],
            "objective": None if self._objective is None else str(self._objective.expr),
        }
        return json.dumps(doc, indent=2)


def _as_vector(expr):
    if isinstance(expr, (int, float)):
        return cp.Constant(np.array([float(expr)]))
    if isinstance(expr, np.ndarray):
        return cp.Constant(np.atleast_1d(expr))
    if expr.ndim == 0:
        return cp.reshape(expr, (1,), order="C")
    return expr


def _solver_args(solver: str, opts: SolveOptions) -> dict:
    if solver == "SCS":
        return {"eps": opts.fallback_tolerance,
                "max_iters": opts.fallback_max_iters}
    if solver == "CLARABEL":
        return {"tol_gap_abs": opts.tolerance, "tol_gap_rel": opts.tolerance,
                "tol_feas": opts.tolerance, "max_iter": opts.max_iters}
    return {}


# -- Hermitian embedding -------------------------------------------------------


def embed_hermitian(h: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of Hermitian H.

    Preserves the PSD cone and doubles traces and eigenvalue multiplicities;
    the real pairing <emb(C), emb(H)> equals 2 Tr(C H) for Hermitian C, H.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(h).max()))
    if not np.allclose(h, h.conj().T, atol=tol * scale):
        raise ValueError("matrix is not Hermitian")
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def de_embed(s: np.ndarray) -> np.ndarray:
    """Project a real 2n x 2n matrix back to the complex Hermitian it embeds."""
    if s.shape[0] % 2 or s.shape[0] != s.shape[1]:
        raise ValueError("expected a 2n x 2n matrix")
    n = s.shape[0] // 2
    re = 0.5 * (s[:n, :n] + s[n:, n:])
    im = 0.5 * (s[n:, :n] - s[:n, n:])
    h = re + 1j * im
    return 0.5 * (h + h.conj().T)


def trace_pairing(s_var, emb_matrix):
    """Affine expression for Tr(H C) given the embedded variable and emb(C)."""
    return 0.5 * cp.sum(cp.multiply(s_var, emb_matrix))


def embedded_diag(s_var, n: int):
    """Affine expression for the real diagonal of the embedded Hermitian."""
    d = cp.diag(s_var)
    return 0.5 * (d[:n] + d[n:])


def add_embedding_structure(prob: ConicProblem, s_var, n: int, tag: str) -> None:
    """Equality rows pinning the 2n x 2n variable to the embedded subspace."""
    prob.zero(s_var[:n, :n] - s_var[n:, n:], tag)
    prob.zero(s_var[:n, n:] + s_var[n:, :n], tag)


def extract_rank_one(mat: np.ndarray) -> np.ndarray:
    """Dominant-eigenpair factor of a (near) rank-one Hermitian matrix.

    Accepts either the complex Hermitian matrix or its real embedding. The
    global phase is fixed so the first entry above numerical noise is real
    and positive, which makes extraction deterministic.
    """
    h = mat
    if np.isrealobj(mat) and mat.shape[0] % 2 == 0:
        h = de_embed(mat)
    h = 0.5 * (h + h.conj().T)
    eigvals, eigvecs = np.linalg.eigh(h)
    lam = max(float(eigvals[-1]), 0.0)
    v = np.sqrt(lam) * eigvecs[:, -1]
    norm = np.linalg.norm(v)
    if norm > 0:
        idx = int(np.argmax(np.abs(v) > 1e-12 * norm))
        phase = v[idx] / abs(v[idx]) if abs(v[idx]) > 0 else 1.0
        v = v * np.conj(phase)
        v = np.where(np.abs(v.imag) < 1e-15 * norm, v.real + 0j, v)
    return v


def rank_residual(mat: np.ndarray) -> float:
    """Nuclear norm minus spectral norm; zero iff rank one (or zero)."""
    h = mat
    if np.isrealobj(mat) and mat.shape[0] % 2 == 0:
        h = de_embed(mat)
    h = 0.5 * (h + h.conj().T)
    eigvals = np.linalg.eigvalsh(h)
    eigvals = np.clip(eigvals, 0.0, None)
    return float(eigvals.sum() - eigvals.max(initial=0.0))
