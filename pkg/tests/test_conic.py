"""Conic IR, Hermitian embedding, and backend behavior checks."""

import json

import numpy as np
import pytest

from hybridris import conic


def random_hermitian_psd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T


def test_embed_identity_1x1():
    np.testing.assert_array_equal(conic.embed_hermitian(np.array([[1.0]])),
                                  np.eye(2))


def test_embed_rejects_non_hermitian():
    with pytest.raises(ValueError):
        conic.embed_hermitian(np.array([[1.0, 2.0], [3.0, 4.0]]) + 1j)
    with pytest.raises(ValueError):
        conic.embed_hermitian(np.ones(3))


def test_embed_rank_one_doubles():
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        emb = conic.embed_hermitian(np.outer(u, u.conj()))
        eigvals = np.linalg.eigvalsh(emb)
        assert np.sum(eigvals > 1e-9) == 2
        assert eigvals[-1] == pytest.approx(eigvals[-2], rel=1e-9)
        assert eigvals[-1] == pytest.approx(np.linalg.norm(u) ** 2, rel=1e-9)


def test_embed_trace_factor_two():
    rng = np.random.default_rng(1)
    for n in (1, 2, 5):
        h = random_hermitian_psd(rng, n)
        emb = conic.embed_hermitian(h)
        assert np.trace(emb) == pytest.approx(2 * np.trace(h).real, rel=1e-12)


def test_embed_linear_and_psd_preserving():
    rng = np.random.default_rng(2)
    for _ in range(25):
        n = int(rng.integers(1, 6))
        a, b = random_hermitian_psd(rng, n), random_hermitian_psd(rng, n)
        s, t = rng.standard_normal(2)
        lhs = conic.embed_hermitian(s * a + t * b)
        rhs = s * conic.embed_hermitian(a) + t * conic.embed_hermitian(b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        assert np.linalg.eigvalsh(conic.embed_hermitian(a)).min() > -1e-9


def test_embed_pairing_preserves_functionals():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        c, h = random_hermitian_psd(rng, n), random_hermitian_psd(rng, n)
        complex_val = np.trace(c @ h).real
        real_val = 0.5 * np.sum(conic.embed_hermitian(c) * conic.embed_hermitian(h))
        assert real_val == pytest.approx(complex_val, rel=1e-10)


def test_de_embed_round_trip():
    rng = np.random.default_rng(4)
    h = random_hermitian_psd(rng, 3)
    np.testing.assert_allclose(conic.de_embed(conic.embed_hermitian(h)), h, atol=1e-12)


def test_solve_bounded_lp():
    prob = conic.ConicProblem("lp")
    x = prob.add_scalar("x")
    prob.nonneg(3.0 - x, "upper")
    prob.nonneg(x, "lower")
    prob.maximize(x)
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3.0, abs=1e-7)
    assert sol.values["x"] == pytest.approx(3.0, abs=1e-7)
    assert prob.max_violation() <= 1e-7
    assert sol.iterations > 0


def test_solve_exponential_cone():
    prob = conic.ConicProblem("exp")
    x = prob.add_scalar("x")
    t = prob.add_scalar("t")
    prob.exp_log(t, x, "log_bound")
    prob.nonneg(np.e - x, "x_cap")
    prob.maximize(t)
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    assert prob.max_violation() <= 1e-7


def test_solve_tiny_sdp():
    prob = conic.ConicProblem("sdp")
    x = prob.add_symmetric("X", 2)
    prob.psd(x, "psd")
    prob.zero(conic.cp.trace(x) - 1.0, "trace_budget")
    prob.maximize(conic.cp.trace(np.diag([1.0, 2.0]) @ x))
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.0, abs=1e-6)
    assert prob.max_violation() <= 1e-7


def test_solve_complex_sdp_through_embedding():
    # maximize Tr(C H) over Hermitian PSD H with Tr H = 1 gives lambda_max(C).
    c = np.array([[1.0, 1j], [-1j, 1.0]])
    prob = conic.ConicProblem("embedded")
    s = prob.add_symmetric("S", 4)
    prob.psd(s, "psd")
    conic.add_embedding_structure(prob, s, 2, "psd_structure")
    prob.zero(conic.cp.sum(conic.embedded_diag(s, 2)) - 1.0, "trace_budget")
    prob.maximize(conic.trace_pairing(s, conic.embed_hermitian(c)))
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.0, abs=1e-6)
    h = conic.de_embed(sol.values["S"])
    assert np.trace(h).real == pytest.approx(1.0, abs=1e-7)
    assert conic.rank_residual(h) <= 1e-5


def test_rotated_soc_row():
    # maximize t subject to x*y >= t^2 with x = y = 2 gives t = 2.
    prob = conic.ConicProblem("rsoc")
    t = prob.add_scalar("t")
    prob.rotated_soc(2.0, 2.0, t, "hyperbolic")
    prob.maximize(t)
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.0, abs=1e-6)


def test_infeasible_and_unbounded_surface_as_status():
    prob = conic.ConicProblem("inf")
    x = prob.add_scalar("x")
    prob.nonneg(x - 4.0, "lower")
    prob.nonneg(2.0 - x, "upper")
    prob.maximize(x)
    assert prob.solve().status == "infeasible"

    free = conic.ConicProblem("unb")
    y = free.add_scalar("y")
    free.nonneg(y, "lower")
    free.maximize(y)
    sol = free.solve()
    assert sol.status == "failed"
    assert "unbounded" in sol.message


def test_constraint_tags_required():
    prob = conic.ConicProblem()
    x = prob.add_scalar("x")
    with pytest.raises(ValueError):
        prob.nonneg(x, "")
    with pytest.raises(ValueError):
        prob.nonneg(x, None)


def test_objective_must_be_affine():
    prob = conic.ConicProblem()
    x = prob.add_scalar("x")
    with pytest.raises(ValueError):
        prob.maximize(conic.cp.square(x))


def test_duplicate_names_rejected():
    prob = conic.ConicProblem()
    prob.add_scalar("x")
    with pytest.raises(ValueError):
        prob.add_vector("x", 3)


def test_parameter_resolve_reuses_structure():
    prob = conic.ConicProblem("param")
    x = prob.add_scalar("x")
    cap = prob.param("cap", value=1.0)
    prob.nonneg(cap - x, "upper")
    prob.nonneg(x, "lower")
    prob.maximize(x)
    assert prob.solve().objective == pytest.approx(1.0, abs=1e-7)
    cap.value = 5.0
    assert prob.solve().objective == pytest.approx(5.0, abs=1e-7)


def test_json_dump_lists_rows():
    prob = conic.ConicProblem("dump")
    x = prob.add_vector("x", 2)
    prob.nonneg(x, "box")
    prob.soc(2.0, x, "ball")
    prob.maximize(conic.cp.sum(x))
    doc = json.loads(prob.to_json())
    assert doc["name"] == "dump"
    assert doc["variables"]["x"] == [2]
    assert {row["tag"] for row in doc["rows"]} == {"box", "ball"}
    assert {row["cone"] for row in doc["rows"]} == {"nonnegative", "second-order"}


def test_extract_rank_one_reconstructs():
    rng = np.random.default_rng(5)
    for _ in range(20):
        u = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        v = conic.extract_rank_one(np.outer(u, u.conj()))
        np.testing.assert_allclose(np.outer(v, v.conj()), np.outer(u, u.conj()),
                                   atol=1e-9 * np.linalg.norm(u) ** 2)
        # canonical phase: first significant entry real positive
        idx = int(np.argmax(np.abs(v) > 1e-12 * np.linalg.norm(v)))
        assert v[idx].imag == pytest.approx(0.0, abs=1e-12)
        assert v[idx].real > 0


def test_extract_rank_one_accepts_embedding():
    rng = np.random.default_rng(6)
    u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    emb = conic.embed_hermitian(np.outer(u, u.conj()))
    v = conic.extract_rank_one(emb)
    np.testing.assert_allclose(np.outer(v, v.conj()), np.outer(u, u.conj()), atol=1e-9)


def test_rank_residual():
    rng = np.random.default_rng(7)
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert conic.rank_residual(np.outer(u, u.conj())) == pytest.approx(0.0, abs=1e-9)
    assert conic.rank_residual(np.eye(3)) == pytest.approx(2.0, rel=1e-12)
