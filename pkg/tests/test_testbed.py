import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asmfgp.errors import DataFormatError, DegenerateDataError, DimensionMismatchError
from asmfgp.kernels import KernelSpec
from asmfgp.testbed import (
    HASHING,
    ORTHONORMAL,
    analytic_function,
    build_problem,
    descriptor_name,
    embed,
    embedding_matrix,
    gp_draw,
    ingest_csv,
    list_problems,
    make_split,
)


# --- analytic functions ---------------------------------------------------------------

def test_branin_minimum():
    u = np.array([[(np.pi + 5.0) / 15.0, 2.275 / 15.0]])
    assert analytic_function("branin")(u)[0] == pytest.approx(0.397887, abs=1e-4)


@pytest.mark.parametrize("d", [10, 20])
def test_levy_minimum(d):
    u = np.full((1, d), (1.0 + 10.0) / 20.0)
    assert abs(analytic_function("levy", d)(u)[0]) < 1e-10


def test_sobol_unit_factors():
    # each factor (|4x - 2| + a) / (1 + a) equals one at x = 0.75 (and at 0.25)
    prob = analytic_function("sobol", 8)
    assert prob(np.full((1, 8), 0.75))[0] == pytest.approx(1.0, abs=1e-10)
    assert prob(np.full((1, 8), 0.25))[0] == pytest.approx(1.0, abs=1e-10)


def test_sobol_custom_coefficients():
    prob = analytic_function("sobol", 2, coefficients=[1.0, 3.0])
    x = np.array([[0.1, 0.9]])
    expected = (abs(0.4 - 2) + 1) / 2 * (abs(3.6 - 2) + 3) / 4
    assert prob(x)[0] == pytest.approx(expected, rel=1e-12)


def test_hartmann3_minimum():
    x = np.array([[0.114614, 0.555649, 0.852547]])
    assert analytic_function("hartmann3")(x)[0] == pytest.approx(-3.86278, abs=1e-4)


def test_analytic_errors():
    with pytest.raises(KeyError):
        analytic_function("rosenbrock", 3)
    with pytest.raises(DimensionMismatchError):
        analytic_function("branin", 3)
    with pytest.raises(DimensionMismatchError):
        analytic_function("levy")
    with pytest.raises(DimensionMismatchError):
        analytic_function("branin")(np.zeros((1, 3)))


# --- GP draws ---------------------------------------------------------------------

def test_draws_are_deterministic():
    a, b = gp_draw(3, n_points=200, seed=4), gp_draw(3, n_points=200, seed=4)
    np.testing.assert_array_equal(a.pool, b.pool)
    np.testing.assert_array_equal(a.pool_values, b.pool_values)
    Xq = np.random.default_rng(0).uniform(size=(5, 3))
    np.testing.assert_array_equal(a(Xq), b(Xq))
    assert not np.array_equal(a.pool_values, gp_draw(3, n_points=200, seed=5).pool_values)


def test_draw_evaluate_reproduces_pool():
    p = gp_draw(2, n_points=150, seed=1)
    np.testing.assert_allclose(p(p.pool), p.pool_values, atol=1e-6)


def test_additive_draw_has_no_interaction():
    g = np.linspace(0, 1, 25)
    grid = np.array([[a, b] for a in g for b in g])
    p = gp_draw(2, n_points=0, seed=3, additive=True, locations=grid)
    for F in (p.pool_values.reshape(25, 25), p(grid + 0.01 * (grid < 0.5)).reshape(25, 25)):
        fit = F.mean(axis=1, keepdims=True) + F.mean(axis=0, keepdims=True) - F.mean()
        assert np.max(np.abs(F - fit)) < 1e-6


def test_standard_draw_empirical_variance():
    d = 8
    spec = KernelSpec.product(np.full(d, 0.2 * np.sqrt(d)))
    var = np.var(gp_draw(d, spec, 1000, seed=0).pool_values)
    assert abs(var - 1.0) < 0.25


def test_draw_dimension_check():
    with pytest.raises(DimensionMismatchError):
        gp_draw(3, KernelSpec.product([1.0, 1.0]))


# --- embeddings -------------------------------------------------------------------

def test_identity_embedding_equals_inner():
    inner = analytic_function("hartmann3")
    X = np.random.default_rng(1).uniform(size=(20, 3))
    emb = embed(inner, 3, matrix=np.eye(3))
    np.testing.assert_allclose(emb(X), inner(X), rtol=1e-14)


def test_orthonormal_embedding_is_a_ridge(rng):
    prob = embed(analytic_function("hartmann3"), 8, ORTHONORMAL, seed=2)
    A = np.asarray(prob.provenance["matrix"])
    null = np.linalg.svd(A.T)[2][3:]  # rows span the orthogonal complement of A's columns
    x = np.full((1, 8), 0.5) + 0.05 * rng.uniform(-1, 1, size=(1, 8))
    for v in null:
        shifted = x + 0.2 * v / np.max(np.abs(v)) * 0.5
        assert prob(shifted)[0] == pytest.approx(prob(x)[0], abs=1e-12)


def test_hashing_golden_values():
    # produced once by this implementation and frozen as a regression lock
    prob = build_problem("branin_hash10", 3)
    X = np.random.default_rng(2024).uniform(size=(5, 10))
    golden = [7.860838295577226, 128.6244067264514, 41.82796233089678,
              27.777052042351148, 32.90644994392797]
    np.testing.assert_allclose(prob(X), golden, rtol=1e-10)


def test_hashing_matrix_structure():
    A = embedding_matrix(10, 2, HASHING, seed=0)
    assert np.all(np.count_nonzero(A, axis=1) == 1)
    assert set(np.unique(A[A != 0])) <= {-1.0, 1.0}


@given(st.integers(0, 2**16))
def test_orthonormal_matrix_contracts(seed):
    A = embedding_matrix(8, 3, ORTHONORMAL, seed)
    np.testing.assert_allclose(A.T @ A, np.eye(3), atol=1e-12)
    x = np.random.default_rng(seed).normal(size=8)
    assert np.linalg.norm(A.T @ x) <= np.linalg.norm(x) + 1e-12


def test_embed_dimension_check():
    with pytest.raises(DimensionMismatchError):
        embed(analytic_function("hartmann3"), 2)


# --- datasets and splits ----------------------------------------------------------------

def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_toy_csv_ingest_and_split(tmp_path):
    path = write(tmp_path, "a,b,y\n0,10,1\n1,20,2\n2,40,6\n")
    prob = ingest_csv(path, "y")
    assert prob.d == 2 and prob.provenance["columns"] == ["a", "b"]
    s = make_split(prob, 2, seed=0)
    assert s.X_train.shape == (2, 2) and s.X_test.shape == (1, 2)
    np.testing.assert_allclose(s.X_train.min(axis=0), 0.0)
    np.testing.assert_allclose(s.X_train.max(axis=0), 1.0)
    assert s.y_train.mean() == pytest.approx(0.0, abs=1e-12)
    assert s.y_train.std() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        prob(np.zeros((1, 2)))


def test_constant_target_is_degenerate(tmp_path):
    with pytest.raises(DegenerateDataError):
        ingest_csv(write(tmp_path, "a,y\n1,3\n2,3\n"), "y")


def test_non_numeric_column_rejected(tmp_path):
    with pytest.raises(DataFormatError):
        ingest_csv(write(tmp_path, "a,y\nred,1\nblue,2\n"), "y")


def test_missing_target_column(tmp_path):
    with pytest.raises(DataFormatError):
        ingest_csv(write(tmp_path, "a,b\n1,2\n"), "y")


def test_missing_values_are_dropped_with_warning(tmp_path, caplog):
    path = write(tmp_path, "a,y\n1,2\n,3\n3,NA\n4,5\n")
    with caplog.at_level(logging.WARNING, logger="asmfgp.testbed"):
        prob = ingest_csv(path, "y")
    assert prob.pool.shape == (2, 1) and prob.provenance["dropped_rows"] == 2
    assert "dropped 2 row" in caplog.text


def test_split_is_deterministic_and_disjoint():
    prob = build_problem("branin", 0)
    a, b = make_split(prob, 30, seed=8), make_split(prob, 30, seed=8)
    np.testing.assert_array_equal(a.X_train, b.X_train)
    np.testing.assert_array_equal(a.y_test, b.y_test)
    assert len(np.intersect1d(a.train_index, a.test_index)) == 0
    assert len(a.train_index) + len(a.test_index) == 1000
    c = make_split(prob, 30, seed=9)
    assert not np.array_equal(a.X_train, c.X_train)


def test_split_uses_training_statistics():
    prob = gp_draw(2, n_points=300, seed=0)
    s = make_split(prob, 50, seed=1)
    raw = prob.pool_values
    np.testing.assert_allclose(s.y_train * s.y_sd + s.y_mean, raw[s.train_index])
    np.testing.assert_allclose(s.y_test * s.y_sd + s.y_mean, raw[s.test_index])
    assert s.y_mean == pytest.approx(raw[s.train_index].mean())


def test_split_size_check():
    with pytest.raises(ValueError):
        make_split(gp_draw(2, n_points=20, seed=0), 20)


# --- registry ---------------------------------------------------------------------

@pytest.mark.parametrize("name", list_problems())
def test_registry_problems_are_finite(name):
    prob = build_problem(name, 0)
    X = np.random.default_rng(0).uniform(size=(1000, prob.d))
    assert np.all(np.isfinite(prob(X)))


def test_descriptor_forms(tmp_path):
    assert build_problem({"analytic": "levy", "d": 12}).d == 12
    draw = build_problem({"gp_draw": 4, "additive": True, "lengthscale": 0.4, "n_points": 50}, 1)
    assert draw.d == 4 and draw.pool.shape == (50, 4)
    emb = build_problem({"embed": "branin", "d": 6, "matrix": "hashing"}, 2)
    assert emb.d == 6
    path = write(tmp_path, "a,y\n1,2\n2,5\n")
    assert build_problem({"csv": str(path), "target": "y"}).d == 1
    with pytest.raises(KeyError):
        build_problem("nope")
    assert descriptor_name("levy10") == "levy10"
    assert descriptor_name({"analytic": "levy", "d": 12}) == "analytic=levy_d=12"
