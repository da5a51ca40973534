import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparse_stap.dictionary import (AngleDopplerGrid, QOperator, SteeringDictionary, apply_T,
                                    build_grid, q_operator, read_profile_csv, write_profile_csv)
from sparse_stap.scene import RadarConfig, space_time_steering

from .conftest import crandn

small_dims = st.tuples(st.integers(2, 5), st.integers(2, 5), st.sampled_from([2, 3]),
                       st.sampled_from([2, 3]))


def test_grid_counts():
    g = build_grid(RadarConfig(), 5, 5)
    assert (g.n_s, g.n_d, g.size) == (50, 50, 2500)
    g = build_grid((2, 2), 2, 2)
    assert g.size == 16
    assert g.doppler_spacing == 1 / g.n_d
    np.testing.assert_allclose(np.diff(g.doppler_values), 1 / g.n_d)
    assert g.doppler_values[0] == -0.5 and g.doppler_values[-1] < 0.5


@pytest.mark.parametrize("rho", [1.0, 0.5, 2.3])
def test_grid_rejects_bad_oversampling(rho):
    with pytest.raises(ValueError):
        build_grid((4, 4), rho, 2)


def test_grid_enumeration_is_doppler_major():
    g = build_grid((3, 2), 2, 3)  # n_s = 6, n_d = 6
    q = g.column(4, 1)
    assert q == 4 * 6 + 1
    assert g.frequencies(q) == (g.doppler_values[4], g.spatial_values[1])


def test_snap_to_grid():
    g = build_grid((8, 8), 3, 3)
    assert g.snap(0.36, 0.0) == (0.375, 0.0)
    assert g.snap(0.13, 0.01) == (0.125, 0.0)
    assert g.nearest_doppler_index(0.499) == 0  # wraps around to -0.5


def test_unit_profile_gives_column():
    g = build_grid((3, 4), 2, 2)
    d = SteeringDictionary(g)
    for q in (0, 5, g.size - 1):
        e = np.zeros(g.size, complex)
        e[q] = 1
        fd, fs = g.frequencies(q)
        np.testing.assert_allclose(d.apply(e), space_time_steering(fd, fs, 4, 3), atol=1e-12)
        np.testing.assert_allclose(d.column(q), space_time_steering(fd, fs, 4, 3), atol=1e-12)


@given(small_dims, st.integers(0, 2**31))
def test_adjoint_identity_and_matrix_free(dims, seed):
    m, n, rs, rd = dims
    rng = np.random.default_rng(seed)
    g = build_grid((m, n), rs, rd)
    dense = SteeringDictionary(g)
    lazy = SteeringDictionary(g, dense_limit=0)
    assert dense.is_dense and not lazy.is_dense
    a = crandn(rng, g.size, 2)
    y = crandn(rng, m * n, 2)
    lhs = np.vdot(y, dense.apply(a))
    rhs = np.vdot(dense.adjoint(y), a)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1)
    np.testing.assert_allclose(lazy.apply(a), dense.apply(a), atol=1e-10)
    np.testing.assert_allclose(lazy.adjoint(y), dense.adjoint(y), atol=1e-10)
    np.testing.assert_allclose(lazy.apply(a[:, 0]), dense.apply(a)[:, 0], atol=1e-10)


def test_all_ones_profile_against_explicit_matrix():
    g = build_grid((2, 2), 2, 2)
    d = SteeringDictionary(g)
    phi = np.stack([space_time_steering(*g.frequencies(q), 2, 2) for q in range(16)], axis=1)
    np.testing.assert_allclose(d.dense(), phi, atol=1e-12)
    ones = np.ones(16)
    np.testing.assert_allclose(d.adjoint(d.apply(ones)), phi.conj().T @ (phi @ ones), atol=1e-10)


def test_tight_frame_eigenvalue():
    # full uniform grids give Phi Phi^H = N_d N_s I
    g = build_grid((4, 4), 2, 2)
    d = SteeringDictionary(g)
    phi = d.dense()
    np.testing.assert_allclose(phi @ phi.conj().T, 64 * np.eye(16), atol=1e-9)
    assert d.max_eigenvalue() == pytest.approx(64.0, rel=1e-6)
    assert np.linalg.norm(phi[:, 3]) == pytest.approx(4.0)


def test_dictionary_is_read_only():
    d = SteeringDictionary(build_grid((2, 2), 2, 2))
    with pytest.raises(ValueError):
        d.dense()[0, 0] = 0


def test_apply_rejects_wrong_shape():
    d = SteeringDictionary(build_grid((2, 2), 2, 2))
    with pytest.raises(ValueError):
        d.apply(np.ones(15))
    with pytest.raises(ValueError):
        d.adjoint(np.ones(5))


def test_apply_T_examples(rng):
    x = crandn(rng, 12)
    np.testing.assert_array_equal(apply_T(np.ones(3), x), x)
    t = np.array([2.0, 1.0, 1.0])
    y = apply_T(t, x)
    np.testing.assert_allclose(y[0::3], 2 * x[0::3])
    np.testing.assert_allclose(y[1::3], x[1::3])


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_apply_T_equals_q_operator(m, n, seed):
    rng = np.random.default_rng(seed)
    x = crandn(rng, n * m)
    t = crandn(rng, m)
    q = q_operator(x, m)
    np.testing.assert_allclose(apply_T(t, x), q.matvec(t), atol=1e-12)
    np.testing.assert_allclose(q.dense() @ t, q.matvec(t), atol=1e-12)
    z = crandn(rng, n * m)
    np.testing.assert_allclose(q.rmatvec(z), q.dense().conj().T @ z, atol=1e-12)
    # batch form agrees column by column
    X = crandn(rng, n * m, 3)
    np.testing.assert_allclose(apply_T(t, X)[:, 1], apply_T(t, X[:, 1]))


def test_q_operator_small_examples(rng):
    q = QOperator(np.ones(4), 2)
    np.testing.assert_allclose(q.gram_diagonal(), [2, 2])
    x = crandn(rng, 6)
    q = QOperator(x, 3)
    np.testing.assert_allclose(q.matvec(np.ones(3)), x)
    dense = q.dense()
    np.testing.assert_allclose(q.gram_diagonal(), np.diag(dense.conj().T @ dense).real)
    gram = dense.conj().T @ dense
    np.testing.assert_allclose(gram - np.diag(np.diag(gram)), 0, atol=1e-12)
    with pytest.raises(ValueError):
        QOperator(np.ones(5), 2)


def test_profile_csv_roundtrip(tmp_path, rng):
    g = build_grid((3, 2), 2, 2)
    prof = crandn(rng, g.size)
    path = tmp_path / "p.csv"
    write_profile_csv(path, g, prof)
    assert path.read_text().splitlines()[0] == "f_d,f_s,magnitude"
    rows = read_profile_csv(path)
    assert rows.shape == (g.size, 3)
    np.testing.assert_allclose(rows[:, 2], np.abs(prof))
    assert tuple(rows[7, :2]) == g.frequencies(7)
    with pytest.raises(ValueError):
        write_profile_csv(path, g, prof[:-1])


def test_grid_json():
    g = AngleDopplerGrid(4, 4, 8, 12)
    assert g.to_dict()["rho_d"] == 3
    assert '"n_s": 8' in g.to_json()
