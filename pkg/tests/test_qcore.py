import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtomo.qcore import (
    DensityMatrix, DimensionError, Ket, RandomStream, SizeError, grid_labels, grid_values,
    measure, norm, partial_trace, qft_grid, qft_grid_array, qft_grid_matrix, random_density,
    random_ket,
)


def test_grid_small_cases():
    assert [g.x for g in grid_labels(1)] == [-0.25, 0.25]
    assert list(grid_values(2)) == [-3 / 8, -1 / 8, 1 / 8, 3 / 8]
    xs = grid_values(4)
    assert xs.size == 16 and xs.min() == -0.5 + 1 / 32


@pytest.mark.parametrize("n", [1, 3, 7, 12])
def test_grid_symmetric_and_evenly_spaced(n):
    xs = grid_values(n)
    # exact rational check
    from fractions import Fraction
    N = 2 ** n
    for j in (0, N // 2, N - 1):
        assert Fraction(xs[j]) == Fraction(j, N) - Fraction(1, 2) + Fraction(1, 2 * N)
    assert np.array_equal(np.sort(-xs), xs)
    assert np.all(np.diff(xs) == 2.0 ** -n)


@pytest.mark.parametrize("n", [0, 25])
def test_grid_size_error(n):
    with pytest.raises(SizeError):
        grid_values(n)


def _dft_on_grid(n):
    # independent dense construction, straight from the definition
    N = 2 ** n
    xs = (np.arange(N) + 0.5) / N - 0.5
    return np.array([[np.exp(2j * np.pi * N * x * k) for x in xs] for k in xs]) / np.sqrt(N)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_qft_matches_definition(n, gen):
    F = _dft_on_grid(n)
    v = gen.normal(size=2 ** n) + 1j * gen.normal(size=2 ** n)
    assert np.allclose(qft_grid_array(v, n, 1), F @ v, atol=1e-12)
    assert np.allclose(qft_grid_matrix(n), F, atol=1e-12)


def test_qft_unitary_up_to_4096():
    for n in (4, 8, 12):
        N = 2 ** n
        if N <= 256:
            F = np.stack([qft_grid_array(np.eye(N)[:, j], n, 1) for j in range(N)], axis=1)
            assert np.linalg.norm(F.conj().T @ F - np.eye(N), 2) <= 1e-10
        else:
            # unitarity on a batch of random vectors is cheaper at this size
            rs = RandomStream(1, n)
            for _ in range(3):
                v = random_ket(N, rs)
                w = qft_grid_array(v.amps, n, 1)
                assert abs(np.linalg.norm(w) - 1) < 1e-10
                assert np.allclose(qft_grid_array(w, n, 1, inverse=True), v.amps, atol=1e-10)


def test_qft_roundtrip_two_registers(rs):
    psi = random_ket(64, rs)
    back = qft_grid(qft_grid(psi, 3, 2), 3, 2, inverse=True)
    assert np.allclose(back.amps, psi.amps, atol=1e-10)


def test_qft_uniform_peaks_near_zero():
    n = 3
    u = Ket(np.ones(8) / np.sqrt(8))
    p = qft_grid(u, n, 1).probs()
    xs = grid_values(n)
    assert set(np.argsort(p)[-2:]) == set(np.argsort(np.abs(xs))[:2])


@pytest.mark.parametrize("n,j", [(3, 0), (3, 5), (5, 17)])
def test_qft_fourier_duality(n, j):
    N = 2 ** n
    xs = grid_values(n)
    g = xs[j]
    psi = Ket(np.exp(2j * np.pi * N * g * xs) / np.sqrt(N))
    out = qft_grid(psi, n, 1, inverse=True).probs()
    assert abs(out[j] - 1) < 1e-10


def test_qft_dimension_mismatch():
    with pytest.raises(DimensionError):
        qft_grid_array(np.ones(6), 2, 1)


def test_measure_basis_state(rs):
    h = measure(Ket.basis(0, 5), 100, rs)
    assert h[0] == 100 and h.sum() == 100


def test_measure_uniform_and_mixed(rs):
    h = measure(Ket(np.ones(4) / 2), 10 ** 6, rs) / 10 ** 6
    assert np.all(np.abs(h - 0.25) <= 0.002)
    h = measure(DensityMatrix(np.eye(2) / 2), 10 ** 6, rs) / 10 ** 6
    assert abs(h[0] - 0.5) <= 0.0025


def test_measure_tv_convergence(rs):
    d = 16
    psi = random_ket(d, rs)
    h = measure(psi, 10 ** 6, rs) / 10 ** 6
    assert 0.5 * np.abs(h - psi.probs()).sum() <= 5 * np.sqrt(d / 10 ** 6)


def test_measure_rejects_zero_shots(rs):
    with pytest.raises(ValueError):
        measure(Ket.basis(0, 2), 0, rs)


def test_partial_trace_examples():
    plus = np.array([1, 1]) / np.sqrt(2)
    prod = Ket(np.kron([1, 0], plus))
    assert np.allclose(partial_trace(prod, (2, 2), "A").mat, [[1, 0], [0, 0]])
    bell = Ket(np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert np.allclose(partial_trace(bell, (2, 2), "A").mat, np.eye(2) / 2)
    assert np.allclose(partial_trace(bell, (2, 2), "B").mat, np.eye(2) / 2)


@pytest.mark.parametrize("dims", [(2, 3), (4, 2), (3, 5)])
def test_partial_trace_ket_matches_dense(dims, rs):
    dA, dB = dims
    psi = random_ket(dA * dB, rs)
    rho = np.outer(psi.amps, psi.amps.conj())
    ref_A = sum(rho[np.ix_(np.arange(dA) * dB + b, np.arange(dA) * dB + b)] for b in range(dB))
    ref_B = sum(rho[a * dB:(a + 1) * dB, a * dB:(a + 1) * dB] for a in range(dA))
    assert np.allclose(partial_trace(psi, dims, "A").mat, ref_A, atol=1e-12)
    assert np.allclose(partial_trace(psi, dims, "B").mat, ref_B, atol=1e-12)
    assert np.allclose(partial_trace(DensityMatrix(rho), dims, "A").mat, ref_A, atol=1e-12)


def test_partial_trace_bad_dims(rs):
    with pytest.raises(DimensionError):
        partial_trace(random_ket(6, rs), (4, 2))


def test_norm_examples(gen):
    assert norm(np.array([3.0, 4.0]), 2) == pytest.approx(5)
    assert norm(np.eye(3), 1) == pytest.approx(3)
    A = gen.normal(size=(4, 4)) + 1j * gen.normal(size=(4, 4))
    H = A + A.conj().T
    assert abs(norm(H, 2) - np.sqrt(np.sum(np.abs(H) ** 2))) < 1e-10
    assert norm(H, np.inf) == pytest.approx(np.max(np.abs(np.linalg.eigvalsh(H))))
    with pytest.raises(ValueError):
        norm(H, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12),
       st.floats(1, 8), st.floats(0, 8))
def test_norm_monotone_in_q(v, q, dq):
    x = np.array(v)
    assert norm(x, q) >= norm(x, q + dq) - 1e-9
    assert norm(x, q + dq) >= norm(x, np.inf) - 1e-9


def test_state_invariants(rs):
    with pytest.raises(ValueError):
        Ket(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(3) / 3, rank_hint=2)
    rho = random_density(6, 2, rs)
    assert rho.rank() == 2


def test_random_stream_reproducible():
    a = RandomStream(5, 3).generator.random(50)
    b = RandomStream(5, 3).generator.random(50)
    c = RandomStream(5, 4).generator.random(50)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # children do not consume parent draws
    r = RandomStream(5, 3)
    r.child(0).generator.random(10)
    assert np.array_equal(r.generator.random(50), a)


def test_random_streams_uncorrelated():
    x = RandomStream(9, 0).generator.normal(size=200_000)
    y = RandomStream(9, 1).generator.normal(size=200_000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 5 / np.sqrt(200_000)


def test_no_global_rng():
    with pytest.raises(TypeError):
        random_ket(4, None)
