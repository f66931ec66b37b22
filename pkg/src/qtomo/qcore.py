"""Dense state representations, sampling, grid labels and the grid Fourier transform."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

HERM_TOL = 1e-10
RANK_TOL = 1e-8
MAX_QUBITS = 24


class SizeError(ValueError):
    """Raised when a requested register exceeds the simulated range."""


class DimensionError(ValueError):
    """Raised when array shapes do not match the declared dimensions."""


class RandomStream:
    """Counter-based random source keyed by ``(seed, stream_id)``.

    Two streams with the same key produce the same draws; different
    ``stream_id`` values give independent sequences (Philox with a spawn key).
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, sub_id: int) -> "RandomStream":
        """Deterministic substream; does not consume draws from ``self``."""
        rs = RandomStream.__new__(RandomStream)
        rs.seed = self.seed
        rs.stream_id = self.stream_id
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, int(sub_id)))
        rs.generator = np.random.Generator(np.random.Philox(ss))
        return rs

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"


RngLike = Union[RandomStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("expected a RandomStream or numpy Generator; no global RNG is used")


@dataclass(frozen=True)
class Ket:
    amps: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex).ravel()
        if a.size < 1:
            raise DimensionError("empty state")
        nrm = np.linalg.norm(a)
        if abs(nrm - 1.0) > HERM_TOL:
            raise ValueError(f"state not normalized (norm {nrm!r})")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @property
    def d(self) -> int:
        return self.amps.size

    @classmethod
    def normalized(cls, v) -> "Ket":
        v = np.asarray(v, dtype=complex).ravel()
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(v / n)

    @classmethod
    def basis(cls, j: int, d: int) -> "Ket":
        v = np.zeros(d, dtype=complex)
        v[j] = 1.0
        return cls(v)

    def probs(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amps, self.amps.conj()), rank_hint=1)


@dataclass(frozen=True)
class DensityMatrix:
    mat: np.ndarray
    rank_hint: int | None = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERM_TOL:
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(m).real - 1.0) > HERM_TOL:
            raise ValueError("density matrix trace is not 1")
        ev = np.linalg.eigvalsh(m)
        if ev[0] < -HERM_TOL:
            raise ValueError(f"density matrix not PSD (min eigenvalue {ev[0]!r})")
        if self.rank_hint is not None:
            if self.rank_hint < 1:
                raise ValueError("rank_hint must be positive")
            if int(np.sum(ev > RANK_TOL)) > self.rank_hint:
                raise ValueError("rank exceeds rank_hint")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @property
    def d(self) -> int:
        return self.mat.shape[0]

    def probs(self) -> np.ndarray:
        return np.clip(np.diag(self.mat).real, 0.0, None)

    def rank(self) -> int:
        return int(np.sum(np.linalg.eigvalsh(self.mat) > RANK_TOL))


@dataclass(frozen=True)
class GridLabel:
    n: int
    j: int
    x: float


def _check_bits(n: int) -> None:
    if not (1 <= n <= MAX_QUBITS):
        raise SizeError(f"bit count must lie in [1, {MAX_QUBITS}], got {n}")


def grid_values(n: int) -> np.ndarray:
    """Label values of G_n as a float array, index j -> j/2^n - 1/2 + 2^{-n-1}."""
    _check_bits(n)
    N = 1 << n
    # every term is a dyadic rational with at most n+1 bits, so this is exact
    return np.arange(N, dtype=float) / N - 0.5 + 2.0 ** (-n - 1)


def grid_labels(n: int) -> list[GridLabel]:
    xs = grid_values(n)
    return [GridLabel(n, j, float(x)) for j, x in enumerate(xs)]


def _qft_axis(v: np.ndarray, axis: int, N: int, inverse: bool) -> np.ndarray:
    c = N / 2 - 0.5
    idx = np.arange(N)
    shape = [1] * v.ndim
    shape[axis] = N
    pre = np.exp((2j if inverse else -2j) * np.pi * c * idx / N).reshape(shape)
    glob = np.exp((-2j if inverse else 2j) * np.pi * c * c / N)
    if inverse:
        out = np.fft.fft(v * pre, axis=axis) / np.sqrt(N)
    else:
        out = np.fft.ifft(v * pre, axis=axis) * np.sqrt(N)
    return glob * pre * out


def qft_grid_array(amps: np.ndarray, n: int, k: int, inverse: bool = False) -> np.ndarray:
    """QFT over G_n applied to each of k registers of a raw amplitude array."""
    _check_bits(n)
    N = 1 << n
    amps = np.asarray(amps, dtype=complex)
    if n * k > MAX_QUBITS:
        raise SizeError("register too large to simulate")
    if amps.size != N ** k:
        raise DimensionError(f"state dimension {amps.size} != 2^({n}*{k})")
    v = amps.reshape((N,) * k)
    for ax in range(k):
        v = _qft_axis(v, ax, N, inverse)
    return v.reshape(-1)


def qft_grid(state: Ket, n: int, k: int = 1, inverse: bool = False) -> Ket:
    """Apply QFT_{G_n}: |x> -> 2^{-n/2} sum_k exp(2 pi i 2^n x k)|k> per register."""
    out = qft_grid_array(state.amps, n, k, inverse)
    return Ket(out / np.linalg.norm(out))


def qft_grid_matrix(n: int) -> np.ndarray:
    """Dense single-register matrix of QFT_{G_n}, used for cross-checks."""
    xs = grid_values(n)
    N = xs.size
    return np.exp(2j * np.pi * N * np.outer(xs, xs)) / np.sqrt(N)


def measure(state, shots: int, rng: RngLike) -> np.ndarray:
    """Histogram of ``shots`` computational-basis measurements."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if isinstance(state, (Ket, DensityMatrix)):
        p = state.probs()
    else:
        p = np.abs(np.asarray(state, dtype=complex).ravel()) ** 2
    p = p / p.sum()
    return as_generator(rng).multinomial(shots, p)


def partial_trace(state, dims: tuple[int, int], keep: str = "A") -> DensityMatrix:
    dA, dB = dims
    if keep not in ("A", "B"):
        raise ValueError("keep must be 'A' or 'B'")
    if isinstance(state, Ket):
        if state.d != dA * dB:
            raise DimensionError("dims do not factor the state dimension")
        psi = state.amps.reshape(dA, dB)
        m = psi @ psi.conj().T if keep == "A" else psi.T @ psi.conj()
    else:
        rho = state.mat if isinstance(state, DensityMatrix) else np.asarray(state)
        if rho.shape != (dA * dB, dA * dB):
            raise DimensionError("dims do not factor the state dimension")
        t = rho.reshape(dA, dB, dA, dB)
        m = np.einsum("ijkj->ik", t) if keep == "A" else np.einsum("ijil->jl", t)
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m)


def norm(x, q: float = 2.0) -> float:
    """Vector l_q norm, or Schatten q-norm for matrices. q = inf gives max/operator norm."""
    if q < 1:
        raise ValueError("q must be >= 1")
    a = np.asarray(x)
    if a.ndim == 2:
        v = np.linalg.svd(a, compute_uv=False)
    else:
        v = np.abs(a.ravel())
    if v.size == 0:
        return 0.0
    if np.isinf(q):
        return float(np.max(v))
    return float(np.sum(v ** q) ** (1.0 / q))


def inv_exponent(q: float) -> float:
    """1/q with the convention 1/inf = 0 and 1/0 = inf."""
    if q == 0:
        return np.inf
    if np.isinf(q):
        return 0.0
    return 1.0 / q


def random_ket(d: int, rng: RngLike, real: bool = False) -> Ket:
    g = as_generator(rng)
    v = g.standard_normal(d)
    if not real:
        v = v + 1j * g.standard_normal(d)
    return Ket.normalized(v)


def random_density(d: int, r: int, rng: RngLike) -> DensityMatrix:
    g = as_generator(rng)
    G = g.standard_normal((d, r)) + 1j * g.standard_normal((d, r))
    m = G @ G.conj().T
    m /= np.trace(m).real
    return DensityMatrix(0.5 * (m + m.conj().T), rank_hint=r)


def purify(rho: DensityMatrix | np.ndarray, s: int | None = None) -> Ket:
    """Purification sum_j sqrt(p_j)|psi_j>|j> on A (dim d) tensor B (dim s)."""
    mat = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    d = mat.shape[0]
    w, V = np.linalg.eigh(mat)
    w = np.clip(w, 0, None)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    if s is None:
        s = max(1, int(np.sum(w > RANK_TOL)))
    psi = np.zeros((d, s), dtype=complex)
    for j in range(min(s, d)):
        psi[:, j] = np.sqrt(w[j]) * V[:, j]
    return Ket.normalized(psi.reshape(-1))


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out
