"""Gradient estimation from a phase oracle over the centred grid G_b^d.

Two execution paths.  For an exactly linear phase the ideal state is a product
over coordinates, so each coordinate is sampled from its closed-form outcome law.
Any other phase function is simulated on the full register (d*b <= 22).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blockenc import CostLedger, random_unit_hermitian
from .phaseest import (
    TWO_PI,
    ParameterError,
    PhaseInstance,
    draw_shift,
    suppressed_pe,
    weighted_pick,
)
from .qcore import Ket, RngLike, SizeError, as_generator, grid_values, qft_grid_array

MAX_FULL_BITS = 22
RESCALE = 8.0


@dataclass(frozen=True)
class PhaseValueOracle:
    """Real function f on [-1/2, 1/2]^d, evaluated on grid points.

    ``linear`` holds g when f is exactly <x, g>; it enables the product-state path.
    ``reference`` is the gradient the hypothesis is checked against.
    """

    f: Callable[[np.ndarray], np.ndarray]
    d: int
    reference: np.ndarray
    linear: np.ndarray | None = None

    @classmethod
    def linear_function(cls, g) -> "PhaseValueOracle":
        g = np.atleast_1d(np.asarray(g, dtype=float))
        return cls(lambda x: x @ g, g.size, g, g)

    @classmethod
    def corrupted(cls, g, frac: float, amount: float, seed: int) -> "PhaseValueOracle":
        """<x, g> plus ``amount`` on a pseudo-random ``frac`` of grid points (hash of the point)."""
        g = np.atleast_1d(np.asarray(g, dtype=float))

        def f(x):
            x = np.asarray(x, dtype=float)
            key = np.round(x * 2.0 ** 24).astype(np.int64) @ (np.arange(g.size) * 7919 + 104729)
            h = (key * 2654435761 + seed * 97) % 1_000_003
            return x @ g + np.where(h < frac * 1_000_003, amount, 0.0)

        return cls(f, g.size, g)

    def grid(self, b: int) -> np.ndarray:
        """All points of G_b^d, shape (N^d, d), in row-major register order."""
        xs = grid_values(b)
        mesh = np.meshgrid(*([xs] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def values(self, b: int) -> np.ndarray:
        if self.d * b > MAX_FULL_BITS:
            raise SizeError("register too large to simulate")
        return np.asarray(self.f(self.grid(b)), dtype=float)

    def good_fraction(self, b: int, tol: float) -> float:
        vals = self.values(b)
        lin = self.grid(b) @ self.reference
        return float(np.mean((np.abs(vals - lin) <= tol) & (np.abs(vals) <= 1)))


@dataclass(frozen=True)
class GradResult:
    k: np.ndarray
    b: int
    repetitions: int
    ledger: CostLedger


def _check_full(d: int, b: int) -> None:
    if d * b > MAX_FULL_BITS:
        raise SizeError(f"d*b = {d * b} exceeds {MAX_FULL_BITS}")


def jordan_state(g, b: int, d: int | None = None, oracle: PhaseValueOracle | None = None,
                 scale: float = 1.0) -> Ket:
    """(1/sqrt(N^d)) sum_x exp(2 pi i N s(x)) |x>, s = <g,x> or scale*f(x)."""
    if oracle is not None:
        d = oracle.d
        _check_full(d, b)
        phase = scale * oracle.values(b)
    else:
        g = np.atleast_1d(np.asarray(g, dtype=float))
        d = g.size if d is None else d
        _check_full(d, b)
        xs = grid_values(b)
        phase = np.zeros(1)
        for i in range(d):
            phase = (phase[:, None] + g[i] * xs[None, :]).ravel()
    N = 1 << b
    amps = np.exp(2j * np.pi * N * phase) / math.sqrt(N ** d)
    return Ket(amps)


def _outcome_probs(amps: np.ndarray, b: int, d: int, qft_error: float = 0.0,
                   rng: RngLike | None = None) -> np.ndarray:
    out = qft_grid_array(amps, b, d, inverse=True)
    if qft_error > 0:
        if out.size > 1 << 12:
            raise SizeError("error injection limited to 12 qubits")
        H = random_unit_hermitian(out.size, rng)
        w, V = np.linalg.eigh(H)
        theta = 2 * math.asin(qft_error / 2)
        out = (V * np.exp(1j * theta * w)) @ (V.conj().T @ out)
    p = np.abs(out) ** 2
    return p / p.sum()


def _index_to_labels(idx: np.ndarray, b: int, d: int) -> np.ndarray:
    xs = grid_values(b)
    N = 1 << b
    digits = np.stack(np.unravel_index(idx, (N,) * d), axis=-1)
    return xs[digits]


def jordan_measure(state: Ket, b: int, d: int, rng: RngLike, shots: int | None = None,
                   qft_error: float = 0.0) -> np.ndarray:
    """Inverse grid transform on each register, then sample labels in G_b^d."""
    g = as_generator(rng)
    p = _outcome_probs(state.amps, b, d, qft_error, g)
    n = 1 if shots is None else shots
    idx = g.choice(p.size, size=n, p=p)
    k = _index_to_labels(idx, b, d)
    return k[0] if shots is None else k


def jordan_linear_sample(g, b: int, rng: RngLike, shots: int) -> np.ndarray:
    """Product-state path: per-coordinate labels for the ideal state of a linear phase."""
    gv = np.atleast_1d(np.asarray(g, dtype=float))
    N = 1 << b
    c = N / 2 - 0.5
    out = np.empty((shots, gv.size))
    gen = as_generator(rng)
    for i, gi in enumerate(gv):
        # outcome index l has weight fejer(N g - l + c): phase estimation with u = 0
        phi = TWO_PI * ((N * gi + c) / N % 1.0)
        est = suppressed_pe(PhaseInstance(phi, N), gen, size=shots, u=0.0)
        l = np.rint(est * N / TWO_PI).astype(np.int64) % N
        out[:, i] = (l - c) / N
    return out


def jordan_sample(oracle: PhaseValueOracle, b: int, rng: RngLike, shots: int,
                  scale: float = 1.0, qft_error: float = 0.0,
                  force_full: bool = False) -> np.ndarray:
    """Labels from the state exp(2 pi i N scale f(x)), with the cheaper path when possible."""
    if oracle.linear is not None and qft_error == 0 and not force_full:
        return jordan_linear_sample(scale * oracle.linear, b, rng, shots)
    st = jordan_state(None, b, oracle=oracle, scale=scale)
    return jordan_measure(st, b, oracle.d, rng, shots, qft_error)


def _phase_oracle_cost(N: int, beta: float, reps: int, d: int, b: int) -> CostLedger:
    """Each repetition applies exp(2 pi i (N/8) f) once, built by simulating the block for time 2 pi N/8."""
    per = math.ceil(2 * math.pi * N / RESCALE + math.log(1 / beta))
    return CostLedger(reps * per, 0, reps * d * b * b, reps * (per + d * b))


def grad_params(eps: float, delta: float, d: int) -> dict:
    b = math.ceil(math.log2(24 / eps))
    beta = 1 / 48
    m = math.ceil(10 * math.log(d / delta))
    return dict(b=b, beta=beta, m=max(m, 1), tol=eps * beta / (6 * math.pi))


def _check_hypothesis(oracle: PhaseValueOracle, b: int, beta: float, tol: float) -> None:
    if oracle.linear is not None:
        return
    gf = oracle.good_fraction(b, tol)
    if gf < 1 - beta ** 2:
        raise ParameterError(f"good fraction {gf:.6f} below 1 - beta^2 = {1 - beta ** 2:.6f}")


def block_to_grad(oracle: PhaseValueOracle, eps: float, delta: float, rng: RngLike,
                  qft_error: float = 0.0, check: bool = True) -> GradResult:
    """Coordinatewise medians of 2m+1 rescaled Jordan outputs."""
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ParameterError("eps and delta must lie in (0, 1)")
    pr = grad_params(eps, delta, oracle.d)
    b, m = pr["b"], pr["m"]
    if check:
        _check_hypothesis(oracle, b, pr["beta"], pr["tol"])
    N = 1 << b
    reps = 2 * m + 1
    ks = jordan_sample(oracle, b, rng, reps, scale=1.0 / RESCALE, qft_error=qft_error)
    k = RESCALE * np.median(ks, axis=0)
    led = _phase_oracle_cost(N, pr["beta"], reps, oracle.d, b)
    return GradResult(k, b, reps, led)


def unbiased_grad_params(eps: float, delta: float, d: int) -> dict:
    L = math.ceil(math.log(6 * d / delta))
    b = math.ceil(math.log2(16 / eps))
    beta = delta / (96 * L + 12)
    m = 4 * L
    n = math.ceil(math.log2(96 * d * (m + 1) / delta))
    return dict(b=b, beta=beta, m=m, n=n, tol=eps * beta / (6 * math.pi))


def _wrap_half(x):
    return np.mod(x + 0.5, 1.0) - 0.5


def _shifted_pe_full(oracle: PhaseValueOracle, b: int, n: int, reps: int,
                     rng: RngLike) -> np.ndarray:
    """Joint phase estimation on all registers, each with its own random shift."""
    g = as_generator(rng)
    N = 1 << b
    d = oracle.d
    base = np.exp(2j * np.pi * (N / RESCALE) * oracle.values(b)).reshape((N,) * d) / math.sqrt(N ** d)
    j = np.arange(N)
    out = np.empty((reps, d))
    for r in range(reps):
        u = draw_shift(n, d, g)
        v = base
        for ax in range(d):
            shp = [1] * d
            shp[ax] = N
            v = v * np.exp(-2j * np.pi * u[ax] * j / N).reshape(shp)
        amp = np.fft.fftn(v) / math.sqrt(N ** d)
        p = np.abs(amp.ravel()) ** 2
        idx = g.choice(p.size, p=p / p.sum())
        digits = np.array(np.unravel_index(idx, (N,) * d))
        out[r] = np.mod(TWO_PI * (digits + u) / N, TWO_PI)
    return out


def unbiased_block_to_grad(oracle: PhaseValueOracle, eps: float, delta: float, rng: RngLike,
                           trials: int | None = None, check: bool = True,
                           force_full: bool = False) -> GradResult:
    """Per-coordinate boosted suppressed-bias phase estimation in place of medians.

    The phase on each register is 2 pi f/8 per unit index step, so the estimate
    is k = 8 * wrap(phi_bar / 2 pi) with wrap into [-1/2, 1/2).  ``trials`` runs
    many independent repetitions at once on the product-state path.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ParameterError("eps and delta must lie in (0, 1)")
    pr = unbiased_grad_params(eps, delta, oracle.d)
    b, m, n = pr["b"], pr["m"], pr["n"]
    if check:
        _check_hypothesis(oracle, b, pr["beta"], pr["tol"])
    N = 1 << b
    reps = 2 * m + 1
    gen = as_generator(rng)
    T = 1 if trials is None else trials
    d = oracle.d
    k = np.empty((T, d))
    if oracle.linear is not None and not force_full:
        for i, gi in enumerate(oracle.linear):
            phi = TWO_PI * ((gi / RESCALE) % 1.0)
            S = suppressed_pe(PhaseInstance(phi, N, n), gen, size=(T, reps))
            k[:, i] = weighted_pick(S, m, N, gen)
    else:
        for t in range(T):
            S = _shifted_pe_full(oracle, b, n, reps, gen)
            for i in range(d):
                k[t, i] = weighted_pick(S[:, i][None, :], m, N, gen)[0]
    k = RESCALE * _wrap_half(k / TWO_PI)
    led = _phase_oracle_cost(N, pr["beta"], reps, d, b)
    return GradResult(k[0] if trials is None else k, b, reps, led)
