"""Concentration of random matrix series and simultaneous estimation of many expectation values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blockenc import BlockEncoding, CostLedger, amplify, lcu_combine
from .gradest import PhaseValueOracle, block_to_grad, unbiased_block_to_grad
from .qcore import HERM_TOL, DensityMatrix, RngLike, as_generator, grid_values


def sum_of_squares(mats: np.ndarray, weights=None) -> np.ndarray:
    """sum_j w_j^2 E_j^2, accumulated term by term."""
    mats = np.asarray(mats)
    w = np.ones(mats.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    out = np.zeros(mats.shape[1:], dtype=complex)
    for wj, E in zip(w, mats):
        out += wj ** 2 * (E @ E)
    return out


def sum_of_squares_gram(mats: np.ndarray, weights=None) -> np.ndarray:
    """Same quantity as B^dagger B with B the weighted vertical stack of the E_j."""
    mats = np.asarray(mats)
    w = np.ones(mats.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    B = (w[:, None, None] * mats).reshape(-1, mats.shape[2])
    return B.conj().T @ B


@dataclass(frozen=True)
class ObservableSet:
    mats: np.ndarray
    eps_vec: np.ndarray
    delta: float
    gamma: np.ndarray | None = None

    def __post_init__(self):
        E = np.asarray(self.mats, dtype=complex)
        if E.ndim != 3 or E.shape[1] != E.shape[2]:
            raise ValueError("expected an array of square matrices")
        if np.max(np.abs(E - E.conj().transpose(0, 2, 1))) > HERM_TOL:
            raise ValueError("observables must be Hermitian")
        norms = np.linalg.norm(E, 2, axis=(1, 2))
        if np.any(norms > 1 + 1e-8):
            raise ValueError("observables must have operator norm <= 1")
        eps = np.broadcast_to(np.asarray(self.eps_vec, dtype=float), (E.shape[0],)).copy()
        if np.any(eps <= 0) or np.any(eps > 2):
            raise ValueError("targets must lie in (0, 2]")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        g = 1 / eps if self.gamma is None else np.asarray(self.gamma, dtype=float)
        object.__setattr__(self, "mats", E)
        object.__setattr__(self, "eps_vec", eps)
        object.__setattr__(self, "gamma", g)

    @property
    def m(self) -> int:
        return self.mats.shape[0]

    @property
    def d(self) -> int:
        return self.mats.shape[1]

    @property
    def nu(self) -> float:
        return float(np.abs(self.gamma).sum())

    @property
    def sigma(self) -> float:
        v = np.linalg.norm(sum_of_squares(self.mats, self.gamma), 2)
        return max(math.sqrt(2 * v * math.log(2 * self.d / self.delta)), 1.0)

    @property
    def sigma_prime(self) -> float:
        return min(self.nu, self.sigma)


def grid_lambda_second_moment(b: int | None) -> float:
    """E[lambda^2] for lambda = 2x, x uniform on G_b (1/3 in the continuous limit)."""
    if b is None:
        return 1.0 / 3.0
    return float(np.mean((2 * grid_values(b)) ** 2))


def series_tail_check(mats, gamma, t: float, trials: int, rng: RngLike,
                      b: int | None = 8) -> dict:
    """Monte Carlo tail of ||sum_j lambda_j gamma_j E_j|| against the matrix series bound.

    lambda_j = 2 x_j with x_j uniform on G_b (or on [-1/2, 1/2] when b is None).
    The bound is reported with the exact variance v = ||sum E[lambda^2] gamma^2 E^2||,
    valid since these lambda are strictly sub-Gaussian, and with the cruder
    ||sum gamma^2 E^2||.
    """
    g = as_generator(rng)
    E = np.asarray(mats, dtype=complex)
    m, d, _ = E.shape
    gam = np.ones(m) if gamma is None else np.asarray(gamma, dtype=float)
    if b is None:
        lam = g.uniform(-1, 1, size=(trials, m))
    else:
        xs = grid_values(b)
        lam = 2 * xs[g.integers(0, xs.size, size=(trials, m))]
    GE = gam[:, None, None] * E
    norms = np.empty(trials)
    chunk = max(1, 200_000 // (d * d))
    for lo in range(0, trials, chunk):
        Y = np.einsum("tj,jab->tab", lam[lo:lo + chunk], GE)
        norms[lo:lo + chunk] = np.abs(np.linalg.eigvalsh(Y)).max(axis=1)
    emp = float(np.mean(norms >= t))
    S = sum_of_squares(E, gam)
    v_upper = float(np.linalg.norm(S, 2))
    v = grid_lambda_second_moment(b) * v_upper
    return dict(empirical=emp, stderr=math.sqrt(max(emp * (1 - emp), 1.0 / trials) / trials),
                bound=min(1.0, 2 * d * math.exp(-t * t / (2 * v))),
                bound_upper=min(1.0, 2 * d * math.exp(-t * t / (2 * v_upper))),
                v=v, v_upper=v_upper, t=t, trials=trials)


@dataclass(frozen=True)
class LincombResult:
    block: BlockEncoding | None
    valid: bool
    ledger: CostLedger


def lincomb_obs_be(obs: ObservableSet, x, eps: float = 1e-3) -> LincombResult:
    """Block-encoding of (1/sigma') sum_j x_j gamma_j E_j for a grid point x.

    Combine with weight vector x*gamma at normalization nu/2, then amplify by
    nu/(2 sigma') unless sigma' = nu.  Points where the amplified block would
    exceed norm 1 are reported as invalid.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (obs.m,) or np.any(np.abs(x) > 0.5):
        raise ValueError("x must be a point of [-1/2, 1/2]^m")
    blocks = [BlockEncoding(E, 1) for E in obs.mats]
    y = x * obs.gamma
    nu, sp = obs.nu, obs.sigma_prime
    if sp >= nu:
        be = lcu_combine(y, blocks, nu)
        return LincombResult(be, True, be.ledger)
    be = lcu_combine(y, blocks, nu / 2)
    try:
        out = amplify(be, sp / nu, eps)
    except ValueError:
        nu_amp = nu / (2 * sp)
        k = math.ceil(nu_amp * math.log(max(nu_amp / eps, 2.0)))
        return LincombResult(None, False, be.ledger.times(k))
    return LincombResult(out, True, out.ledger)


def invalid_fraction(obs: ObservableSet, b: int, samples: int, rng: RngLike) -> float:
    """Share of uniform grid points x with ||sum 2 x_j gamma_j E_j|| > sigma'."""
    g = as_generator(rng)
    xs = grid_values(b)
    X = xs[g.integers(0, xs.size, size=(samples, obs.m))]
    GE = obs.gamma[:, None, None] * obs.mats
    bad = 0
    chunk = 2000
    for lo in range(0, samples, chunk):
        Y = np.einsum("tj,jab->tab", 2 * X[lo:lo + chunk], GE)
        bad += int(np.sum(np.abs(np.linalg.eigvalsh(Y)).max(axis=1) > obs.sigma_prime))
    return bad / samples


@dataclass(frozen=True)
class ExpvalResult:
    z: np.ndarray
    ledger: CostLedger
    sigma_prime: float


def expectation_values(rho, mats) -> np.ndarray:
    R = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return np.einsum("ab,jba->j", R, np.asarray(mats)).real


def multi_expectation(rho, obs: ObservableSet, delta: float, rng: RngLike,
                      trials: int | None = None, unbiased: bool = True) -> ExpvalResult:
    """Estimates z_j of Tr(rho E_j) to within eps_j each.

    The phase function is f(x) = (1/sigma') sum_j x_j Tr(rho E_j)/eps_j, whose
    gradient is estimated to accuracy min{1/sigma', 1/6} and rescaled by sigma' eps_j.
    Traces are exact; randomness comes only from the simulated estimation.
    ``unbiased=False`` swaps in the median-based estimator for comparisons.
    """
    tr = expectation_values(rho, obs.mats)
    sp = obs.sigma_prime
    g = tr * obs.gamma / sp
    acc = min(1 / sp, 1 / 6)
    oracle = PhaseValueOracle.linear_function(g)
    if unbiased:
        r = unbiased_block_to_grad(oracle, acc, delta, rng, trials=trials)
        k = np.asarray(r.k)
    else:
        gen = as_generator(rng)
        T = 1 if trials is None else trials
        runs = [block_to_grad(oracle, acc, delta, gen) for _ in range(T)]
        r = runs[0]
        k = np.stack([x.k for x in runs])
        k = k[0] if trials is None else k
    z = np.clip(k * sp / obs.gamma, -1, 1)
    uses = r.ledger.queries_U
    return ExpvalResult(z, CostLedger(uses, uses, r.ledger.extra_gates, r.ledger.depth), sp)
