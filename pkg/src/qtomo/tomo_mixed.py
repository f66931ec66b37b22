"""Density-matrix tomography: entrywise estimation, Schatten-norm pipeline and a copies-only method."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .blockenc import CostLedger
from .expval import ObservableSet, multi_expectation
from .norms import psd_rank_project, schatten_eta, subgaussian_opnorm_stats
from .qcore import DensityMatrix, RngLike, as_generator


def pair_observables(d: int) -> np.ndarray:
    """E0_ij = (|i><j| + |j><i|)/2 and E1_ij = (|i><j| - |j><i|)/(2i), ordered (p, i, j)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    out = np.zeros((2, d, d, d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            out[0, i, j, i, j] += 0.5
            out[0, i, j, j, i] += 0.5
            out[1, i, j, i, j] += -0.5j
            out[1, i, j, j, i] += 0.5j
    return out.reshape(2 * d * d, d, d)


@dataclass(frozen=True)
class MixedResult:
    estimate: np.ndarray
    ledger: CostLedger
    eps: float
    delta: float
    q: float = np.inf
    samples: int = 0
    params: dict | None = None


def coordinatewise_tomo(rho, d: int, eps: float, delta: float, rng: RngLike,
                        unbiased: bool = True) -> MixedResult:
    """Entry estimates of rho, real and imaginary parts each within eps."""
    if not (0 < eps <= 1 / 6 + 1e-12 and 0 < delta <= 1 / 6 + 1e-12):
        raise ValueError("eps and delta must lie in (0, 1/6]")
    E = pair_observables(d)
    obs = ObservableSet(E, eps, delta)
    r = multi_expectation(rho, obs, delta, rng, unbiased=unbiased)
    z = r.z.reshape(2, d, d)
    # Tr(rho E0_ij) + i Tr(rho E1_ij) is rho_ji, hence the transpose
    return MixedResult((z[0] + 1j * z[1]).T, r.ledger, eps, delta,
                       params=dict(sigma_prime=r.sigma_prime))


# --- calibrated constants -------------------------------------------------

CONSTANTS_QUANTILE = 0.999
CALIBRATION_DIMS = (16, 32, 64)


def calibrate_constants(trials: int, rng: RngLike, dims=CALIBRATION_DIMS) -> dict:
    """C' and c' for ||E|| <= C' sqrt(d) tau eps w.p. 1 - 2 exp(-c' d tau^2).

    C' is the largest 99.9th percentile of ||E||/(sqrt(d) eps) over the
    dimensions (tau = 1); c' then makes 2 exp(-c' d) equal 1 - quantile at the
    smallest dimension.
    """
    g = as_generator(rng)
    cs = []
    for d in dims:
        st = subgaussian_opnorm_stats(d, 1.0, trials, g, quantiles=(CONSTANTS_QUANTILE,))
        cs.append(st[f"q{CONSTANTS_QUANTILE}"] / math.sqrt(d))
    C = max(cs)
    c = math.log(2 / (1 - CONSTANTS_QUANTILE)) / min(dims)
    return dict(C_prime=C, c_prime=c, trials=trials, quantile=CONSTANTS_QUANTILE,
                dims=" ".join(map(str, dims)), seed=getattr(rng, "seed", -1))


def parse_constants(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, v = line.split(None, 1)
        try:
            out[k] = float(v) if k in ("C_prime", "c_prime", "quantile") else int(v)
        except ValueError:
            out[k] = v
    return out


def format_constants(c: dict) -> str:
    lines = ["# version 1", "# key value"]
    for k in ("C_prime", "c_prime", "quantile", "trials", "seed", "dims"):
        v = c[k]
        lines.append(f"{k} {v!r}" if isinstance(v, float) else f"{k} {v}")
    return "\n".join(lines) + "\n"


@lru_cache(maxsize=1)
def load_constants() -> dict:
    text = resources.files("qtomo").joinpath("data/constants.txt").read_text()
    return parse_constants(text)


def mixed_params(d: int, r: int, eps: float, delta: float, q: float, consts: dict | None = None) -> dict:
    c = load_constants() if consts is None else consts
    Cp, cp = c["C_prime"], c["c_prime"]
    eta = schatten_eta(eps, r, q)
    dprime = min(delta / 2, eta ** 2 / (2 ** 11 * d ** 3 * math.log(2 * d)))
    tau = math.sqrt(1 + math.log(4 / delta) / (d * cp))
    eprime = min(eta / (4 * Cp * math.sqrt(d) * tau), 1 / 6)
    return dict(eta=eta, delta_prime=dprime, tau=tau, eps_prime=eprime)


def mixed_tomo(rho, d: int, r: int, eps: float, delta: float, q: float, rng: RngLike) -> MixedResult:
    """PSD estimate of rank <= r and trace <= 1 with Schatten-q error eps w.h.p."""
    if not (0 < eps <= 1 / 3 + 1e-12 and 0 < delta <= 1 / 3 + 1e-12):
        raise ValueError("eps and delta must lie in (0, 1/3]")
    if q < 1:
        raise ValueError("q must be >= 1")
    p = mixed_params(d, r, eps, delta, q)
    z = coordinatewise_tomo(rho, d, p["eps_prime"], p["delta_prime"], rng)
    herm = 0.5 * (z.estimate + z.estimate.conj().T)
    out = psd_rank_project(herm, p["eta"], r)
    return MixedResult(out, z.ledger, eps, delta, q, params=p)


# --- copies only ----------------------------------------------------------

def shift_experiment_probs(rho: np.ndarray, h: int, imag: bool = False) -> np.ndarray:
    """Outcome law of (flag, j) after H, controlled shift by h (optionally with a phase), H.

    Row 0 holds q_0j = (rho_jj + 2 Re rho_{j,j+h} + rho_{j+h,j+h})/4, or Im in place of Re
    when the flag's |1> branch carries an extra phase i.
    """
    d = rho.shape[0]
    S = np.zeros((d, d))
    S[(np.arange(d) - h) % d, np.arange(d)] = 1.0
    ph = 1j if imag else 1.0
    # flag outcome s leaves the system with K_s = (I +- ph S)/2
    I = np.eye(d)
    out = np.empty((2, d))
    for s, sign in enumerate((1, -1)):
        K = (I + sign * ph * S) / 2
        out[s] = np.diag(K @ rho @ K.conj().T).real
    return out


def reconstruct_from_shifts(diag, q_re, q_im) -> np.ndarray:
    """Hermitian estimate from the diagonal and the flag-0 rows of the shift experiments.

    ``q_re[h-1]`` and ``q_im[h-1]`` are the rows for shift h = 1..d-1.  Entry (j, j+h)
    gets 2 q_0j - (rho_jj + rho_{j+h,j+h})/2; each unordered pair is reached from two
    shifts and the two readings are averaged.
    """
    diag = np.asarray(diag, dtype=float)
    d = diag.size
    est = np.diag(diag).astype(complex)
    j = np.arange(d)
    for h in range(1, d):
        side = 0.5 * (diag + diag[(j + h) % d])
        z = (2 * np.asarray(q_re[h - 1]) - side) + 1j * (2 * np.asarray(q_im[h - 1]) - side)
        est[j, (j + h) % d] += 0.5 * z
        est[(j + h) % d, j] += 0.5 * z.conj()
    return est


def slice_errors(est, rho) -> np.ndarray:
    """l2 norm over j of the error on entries (j, j+h), one value per shift h."""
    E = np.asarray(est) - np.asarray(rho)
    d = E.shape[0]
    j = np.arange(d)
    return np.array([np.linalg.norm(E[j, (j + h) % d]) for h in range(d)])


def direct_sample_tomo(rho, d: int, eps: float, rng: RngLike, r: int | None = None,
                       shots_factor: float = 2.0, project: bool = True) -> MixedResult:
    """Density matrix from copies only, via 2d-1 shift experiments.

    Each experiment uses ceil(shots_factor * d r / eps^2) copies, so each outcome
    distribution is known to l2 error about eps/sqrt(d r).  With ``project`` the
    result is cut to its r largest nonnegative eigenvalues.
    """
    g = as_generator(rng)
    R = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if d < 2 or R.shape != (d, d):
        raise ValueError("need a d x d state with d >= 2")
    rr = r if r is not None else d
    k = math.ceil(shots_factor * d * rr / eps ** 2)

    def run(h, imag):
        p = np.clip(shift_experiment_probs(R, h, imag).ravel(), 0, None)
        return (g.multinomial(k, p / p.sum()) / k).reshape(2, d)

    diag = run(0, False)[0]
    q_re, q_im = [], []
    for h in range(1, d):
        q_re.append(run(h, False)[0])
        q_im.append(run(h, True)[0])
    raw = reconstruct_from_shifts(diag, q_re, q_im)
    est = psd_rank_project(raw, 0.0, rr) if project else raw
    return MixedResult(est, CostLedger(), eps, 1 / 3, 1.0, samples=k * (2 * d - 1),
                       params=dict(shots=k, raw=raw))
