"""Conversions between estimate error measures for vectors and matrices."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .qcore import (
    HERM_TOL,
    DimensionError,
    Ket,
    RngLike,
    as_generator,
    inv_exponent,
    norm,
    partial_trace,
)


def prob_norm_exponent(q: float) -> float:
    """t = 1/(1/q + 1/2), the probability-side exponent paired with amplitude exponent q."""
    return 1.0 / (inv_exponent(q) + 0.5)


def _min_l2_in_ball(a: np.ndarray, eps: float, q: float) -> np.ndarray:
    # smallest-l2 nonnegative point within l_q distance eps of a
    if np.isinf(q):
        return np.clip(a - eps, 0.0, None)
    if q == 2:
        n = np.linalg.norm(a)
        return a * max(0.0, 1.0 - eps / n) if n > 0 else a
    cons = {"type": "ineq", "fun": lambda v: eps ** q - np.sum(np.abs(v - a) ** q)}
    x0 = np.clip(a - eps / a.size ** (1.0 / q), 0.0, None)
    res = minimize(lambda v: v @ v, x0, jac=lambda v: 2 * v, constraints=[cons],
                   bounds=[(0.0, None)] * a.size, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    v = np.clip(res.x, 0.0, None)
    if np.sum(np.abs(v - a) ** q) > eps ** q * (1 + 1e-9):
        return x0
    return v


def amp_to_prob(abs_amp_est, q: float = np.inf, eps: float | None = None) -> np.ndarray:
    """Turn an l_q estimate of |alpha| into a probability estimate.

    Without ``eps`` the estimate is renormalized to unit l2 norm and squared.
    With ``eps`` (the l_q error of the input) we first move to the smallest-l2
    nonnegative vector within distance eps of the input; its l2 norm is at most 1
    because |alpha| itself is in that ball, which makes the 4*eps bound in the
    t-norm unconditional.
    """
    a = np.abs(np.asarray(abs_amp_est, dtype=float).ravel())
    if not np.all(np.isfinite(a)):
        raise ValueError("estimate must be finite")
    if eps is None:
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("all-zero amplitude estimate")
        return (a / n) ** 2
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    v = _min_l2_in_ball(a, eps, q)
    return v ** 2


def threshold_truncate(est, eta: float, s: float = 2.0) -> np.ndarray:
    """Zero out entries with magnitude below 2*eta."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    est = np.asarray(est)
    out = est.copy()
    out[np.abs(est) < 2 * eta] = 0
    return out


def truncation_bound(eta: float, q: float, s: float, d: int, gamma: float = 1.0) -> float:
    """min{4 eta^{(q-s)/q} gamma^{s/q}, 3 d^{1/q} eta}."""
    if np.isinf(q):
        return min(4 * eta, 3 * eta)
    return min(4 * eta ** ((q - s) / q) * gamma ** (s / q), 3 * d ** (1.0 / q) * eta)


def linf_precision_for_lq(eps: float, q: float, s: float, d: int) -> float:
    """eta = max{(1/3)(eps/3)^{1/(1-s/q)}, eps/d^{1/q}}."""
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    if s > q:
        raise ValueError("need s <= q")
    gap = 1.0 - s * inv_exponent(q)
    first = 0.0 if gap == 0 else (eps / 3) ** (1.0 / gap) / 3
    second = eps / d ** inv_exponent(q)
    return max(first, second)


def schatten_eta(eps: float, r: int, q: float) -> float:
    """Operator-norm precision sufficient for an eps Schatten-q estimate of a rank-r state."""
    gap = 1.0 - inv_exponent(q)
    first = 0.0 if gap == 0 else (eps / 10) ** (1.0 / gap)
    return max(first, eps / (2 * (2 * r) ** inv_exponent(q)))


def psd_rank_project(est, eta: float, r: int, q: float | None = None) -> np.ndarray:
    """Subtract eta*I, drop negative eigenvalues, keep the r largest.

    The output is PSD with rank <= r.  If numerical noise ever pushes its trace
    above 1 it is rescaled so that the trace norm is at most 1.
    """
    A = np.asarray(est, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("square matrix expected")
    if np.max(np.abs(A - A.conj().T), initial=0.0) > HERM_TOL * max(1.0, np.abs(A).max()):
        raise ValueError("input is not Hermitian")
    A = 0.5 * (A + A.conj().T)
    w, V = np.linalg.eigh(A)
    w = np.clip(w - eta, 0.0, None)
    # eigh sorts ascending; a stable sort on -w keeps the original order among ties
    order = np.argsort(-w, kind="stable")
    keep = order[:r]
    w_keep = w[keep]
    tr = w_keep.sum()
    if tr > 1.0:
        w_keep = w_keep / tr
    Vk = V[:, keep]
    out = (Vk * w_keep) @ Vk.conj().T
    return 0.5 * (out + out.conj().T)


def subgaussian_opnorm_stats(d: int, eps: float, trials: int, rng: RngLike,
                             biased: bool = False,
                             quantiles=(0.5, 0.9, 0.99, 0.999)) -> dict:
    """Operator norms of d x d matrices with independent +-eps entries (or all +eps)."""
    if trials < 100:
        raise ValueError("need at least 100 trials")
    g = as_generator(rng)
    vals = np.empty(trials)
    for t in range(trials):
        if biased:
            E = np.full((d, d), eps)
        else:
            E = eps * g.choice([-1.0, 1.0], size=(d, d))
        vals[t] = np.linalg.norm(E, 2)
    out = {f"q{qq}": float(np.quantile(vals, qq)) for qq in quantiles}
    out.update(d=d, eps=eps, trials=trials, deterministic_bound=eps * d,
               mean=float(vals.mean()))
    return out


def trace_bound_from_purification(psi_est, psi_true: Ket, dims: tuple[int, int]):
    """Reduced estimate and its exact trace distance to the reduced true state."""
    dA, dB = dims
    est = np.asarray(psi_est.amps if isinstance(psi_est, Ket) else psi_est, dtype=complex)
    if est.size != dA * dB or psi_true.d != dA * dB:
        raise DimensionError("purification dimensions do not match")
    est_ket = Ket.normalized(est)
    rho_t = partial_trace(est_ket, dims, "A")
    rho = partial_trace(psi_true, dims, "A")
    dist = 0.5 * norm(rho.mat - rho_t.mat, 1)
    return rho_t, dist


def is_valid_state_like(mat, r: int | None = None, tol: float = 1e-8) -> bool:
    """PSD, trace norm <= 1 and (optionally) rank <= r."""
    w = np.linalg.eigvalsh(0.5 * (mat + np.conj(mat).T))
    ok = w.min() >= -tol and w.clip(0).sum() <= 1 + tol
    if r is not None:
        ok = ok and int(np.sum(w > tol)) <= r
    return bool(ok)


__all__ = [
    "amp_to_prob",
    "threshold_truncate",
    "truncation_bound",
    "linf_precision_for_lq",
    "schatten_eta",
    "psd_rank_project",
    "subgaussian_opnorm_stats",
    "trace_bound_from_purification",
    "prob_norm_exponent",
    "is_valid_state_like",
]
