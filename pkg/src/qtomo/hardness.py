"""Executable versions of the lower-bound constructions.

Hard distribution families for conditional samples and for the fractional phase
oracle, mutually unbiased bases over F_d with their Gram-matrix identities, and
the density-matrix embedding of a bit string.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .qcore import DensityMatrix, Ket, RngLike, as_generator


def is_odd_prime(d: int) -> bool:
    if d < 3 or d % 2 == 0:
        return False
    return all(d % p for p in range(3, math.isqrt(d) + 1, 2))


def legendre(a: int, d: int) -> int:
    """Legendre symbol by Euler's criterion."""
    a %= d
    if a == 0:
        return 0
    return 1 if pow(a, (d - 1) // 2, d) == 1 else -1


def gauss_constant(d: int) -> complex:
    """c_d = 1 for d = 1 mod 4, i for d = 3 mod 4."""
    return 1.0 + 0j if d % 4 == 1 else 1j


def gauss_sum(a: int, b: int, d: int) -> complex:
    """sum_l w^(a l^2 + b l), by direct summation."""
    l = np.arange(d)
    return complex(np.exp(2j * np.pi * ((a * l * l + b * l) % d) / d).sum())


def gauss_sum_closed(a: int, b: int, d: int) -> complex:
    """Completing the square: w^(-(4a)^-1 b^2) (a/d) c_d sqrt(d), a != 0."""
    if a % d == 0:
        raise ValueError("a must be nonzero mod d")
    inv4a = pow(4 * a, -1, d)
    return (np.exp(2j * np.pi * ((-inv4a * b * b) % d) / d)
            * legendre(a, d) * gauss_constant(d) * math.sqrt(d))


def entropy(eigs) -> float:
    """Von Neumann entropy in nats from a spectrum."""
    w = np.asarray(eigs, dtype=float)
    w = w[w > 1e-300]
    return float(-(w * np.log(w)).sum())


# --- conditional-sample family ------------------------------------------

@dataclass(frozen=True)
class ProbSet:
    d: int
    eps: float

    @property
    def c_prod(self) -> float:
        return math.sqrt(1 - 36 * self.eps ** 2)

    def dist(self, b) -> np.ndarray:
        """p^(b) over [d/2] x {0,1}, flattened pairwise: p_{i,c} = (1 + (-1)^(b_i xor c) 6 eps)/d."""
        b = np.asarray(b, dtype=int)
        if b.size != self.d // 2:
            raise ValueError("bit string must have length d/2")
        c = np.arange(2)
        sign = (-1.0) ** (b[:, None] ^ c[None, :])
        return ((1 + sign * 6 * self.eps) / self.d).ravel()

    def closed_spectrum(self) -> np.ndarray:
        """Nonzero spectrum of the mixture: one large eigenvalue and d/2 equal small ones."""
        cc = self.c_prod
        return np.concatenate([[(3 + cc) / 4], np.full(self.d // 2, (1 - cc) / (2 * self.d))])

    def closed_entropy(self) -> float:
        return entropy(self.closed_spectrum())

    def entropy_bound(self) -> float:
        return 27 * self.eps ** 2 * (1 + math.log(self.d / self.eps ** 2))

    def sigma(self) -> np.ndarray:
        """Uniform mixture of (|0>|psi_b> + |1>|0>)/sqrt 2, built explicitly (d <= 16)."""
        if self.d > 16:
            raise ValueError("explicit mixture limited to d <= 16")
        d = self.d
        out = np.zeros((2 * d, 2 * d))
        n = 0
        for bits in itertools.product((0, 1), repeat=d // 2):
            v = np.zeros(2 * d)
            v[:d] = np.sqrt(self.dist(bits))
            v[d] = 1.0
            v /= math.sqrt(2)
            out += np.outer(v, v)
            n += 1
        return out / n


def probset_build(d: int, eps: float) -> ProbSet:
    if d < 12 or d % 2:
        raise ValueError("d must be even and at least 12")
    if not (0 <= 6 * eps < 1):
        raise ValueError("need 6 eps < 1")
    ps = ProbSet(d, eps)
    if ps.closed_entropy() > ps.entropy_bound() + 1e-12:
        raise AssertionError("entropy bound violated")
    return ps


# --- fractional phase oracle embedding -----------------------------------

@dataclass(frozen=True)
class PhaseDist:
    x: np.ndarray
    eps: float
    p: np.ndarray  # shape (d, 2)

    def decode(self, p_est) -> np.ndarray:
        p_est = np.asarray(p_est).reshape(-1, 2)
        d = p_est.shape[0]
        return (p_est[:, 0] < (0.5 - 4 * self.eps) / d).astype(int)


def phase_to_dist(x, eps: float) -> PhaseDist:
    """Distribution prepared with one controlled use of |j> -> exp(4 pi i eps x_j)|j>."""
    if not (0 < eps < 1 / 16):
        raise ValueError("eps must lie in (0, 1/16)")
    x = np.asarray(x, dtype=int)
    d = x.size
    ang = np.pi / 4 + 4 * np.pi * eps * x
    p = np.stack([np.cos(ang) ** 2, np.sin(ang) ** 2], axis=1) / d
    return PhaseDist(x, eps, p)


def phase_prep_state(x, eps: float) -> np.ndarray:
    """The prepared amplitudes, gate by gate, for cross-checking the closed form."""
    x = np.asarray(x, dtype=int)
    d = x.size
    ph = 4 * np.pi * eps * x
    psi = np.stack([np.exp(-1j * (np.pi / 4 + ph)), np.exp(1j * (np.pi / 4 + ph))], axis=1)
    psi /= math.sqrt(2 * d)
    H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    S = np.diag([1, 1j])
    return psi @ H.T @ S.T


# --- mutually unbiased bases ---------------------------------------------

@dataclass(frozen=True)
class MubFamily:
    d: int
    r: int
    U: np.ndarray       # (r, d, d); column k of U[j] is phi_k^(j)
    alpha: np.ndarray   # (r, r, d, d)
    S: np.ndarray       # (r, r)
    A: np.ndarray       # (rd, rd)
    M: np.ndarray       # (rd, rd)

    def alpha_closed(self, j: int, jp: int) -> np.ndarray:
        d = self.d
        if j == jp:
            return np.eye(d, dtype=complex)
        k = np.arange(d)[:, None]
        kp = np.arange(d)[None, :]
        x = pow(4 * (jp - j), -1, d)
        e = (kp * kp - k * k - x * (k - kp) ** 2) % d
        return np.exp(2j * np.pi * e / d) * legendre(jp - j, d) * gauss_constant(d) / math.sqrt(d)

    def S_closed(self, j: int, jp: int) -> complex:
        if j == jp:
            return complex(self.d)
        return gauss_constant(self.d) * math.sqrt(self.d) * legendre(jp - j, self.d)

    def eigvec(self, l: int, m: int) -> np.ndarray:
        """v^(l,m) with block j, entry k equal to w^(l j - k (k - m)), over the r blocks."""
        d = self.d
        j = np.arange(self.r)[:, None]
        k = np.arange(d)[None, :]
        return np.exp(2j * np.pi * ((l * j - k * (k - m)) % d) / d).ravel()

    def eigval(self, l: int, m: int) -> float:
        """d (l + m^2 / d); equals d c_d^2 (-(l + m^2) / d) since (-1/d) = c_d^2."""
        return float(self.d * legendre(l + m * m, self.d))


def mub_vectors(d: int, j: int) -> np.ndarray:
    """Columns phi_k^(j) = (1/sqrt d) sum_l w^(-k l + j l^2 + k^2) |l>."""
    l = np.arange(d)[:, None]
    k = np.arange(d)[None, :]
    e = (-k * l + j * l * l + k * k) % d
    return np.exp(2j * np.pi * e / d) / math.sqrt(d)


def mub_build(d: int, r: int | None = None) -> MubFamily:
    """The unitaries are sum_k |phi_k^(j)><k| (no further 1/sqrt d, which would break unitarity)."""
    if not is_odd_prime(d):
        raise ValueError("d must be an odd prime")
    r = d if r is None else r
    if not (1 <= r <= d):
        raise ValueError("need 1 <= r <= d")
    U = np.stack([mub_vectors(d, j) for j in range(r)])
    alpha = np.einsum("alk,blm->abkm", U.conj(), U)
    S = alpha.sum(axis=(2, 3))
    A = np.real(alpha * S.conj()[:, :, None, None]).transpose(0, 2, 1, 3).reshape(r * d, r * d)
    Mb = alpha * S.conj()[:, :, None, None]
    Mb[np.arange(r), np.arange(r)] = 0
    M = Mb.transpose(0, 2, 1, 3).reshape(r * d, r * d)
    return MubFamily(d, r, U, alpha, S, A, M)


def mub_claims(fam: MubFamily, tol: float = 1e-9) -> dict:
    """Numerical residuals for the five claims and the spectral structure of M."""
    d, r = fam.d, fam.r
    I = np.eye(d)
    unit = max(np.abs(fam.U[j].conj().T @ fam.U[j] - I).max() for j in range(r))
    unb = 0.0
    a_res = 0.0
    s_res = 0.0
    for j in range(r):
        for jp in range(r):
            if j != jp:
                unb = max(unb, np.abs(np.abs(fam.alpha[j, jp]) - 1 / math.sqrt(d)).max())
            a_res = max(a_res, np.abs(fam.alpha[j, jp] - fam.alpha_closed(j, jp)).max())
            s_res = max(s_res, abs(fam.S[j, jp] - fam.S_closed(j, jp)))
    A_op = float(np.linalg.norm(fam.A, 2))
    A_fro2 = float(np.sum(fam.A ** 2))
    eig_res = 0.0
    for l in range(d):
        for m in range(d):
            v = fam.eigvec(l, m)
            eig_res = max(eig_res, np.abs(fam.M @ v - fam.eigval(l, m) * v).max())
    w = np.linalg.eigvalsh(fam.M)
    spec = float(min(np.abs(w[:, None] - np.array([-d, 0, d])[None, :]).min(axis=1).max(), np.inf))
    return dict(unitarity=float(unit), unbiased=float(unb), alpha=float(a_res), S=float(s_res),
                A_op=A_op, A_op_bound=2 * d, A_fro2=A_fro2, A_fro2_bound=4 * d ** 3 * r,
                A_minus=float(np.abs(fam.A - (fam.M.real + d * np.eye(r * d))).max()),
                eigvec=float(eig_res) if r == d else None, spectrum=spec,
                ok=bool(unit < tol and unb < tol and a_res < tol and s_res < tol
                        and A_op <= 2 * d + 1e-6 and A_fro2 <= 4 * d ** 3 * r + 1e-6))


# --- bit-string embedding ------------------------------------------------

def rho_embed(b, fam: MubFamily, eps: float) -> tuple[Ket, DensityMatrix]:
    """Purification sum_j |psi_b^(j)>|j>/sqrt r and the mixed state rho_b on C^2 x C^d.

    Block j rotates |l> to conj(U^(j))|l> = sum_k conj(U_kl)|k>, the reading under
    which the Gram matrix of the rotated vectors is alpha.
    """
    d, r = fam.d, fam.r
    b = np.asarray(b, dtype=int).reshape(-1)
    if b.size != r * d:
        raise ValueError("b must have length r*d")
    if not (0 <= eps < 1):
        raise ValueError("eps must lie in [0, 1)")
    bits = b.reshape(r, d)
    sgn = (-1.0) ** bits
    a0 = np.sqrt(0.5 + 0.5 * eps * sgn)
    a1 = np.sqrt(0.5 - 0.5 * eps * sgn)
    psis = np.empty((r, 2, d), dtype=complex)
    for j in range(r):
        R = fam.U[j].conj()
        psis[j, 0] = R @ a0[j] / math.sqrt(d)
        psis[j, 1] = R @ a1[j] / math.sqrt(d)
    flat = psis.reshape(r, 2 * d)
    rho = flat.T @ flat.conj() / r
    pur = (flat.T / math.sqrt(r)).ravel()
    return Ket(pur), DensityMatrix(0.5 * (rho + rho.conj().T))


def delta_vector(b, bbar) -> np.ndarray:
    return (-1.0) ** np.asarray(b) - (-1.0) ** np.asarray(bbar)


def frodist_prediction(b, bbar, fam: MubFamily, eps: float) -> float:
    dl = delta_vector(b, bbar)
    return eps ** 2 / (2 * fam.d ** 2 * fam.r ** 2) * float(dl @ fam.A @ dl)


def delta_quadratic_stats(fam: MubFamily, trials: int, rng: RngLike) -> dict:
    """Exact mean 2 tr(A) and Monte Carlo P[delta^T A delta <= d^2 r / 2]."""
    g = as_generator(rng)
    d, r = fam.d, fam.r
    n = r * d
    vals = np.empty(trials)
    chunk = 10_000
    for lo in range(0, trials, chunk):
        t = min(chunk, trials - lo)
        dl = g.choice([-2.0, 0.0, 0.0, 2.0], size=(t, n))
        vals[lo:lo + t] = np.einsum("ti,ij,tj->t", dl, fam.A, dl)
    tail = float(np.mean(vals <= d * d * r / 2))
    return dict(mean_exact=2 * float(np.trace(fam.A)), mean_formula=2 * d * d * r,
                mean_mc=float(vals.mean()), stderr=float(vals.std() / math.sqrt(trials)),
                tail=tail, tail_stderr=math.sqrt(max(tail * (1 - tail), 1 / trials) / trials),
                diag_all_d=bool(np.allclose(np.diag(fam.A), d, atol=1e-9)), trials=trials)
