"""Pure-state tomography in four access models plus a sparse variant.

Sampling models count copies in ``samples``; the unitary model counts calls to
the state-preparation unitary and its inverse in the ledger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .blockenc import CostLedger, hermitian_part, inner_product_diag
from .gradest import (
    PhaseValueOracle,
    block_to_grad,
    grad_params,
    unbiased_block_to_grad,
)
from .norms import linf_precision_for_lq, threshold_truncate
from .qcore import Ket, RngLike, as_generator, grid_values

MODELS = ("classical", "conditional", "copies", "unitary", "sparse")
SAMPLING_MODELS = ("classical", "conditional", "copies")


@dataclass(frozen=True)
class TomographyResult:
    estimate: np.ndarray
    model: str
    ledger: CostLedger
    target_norm: float
    eps: float
    delta: float
    samples: int = 0
    threshold: float | None = None
    flags: tuple = field(default=())

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")

    @property
    def cost(self) -> int:
        return self.samples if self.model in SAMPLING_MODELS else self.ledger.total_queries

    def to_record(self, truth=None, seed=None) -> dict:
        err = None
        if truth is not None:
            err = error_achieved(self, truth)
        return dict(model=self.model, d=int(self.estimate.size), eps=self.eps, delta=self.delta,
                    q=self.target_norm, error_achieved=err, queries=self.ledger.total_queries,
                    samples=self.samples, seed=seed)


def _lq(v, q):
    v = np.abs(np.asarray(v).ravel())
    return float(v.max()) if np.isinf(q) else float(np.sum(v ** q) ** (1 / q))


def align_global_phase(est, truth, q: float = np.inf, grid: int = 1024) -> tuple[float, float]:
    """min over theta of ||truth - e^{i theta} est||_q; returns (error, theta)."""
    est = np.asarray(est, dtype=complex)
    tr = np.asarray(truth, dtype=complex)
    th = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    errs = np.array([_lq(tr - np.exp(1j * t) * est, q) for t in th])
    i = int(np.argmin(errs))
    step = 2 * np.pi / grid
    res = minimize_scalar(lambda t: _lq(tr - np.exp(1j * t) * est, q),
                          bounds=(th[i] - step, th[i] + step), method="bounded",
                          options={"xatol": 1e-10})
    if res.fun < errs[i]:
        return float(res.fun), float(res.x % (2 * np.pi))
    return float(errs[i]), float(th[i])


def error_achieved(res: TomographyResult, truth) -> float:
    truth = np.asarray(truth.amps if isinstance(truth, Ket) else truth)
    q = res.target_norm
    if res.model == "classical":
        return _lq(np.abs(truth) - np.abs(res.estimate), q)
    if res.model == "copies":
        return align_global_phase(res.estimate, truth, q)[0]
    return _lq(truth - res.estimate, q)


def shots_for(eps: float, delta: float, outcomes: int) -> int:
    """ceil(8 ln(2D/delta)/eps^2): enough for an eps l_inf estimate of sqrt-probabilities."""
    return math.ceil(8 * math.log(2 * outcomes / delta) / eps ** 2)


def _sqrt_freq(probs: np.ndarray, shots: int, g: np.random.Generator) -> np.ndarray:
    p = np.clip(probs, 0, None)
    p = p / p.sum()
    return np.sqrt(g.multinomial(shots, p) / shots)


def _check_ed(eps, delta):
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")


def classical_linf_tomo(state, d: int, eps: float, delta: float, rng: RngLike) -> TomographyResult:
    """Square roots of empirical frequencies from computational-basis shots."""
    _check_ed(eps, delta)
    probs = state.probs() if isinstance(state, Ket) else np.asarray(state, dtype=float)
    if probs.size != d:
        raise ValueError("dimension mismatch")
    k = shots_for(eps, delta, d)
    est = _sqrt_freq(probs, k, as_generator(rng))
    return TomographyResult(est, "classical", CostLedger(), np.inf, eps, delta, samples=k)


def lq_wrap(linf_routine, q: float, eps: float, d: int, s: float = 2.0) -> TomographyResult:
    """Run an l_inf routine at precision eta and truncate below 2 eta for an l_q target."""
    if q < 2:
        raise ValueError("amplitude targets need q >= 2")
    if np.isinf(q):
        return linf_routine(eps)
    eta = linf_precision_for_lq(eps, q, s, d)
    r = linf_routine(eta)
    est = threshold_truncate(r.estimate, eta)
    return TomographyResult(est, r.model, r.ledger, q, eps, r.delta, r.samples, 2 * eta, r.flags)


def hadamard_pair_est(psi0, psi1, eps: float, delta: float, rng: RngLike,
                      shots: int | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Estimates of |alpha_j + beta_j| and |alpha_j - beta_j| from (|0>psi0 + |1>psi1)/sqrt 2.

    Inputs may be subnormalized as long as the joint state has unit norm.
    """
    a = np.asarray(psi0, dtype=complex).ravel()
    b = np.asarray(psi1, dtype=complex).ravel()
    if a.shape != b.shape:
        raise ValueError("branches must have equal dimension")
    tot = 0.5 * (np.vdot(a, a).real + np.vdot(b, b).real)
    if abs(tot - 1) > 1e-8:
        raise ValueError("input is not a normalized conditional state")
    d = a.size
    probs = np.concatenate([np.abs(a + b) ** 2, np.abs(a - b) ** 2]) / 4
    k = shots if shots is not None else shots_for(eps / 2, delta, 2 * d)
    r = 2 * _sqrt_freq(probs, k, as_generator(rng))
    return r[:d], r[d:], k


def cond_sample_tomo(psi: Ket, d: int, eps: float, delta: float, rng: RngLike) -> TomographyResult:
    """Complex amplitudes from copies of (|0>|psi> + |1>|0>)/sqrt 2.

    Three stages of equal size: magnitudes r, then z = |alpha - r~| and
    w = |alpha - i r~| against the renormalized magnitude estimate.
    """
    _check_ed(eps, delta)
    g = as_generator(rng)
    alpha = psi.amps
    if alpha.size != d:
        raise ValueError("dimension mismatch")
    k = shots_for(eps / 32, delta / 3, 2 * d)
    # stage 1: measuring both registers gives outcome (0, j) w.p. |alpha_j|^2 / 2
    e0 = np.zeros(d, dtype=complex)
    e0[0] = 1
    probs = np.concatenate([np.abs(alpha) ** 2, np.abs(e0) ** 2]) / 2
    counts = g.multinomial(k, probs / probs.sum())
    r = np.sqrt(2 * counts[:d] / k)
    n = np.linalg.norm(r)
    r = r / n if n > 0 else r
    keep = r >= eps / 2
    _, z, _ = hadamard_pair_est(alpha, r, eps, delta / 3, g, shots=k)
    _, w, _ = hadamard_pair_est(alpha, 1j * r, eps, delta / 3, g, shots=k)
    est = np.zeros(d, dtype=complex)
    rk = r[keep]
    a = rk - z[keep] ** 2 / (2 * rk)
    b = rk - w[keep] ** 2 / (2 * rk)
    est[keep] = a + 1j * b
    return TomographyResult(est, "conditional", CostLedger(), np.inf, eps, delta,
                            samples=3 * k, threshold=eps / 2)


def _hadamard_on_bit(v: np.ndarray, h: int, phase: complex = 1.0) -> np.ndarray:
    L = v.size
    v = v.reshape(L >> (h + 1), 2, 1 << h)
    lo, hi = v[:, 0, :], phase * v[:, 1, :]
    out = np.stack([(lo + hi), (lo - hi)], axis=1) / math.sqrt(2)
    return out.reshape(L)


def copies_only_tomo(psi: Ket, d: int, eps: float, delta: float, rng: RngLike) -> TomographyResult:
    """Amplitudes up to a global phase using only copies of |psi> and per-copy unitaries."""
    _check_ed(eps, delta)
    g = as_generator(rng)
    alpha = psi.amps
    if alpha.size != d:
        raise ValueError("dimension mismatch")
    nbits = max(1, math.ceil(math.log2(d)))
    mmax = nbits
    # stage 1 precision eps/(16 m) with m <= log2 d
    k0 = shots_for(eps / (16 * mmax), delta / 2, d)
    r = _sqrt_freq(np.abs(alpha) ** 2, k0, g)
    S = np.nonzero(r >= eps / 2)[0]
    S = S[np.argsort(-r[S], kind="stable")]
    kS = S.size
    est = np.zeros(d, dtype=complex)
    samples = k0
    if kS == 0:
        return TomographyResult(est, "copies", CostLedger(), np.inf, eps, delta, samples, eps / 2)
    m = max(1, int(math.floor(math.log2(kS))) + 1)
    L = 1 << max(m, nbits)
    perm = np.concatenate([S, np.setdiff1d(np.arange(d), S)])
    v = np.zeros(L, dtype=complex)
    v[: d] = alpha[perm]
    rr = r[perm]
    ke = shots_for(eps / (16 * m), delta / (4 * m), L)
    s_est = np.zeros((m, L))
    t_est = np.zeros((m, L))
    for h in range(m):
        for phase, store in ((1.0, s_est), (1j, t_est)):
            out = _hadamard_on_bit(v, h, phase)
            store[h] = math.sqrt(2) * _sqrt_freq(np.abs(out) ** 2, ke, g)
            samples += ke
    rel = np.zeros(L, dtype=complex)
    rel[0] = rr[0]
    for j in range(1, kS):
        h = (j & -j).bit_length() - 1
        p = j & (j - 1)
        rp, rj = rr[p], rr[j]
        s = s_est[h][p + (1 << h)]
        t = t_est[h][p + (1 << h)]
        a = (rp ** 2 + rj ** 2 - s ** 2) / (2 * rp)
        b = (t ** 2 - rp ** 2 - rj ** 2) / (2 * rp)
        ph = rel[p] / abs(rel[p]) if abs(rel[p]) > 0 else 1.0
        rel[j] = ph * (a + 1j * b)
    est[perm[:kS]] = rel[:kS]
    return TomographyResult(est, "copies", CostLedger(), np.inf, eps, delta, samples, eps / 2)


@dataclass(frozen=True)
class AmpEncoding:
    state: Ket
    x_tilde: np.ndarray
    ledger: CostLedger
    index_swaps: int


def amp_encode(x, eps: float, b: int | None = None) -> AmpEncoding:
    """|amp(x~)> with ||x~ - x||_inf <= eps; index-major layout |j>|flag>."""
    x = np.asarray(x, dtype=float).ravel()
    if np.any(np.abs(x) > 1):
        raise ValueError("entries must lie in [-1, 1]")
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    bits_eps = math.ceil(math.log2(2 / eps))
    if b is not None and np.any(np.abs(x * 2.0 ** b - np.rint(x * 2.0 ** b)) > 1e-9):
        raise ValueError(f"entries are not representable with {b} bits")
    t = bits_eps if b is None else min(b, bits_eps)
    xbar = np.trunc(x * 2.0 ** t) / 2.0 ** t
    step = 2.0 ** -(bits_eps + 1)
    a = np.rint(np.arcsin(xbar) / step) * step
    xt = np.sin(a)
    d = x.size
    amps = np.empty(2 * d)
    amps[0::2] = xt / math.sqrt(d)
    amps[1::2] = np.sqrt(np.clip(1 - xt ** 2, 0, None)) / math.sqrt(d)
    lg = max(1, math.ceil(math.log2(max(d, 2))))
    le = math.log2(2 / eps)
    gates = math.ceil(lg + le * max(1.0, math.log2(max(le, 2))) ** 2)
    swaps = 2 * t
    return AmpEncoding(Ket.normalized(amps), xt, CostLedger(0, 0, gates, lg + bits_eps), swaps)


def _oracle_from_block(alpha_part: np.ndarray, b: int) -> PhaseValueOracle:
    """Phase values read off the block-encoded diagonal Re<amp(x)|psi,0>, for tiny registers."""
    d = alpha_part.size
    xs = grid_values(b)
    pts = np.stack([m.ravel() for m in np.meshgrid(*([xs] * d), indexing="ij")], axis=1)
    fam = np.empty((pts.shape[0], 2 * d), dtype=complex)
    fam[:, 0::2] = pts / math.sqrt(d)
    fam[:, 1::2] = np.sqrt(1 - pts ** 2) / math.sqrt(d)
    target = np.zeros(2 * d, dtype=complex)
    target[0::2] = alpha_part
    vals = np.empty(pts.shape[0])
    for lo in range(0, pts.shape[0], 256):
        blk = fam[lo:lo + 256]
        W = inner_product_diag(np.tile(target, (blk.shape[0], 1)), blk)
        vals[lo:lo + 256] = np.diag(hermitian_part(W).block).real
    table = {tuple(np.round(p * 2 ** (b + 1)).astype(int)): v for p, v in zip(pts, vals)}

    def f(x):
        x = np.atleast_2d(x)
        return np.array([table[tuple(np.round(r * 2 ** (b + 1)).astype(int))] for r in x])

    return PhaseValueOracle(f, d, alpha_part.real / math.sqrt(d))


def _grad_real(part: np.ndarray, eps: float, delta: float, g, unbiased: bool,
               full_path: bool) -> tuple[np.ndarray, CostLedger]:
    dd = part.size
    e2 = eps / math.sqrt(dd)
    if full_path:
        b = grad_params(e2, delta, dd)["b"]
        oracle = _oracle_from_block(part, b)
    else:
        oracle = PhaseValueOracle.linear_function(part.real / math.sqrt(dd))
    fn = unbiased_block_to_grad if unbiased else block_to_grad
    r = fn(oracle, e2, delta, g)
    # each use of (W + W^dagger)/2 calls U_psi once and U_psi^dagger once
    uses = r.ledger.queries_U
    led = CostLedger(uses, uses, r.ledger.extra_gates, r.ledger.depth)
    return math.sqrt(dd) * np.asarray(r.k), led


def pe_real_tomo(psi: Ket, d: int, eps: float, delta: float, rng: RngLike,
                 unbiased: bool = False, restrict: bool = True,
                 full_path: bool = False) -> TomographyResult:
    """Estimate Re(alpha) via gradient estimation of f(x) = <Re alpha, x>/sqrt(d)."""
    _check_ed(eps, delta)
    g = as_generator(rng)
    alpha = psi.amps
    if alpha.size != d:
        raise ValueError("dimension mismatch")
    est = np.zeros(d)
    led = CostLedger()
    idx = np.arange(d)
    if restrict and eps >= 1 / math.sqrt(d):
        # every |alpha_j| > eps shows up among these shots w.h.p. (at most 1/eps^2 of them)
        k = math.ceil(math.log(2 / (eps ** 2 * delta)) / eps ** 2)
        counts = g.multinomial(k, np.abs(alpha) ** 2 / np.sum(np.abs(alpha) ** 2))
        idx = np.nonzero(counts)[0]
        led = CostLedger(k, 0)
        delta = delta / 2
    if idx.size:
        vals, l2 = _grad_real(alpha[idx], eps, delta, g, unbiased, full_path)
        est[idx] = vals
        led = led + l2
    return TomographyResult(est, "unitary", led, np.inf, eps, delta)


def pe_complex_tomo(psi: Ket, d: int, eps: float, delta: float, rng: RngLike,
                    unbiased: bool = False, restrict: bool = True) -> TomographyResult:
    """Real part from U_psi and imaginary part from the same routine on -i U_psi."""
    g = as_generator(rng)
    re = pe_real_tomo(psi, d, eps / math.sqrt(2), delta / 2, g, unbiased, restrict)
    im = pe_real_tomo(Ket(-1j * psi.amps), d, eps / math.sqrt(2), delta / 2, g, unbiased, restrict)
    return TomographyResult(re.estimate + 1j * im.estimate, "unitary", re.ledger + im.ledger,
                            np.inf, eps, delta)


def _search_budgets(s: int, eps: float, P: float) -> tuple[float, float]:
    q = sum(math.sqrt((s - j) * eps ** 2 + P) / ((s - j) * eps ** 2) for j in range(s))
    n = sum(((s - j) * eps ** 2 + P) / ((s - j) * eps ** 2) for j in range(s))
    return 6 * q, 6 * n


def sparse_tomo(psi: Ket, d: int, s: int, eps: float, delta: float, rng: RngLike,
                P: float | None = None) -> TomographyResult:
    """Find the large entries by repeated amplified sampling, then run the unitary routine on them.

    Amplitude amplification is idealized: each round costs ceil(1/sqrt(p_good))
    queries and succeeds with probability 2/3, after which an unseen index is
    drawn from the renormalized unseen part.
    """
    _check_ed(eps, delta)
    if s < 1:
        raise ValueError("s must be >= 1")
    g = as_generator(rng)
    alpha = psi.amps
    p = np.abs(alpha) ** 2
    if P is None:
        P = eps ** 2 * s
    qb, nb = _search_budgets(s, eps, P)
    runs = max(1, math.ceil(math.log(2 / delta) / math.log(3)))
    found: set[int] = set()
    queries = 0
    overflow = 0
    for _ in range(runs):
        seen: set[int] = set()
        q_run = 0
        draws = 0
        first = True
        too_many = False
        while True:
            mask = np.ones(d, bool)
            if seen:
                mask[list(seen)] = False
            pg = float(p[mask].sum())
            if pg <= 1e-15:
                break
            cost = 1 if first else math.ceil(1 / math.sqrt(pg))
            if q_run + cost > qb:
                break
            q_run += cost
            first = False
            if g.random() >= 2 / 3:
                continue
            draws += 1
            if draws > nb:
                too_many = True
                break
            pp = np.where(mask, p, 0.0)
            seen.add(int(g.choice(d, p=pp / pp.sum())))
        queries += q_run
        if too_many:
            overflow += 1
        else:
            found |= seen
    idx = np.array(sorted(found), dtype=int)
    est = np.zeros(d, dtype=complex)
    led = CostLedger(queries, 0)
    if idx.size:
        # the amplitude encoding only ranges over the found indices; no renormalization needed
        part = alpha[idx]
        re, l1 = _grad_real(part, eps / math.sqrt(2), delta / 4, g, False, False)
        im, l2 = _grad_real(-1j * part, eps / math.sqrt(2), delta / 4, g, False, False)
        est[idx] = re + 1j * im
        led = led + l1 + l2
    flags = []
    if overflow:
        flags.append(f"support search exceeded its draw budget in {overflow}/{runs} runs")
    # each estimate is within eps, so |est| > 2 eps certifies |alpha_j| > eps >= eps sqrt(s/d)
    big = int(np.sum(np.abs(est) > 2 * eps))
    if big > s:
        flags.append(f"support assumption violated: {big} entries certainly above eps*sqrt(s/d) > s={s}")
    flags = tuple(flags)
    return TomographyResult(est, "sparse", led, np.inf, eps, delta, threshold=None, flags=flags)
