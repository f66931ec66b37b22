"""Phase estimation with a random pre-rotation, its boosted variants and derived estimators.

Outcome sampling uses the closed-form distribution of the measured index
(a Fejer kernel) with an exact rejection sampler, so each trial costs O(1)
regardless of the register size M.  A statevector path is kept for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .qcore import RngLike, as_generator

TWO_PI = 2 * np.pi
INF = math.inf


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseInstance:
    phi: float
    M: int
    n: float = INF

    def __post_init__(self):
        _check_M(self.M)
        if not (self.n == INF or (float(self.n).is_integer() and self.n >= 1)):
            raise ParameterError("n must be a positive integer or inf")
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)


@dataclass(frozen=True)
class LambdaTable:
    M: int
    m: int
    lam: float
    mc_samples: int
    std_err: float
    seed: int | None = None
    algorithm: int = 2
    n: float = INF


@dataclass(frozen=True)
class TrialStats:
    mean: float
    var: float
    stderr: float
    quantiles: dict
    trials: int

    @classmethod
    def of(cls, x, qs=(0.01, 0.5, 0.99)) -> "TrialStats":
        x = np.asarray(x, dtype=float)
        v = float(x.var(ddof=1)) if x.size > 1 else 0.0
        return cls(float(x.mean()), v, math.sqrt(v / x.size),
                   {q: float(np.quantile(x, q)) for q in qs}, int(x.size))


def _check_M(M: int) -> None:
    if M < 2 or M & (M - 1):
        raise ParameterError(f"M must be a power of two >= 2, got {M}")


def circ_dist(a, b):
    """|a - b| modulo 2 pi."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def signed_err(est, phi):
    """est - phi lifted to [-pi, pi)."""
    return np.mod(np.asarray(est) - phi + np.pi, TWO_PI) - np.pi


def fejer(t, M: int):
    """Probability of an index offset t (real) after the inverse transform over Z_M."""
    t = np.asarray(t, dtype=float)
    return np.sinc(t) ** 2 / np.sinc(t / M) ** 2


def pe_density(delta, M: int):
    """Density of the n=inf output at circular distance delta from the true phase."""
    delta = np.asarray(delta, dtype=float)
    return (M / TWO_PI) * np.sinc(M * delta / TWO_PI) ** 2 / np.sinc(delta / TWO_PI) ** 2


def pe_cdf_err(x, M: int, K: int = 4096):
    """P[signed error <= x] for x in [-pi, pi], by the Fourier series of the density.

    The density is (1/2pi) sum_{|k|<M} (1 - |k|/M) e^{ik delta}, which integrates in closed form.
    """
    x = np.asarray(x, dtype=float)
    k = np.arange(1, M)
    w = 1 - k / M
    s = np.sum(w[None, :] * (np.sin(np.multiply.outer(x.ravel(), k)) / k)[:, :], axis=1)
    out = (x.ravel() + np.pi) / TWO_PI + s / np.pi
    return out.reshape(x.shape)


def draw_shift(n: float, size, rng: RngLike) -> np.ndarray:
    """Uniform u in [0,1): n binary digits, or a full 53-bit double when n is inf."""
    g = as_generator(rng)
    if n == INF:
        return g.random(size)
    n = int(n)
    if n <= 62:
        return g.integers(0, 1 << n, size=size).astype(float) / float(1 << n)
    return np.floor(g.random(size) * 2.0 ** n) / 2.0 ** n


def _sample_offsets(f: np.ndarray, M: int, g: np.random.Generator) -> np.ndarray:
    """Draw l with P(l) = fejer(l - f) over l in {-M/2+1, ..., M/2}, for f in [0,1).

    Head l in {0, 1} exactly; the tails by rejection from the envelope
    (s/4)/x^2 with s = sin^2(pi f), which dominates P(l) through sin(y) >= 2y/pi.
    """
    size = f.shape
    f = f.ravel()
    out = np.zeros(f.size, dtype=np.int64)
    p0 = fejer(-f, M)
    p1 = fejer(1.0 - f, M)
    v = g.random(f.size)
    out[(v >= p0)] = 1
    if M == 2:
        return out.reshape(size)
    tail = np.nonzero(v >= p0 + p1)[0]
    half = M // 2
    while tail.size:
        ft = f[tail]
        s = np.sin(np.pi * ft) ** 2
        # right tail covers x in (1-f, M/2-f], left tail x in (f, M/2-1+f]
        aR, bR = 1.0 - ft, half - ft
        aL, bL = ft, half - 1.0 + ft
        with np.errstate(divide="ignore"):
            mR = np.where(aR > 0, 1.0 / aR - 1.0 / bR, np.inf)
            mL = np.where(aL > 0, 1.0 / aL - 1.0 / bL, np.inf)
        right = g.random(tail.size) * (mR + mL) < mR
        right = np.where(np.isinf(mR), True, np.where(np.isinf(mL), False, right))
        a = np.where(right, aR, aL)
        b = np.where(right, bR, bL)
        V = g.random(tail.size)
        inv = 1.0 / a - V * (1.0 / a - 1.0 / b)
        x = 1.0 / inv
        l_right = np.clip(np.ceil(x + ft), 2, half)
        i_left = np.clip(np.ceil(x - ft), 1, half - 1)
        l = np.where(right, l_right, -i_left).astype(np.int64)
        t = np.abs(l - ft)
        acc = 4 * t * (t - 1) / (M * M * np.sin(np.pi * t / M) ** 2)
        ok = (g.random(tail.size) < acc) & (s > 0)
        out[tail[ok]] = l[ok]
        tail = tail[~ok]
    return out.reshape(size)


def suppressed_pe(inst: PhaseInstance, rng: RngLike, size=None, u=None) -> np.ndarray | float:
    """Run the shifted phase estimation; returns estimates in [0, 2pi).

    ``u`` forces the random shift (for tests); otherwise it is drawn with ``inst.n`` digits.
    """
    g = as_generator(rng)
    shape = () if size is None else size
    M = inst.M
    if u is None:
        u = draw_shift(inst.n, shape, g)
    u = np.broadcast_to(np.asarray(u, dtype=float), shape)
    ftot = M * inst.phi / TWO_PI - u
    c = np.floor(ftot)
    f = ftot - c
    l = _sample_offsets(np.asarray(f, dtype=float), M, g)
    j = np.mod(c + l, M)
    est = np.mod(TWO_PI * (j + u) / M, TWO_PI)
    return float(est) if size is None else est


def pe_outcome_probs(phi: float, M: int, u: float) -> np.ndarray:
    """Exact distribution of the measured index j in Z_M."""
    j = np.arange(M)
    t = M * phi / TWO_PI - u - j
    t = np.mod(t + M / 2, M) - M / 2
    p = fejer(t, M)
    return p / p.sum()


def pe_statevector_probs(phi: float, M: int, u: float) -> np.ndarray:
    """Same distribution from the explicit state, phase gate and inverse transform."""
    k = np.arange(M)
    psi = np.exp(1j * phi * k) / np.sqrt(M)
    psi = psi * np.exp(-1j * (TWO_PI * u / M) * k)
    amp = np.fft.fft(psi) / np.sqrt(M)
    return np.abs(amp) ** 2


def suppressed_pe_dense(inst: PhaseInstance, rng: RngLike, size: int,
                        statevector: bool = False) -> np.ndarray:
    """Reference sampler drawing j from the full probability vector (slow, for checks)."""
    g = as_generator(rng)
    u = draw_shift(inst.n, size, g)
    out = np.empty(size)
    for i in range(size):
        p = (pe_statevector_probs if statevector else pe_outcome_probs)(inst.phi, inst.M, u[i])
        j = g.choice(inst.M, p=p / p.sum())
        out[i] = (TWO_PI * (j + u[i]) / inst.M) % TWO_PI
    return out


def shortest_arc_midpoint(samples: np.ndarray, m: int, rng: RngLike) -> np.ndarray:
    """Midpoint of the shortest circular arc covering m+1 of the 2m+1 points (per row)."""
    g = as_generator(rng)
    S = np.sort(np.mod(np.atleast_2d(samples), TWO_PI), axis=1)
    T, K = S.shape
    if K != 2 * m + 1:
        raise ParameterError("expected 2m+1 samples per row")
    i = np.arange(K)
    end = (i + m) % K
    wrap = (i + m) >= K
    length = S[:, end] - S[:, i] + np.where(wrap, TWO_PI, 0.0)
    # ties broken uniformly at random
    keys = g.random((T, K))
    best = np.lexsort((keys, length), axis=1)[:, 0] if T == 1 else None
    if best is None:
        minlen = length.min(axis=1, keepdims=True)
        cand = np.where(length == minlen, keys, np.inf)
        best = np.argmin(cand, axis=1)
    rows = np.arange(T)
    a = S[rows, best]
    mid = a + 0.5 * length[rows, best]
    return np.mod(mid, TWO_PI)


def boosted_unbiased_pe(phi: float, M: int, m: int, rng: RngLike, size=None) -> np.ndarray | float:
    """Median-style boosting on the circle over 2m+1 infinite-precision runs."""
    if m < 1:
        raise ParameterError("m must be >= 1")
    g = as_generator(rng)
    T = 1 if size is None else int(np.prod(size))
    est = suppressed_pe(PhaseInstance(phi, M), g, size=(T, 2 * m + 1))
    out = shortest_arc_midpoint(est, m, g)
    return float(out[0]) if size is None else out.reshape(size)


def kth_neighbor_distance(S: np.ndarray, m: int) -> np.ndarray:
    """For each point, the m-th smallest circular distance to the other points in its row."""
    S = np.atleast_2d(S)
    D = circ_dist(S[:, :, None], S[:, None, :])
    K = S.shape[1]
    idx = np.arange(K)
    D[:, idx, idx] = np.inf
    return np.partition(D, m - 1, axis=2)[:, :, m - 1]


def weighted_pick(S: np.ndarray, m: int, M: int, rng: RngLike) -> np.ndarray:
    g = as_generator(rng)
    d = kth_neighbor_distance(S, m)
    logw = -(m * M / 4.0) * (d - d.min(axis=1, keepdims=True))
    w = np.exp(logw)
    cw = np.cumsum(w, axis=1)
    r = g.random(S.shape[0]) * cw[:, -1]
    pick = np.minimum((cw < r[:, None]).sum(axis=1), S.shape[1] - 1)
    return S[np.arange(S.shape[0]), pick]


def boosted_suppressed_pe(phi: float, M: int, m: int, n: float, rng: RngLike,
                          size=None) -> np.ndarray | float:
    """2m+1 finite-precision runs; return one of them with weight exp(-(mM/4) d_j)."""
    if m < 1:
        raise ParameterError("m must be >= 1")
    if n != INF and n < math.log2(math.pi * m):
        raise ParameterError(f"need n >= log2(pi m) = {math.log2(math.pi * m):.3f}")
    g = as_generator(rng)
    T = 1 if size is None else int(np.prod(size))
    est = suppressed_pe(PhaseInstance(phi, M, n), g, size=(T, 2 * m + 1))
    out = weighted_pick(est, m, M, g)
    return float(out[0]) if size is None else out.reshape(size)


def run_pe(phi, M: int, m: int, rng: RngLike, size, algorithm: int = 2, n: float = INF):
    """Dispatch: m = 0 plain shifted estimation, algorithm 2 or 3 otherwise."""
    if m == 0:
        return suppressed_pe(PhaseInstance(phi, M, n), rng, size=size)
    if algorithm == 2:
        return boosted_unbiased_pe(phi, M, m, rng, size=size)
    if algorithm == 3:
        return boosted_suppressed_pe(phi, M, m, n, rng, size=size)
    raise ParameterError("algorithm must be 2 or 3")


# --- lambda factors -------------------------------------------------------

def lambda_factor(M: int) -> float:
    """E[e^{i est}] / e^{i phi} for the unboosted estimator: 1 - 1/M."""
    _check_M(M)
    return 1.0 - 1.0 / M


def lambda_mc(M: int, m: int, samples: int, rng: RngLike, algorithm: int = 2,
              n: float = INF, chunk: int = 200_000) -> LambdaTable:
    """Monte Carlo E[Re e^{i est}] at phi = 0."""
    if samples < 10_000:
        raise ParameterError("need at least 10^4 samples")
    g = as_generator(rng)
    acc = []
    left = samples
    while left:
        k = min(chunk, left)
        acc.append(np.cos(run_pe(0.0, M, m, g, size=k, algorithm=algorithm, n=n)))
        left -= k
    x = np.concatenate(acc)
    seed = getattr(rng, "seed", None)
    return LambdaTable(M, m, float(x.mean()), samples, float(x.std(ddof=1) / math.sqrt(samples)),
                       seed, algorithm, n)


LAMBDA_CACHE_VERSION = 1
DEFAULT_LAMBDA_SAMPLES = 1_000_000
DEFAULT_LAMBDA_SEED = 7919


def _fmt_n(n) -> str:
    return "inf" if n == INF else str(int(n))


def format_lambda_record(t: LambdaTable) -> str:
    return (f"{t.M} {t.m} {t.algorithm} {_fmt_n(t.n)} {t.lam!r} {t.mc_samples} "
            f"{t.seed if t.seed is not None else -1} {t.std_err!r}")


def parse_lambda_cache(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        M, m, alg, n, lam, samples, seed, se = line.split()
        nn = INF if n == "inf" else int(n)
        out[(int(M), int(m), int(alg), nn)] = LambdaTable(
            int(M), int(m), float(lam), int(samples), float(se), int(seed), int(alg), nn)
    return out


@lru_cache(maxsize=1)
def _packaged_cache() -> dict:
    try:
        text = resources.files("qtomo").joinpath("data/lambda_cache.txt").read_text()
    except (FileNotFoundError, OSError):
        return {}
    return parse_lambda_cache(text)


@lru_cache(maxsize=None)
def _computed_lambda(M: int, m: int, algorithm: int, n: float) -> LambdaTable:
    from .qcore import RandomStream

    rs = RandomStream(DEFAULT_LAMBDA_SEED, M * 1000 + m * 10 + algorithm)
    return lambda_mc(M, m, DEFAULT_LAMBDA_SAMPLES, rs, algorithm, n)


def lambda_value(M: int, m: int = 0, algorithm: int = 2, n: float = INF) -> float:
    """lambda(M) in closed form for m = 0; otherwise cached or computed by Monte Carlo."""
    if m == 0 and n == INF:
        return lambda_factor(M)
    key = (M, m, algorithm if m else 1, n)
    t = _packaged_cache().get(key)
    if t is None:
        t = _computed_lambda(M, m, algorithm, n)
    return t.lam


# --- derived estimators ---------------------------------------------------

def unbiased_phase_exp(phi: float, M: int, m: int, rng: RngLike, size=None,
                       algorithm: int = 2, n: float = INF):
    """Unbiased estimate of e^{i phi}: e^{i est} / lambda."""
    lam = lambda_value(M, m, algorithm, n)
    est = run_pe(phi, M, m, rng, size, algorithm, n)
    return np.exp(1j * np.asarray(est)) / lam


def unbiased_prob_estimate(p: float, M: int, m: int, rng: RngLike, size=None,
                           algorithm: int = 2, n: float = INF):
    """p_hat = 1/2 - Re[e^{i est}]/(2 lambda) from the eigenphases +-2 arcsin(sqrt p)."""
    if not (0 <= p <= 1):
        raise ParameterError("p must lie in [0, 1]")
    g = as_generator(rng)
    shape = () if size is None else size
    theta = math.asin(math.sqrt(p))
    sign = np.where(g.random(shape) < 0.5, 1.0, -1.0)
    lam = lambda_value(M, m, algorithm, n)
    T = int(np.prod(shape)) if shape else 1
    # both branches share the error law, so draw errors at phase 0 and rotate
    base = np.asarray(run_pe(0.0, M, m, g, size=T, algorithm=algorithm, n=n)).reshape(shape)
    est = np.mod(base + sign * 2 * theta, TWO_PI) if algorithm == 2 or m == 0 else None
    if est is None:
        est = np.empty(T)
        flat = sign.reshape(-1)
        for s in (1.0, -1.0):
            idx = np.nonzero(flat == s)[0]
            if idx.size:
                est[idx] = run_pe(s * 2 * theta, M, m, g, size=idx.size, algorithm=3, n=n)
        est = est.reshape(shape)
    phat = 0.5 - np.cos(est) / (2 * lam)
    return float(phat) if size is None else phat


def low_depth_plan(t: int) -> tuple[int, int]:
    """(M, m) for depth budget t: M ~ t/log t (a power of two), m ~ log t."""
    if t < 2:
        raise ParameterError("t must be >= 2")
    lt = max(1.0, math.log2(t))
    M = 2 ** max(1, round(math.log2(t / lt)))
    m = max(1, int(math.floor(2 * lt)))
    return M, m


def low_depth_prob_estimate(p: float, t: int, K: int, rng: RngLike, size=None):
    """Average of K independent unbiased estimates at depth budget t."""
    if K < 1:
        raise ParameterError("K must be >= 1")
    M, m = low_depth_plan(t)
    shape = () if size is None else (size if isinstance(size, tuple) else (size,))
    x = np.asarray(unbiased_prob_estimate(p, M, m, rng, size=shape + (K,)))
    out = x.mean(axis=-1)
    return float(out) if size is None else out
