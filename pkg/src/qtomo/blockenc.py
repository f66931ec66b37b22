"""Block-encodings as explicit matrices, with a ledger charging the stated query costs.

All implementation constants in the cost formulas are fixed at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import sqrtm

from .qcore import HERM_TOL, DimensionError, RngLike, as_generator

NORM_TOL = 1e-8


@dataclass(frozen=True)
class CostLedger:
    queries_U: int = 0
    queries_U_dagger: int = 0
    extra_gates: int = 0
    depth: int = 0
    notes: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for k in ("queries_U", "queries_U_dagger", "extra_gates", "depth"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be nonnegative")

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(
            self.queries_U + other.queries_U,
            self.queries_U_dagger + other.queries_U_dagger,
            self.extra_gates + other.extra_gates,
            self.depth + other.depth,
            self.notes + other.notes,
        )

    def times(self, k: int) -> "CostLedger":
        return CostLedger(self.queries_U * k, self.queries_U_dagger * k,
                          self.extra_gates * k, self.depth * k, self.notes)

    @property
    def total_queries(self) -> int:
        return self.queries_U + self.queries_U_dagger


@dataclass(frozen=True)
class BlockEncoding:
    block: np.ndarray
    ancillas: int
    ledger: CostLedger = CostLedger()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.block, dtype=complex))
        if A.shape[0] != A.shape[1]:
            raise DimensionError("block must be square")
        if self.ancillas < 0:
            raise ValueError("ancillas must be nonnegative")
        nrm = np.linalg.norm(A, 2)
        if nrm > 1 + NORM_TOL:
            raise ValueError(f"block norm {nrm} exceeds 1")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "block", A)

    @property
    def dim(self) -> int:
        return self.block.shape[0]

    def dilation(self) -> np.ndarray:
        """A unitary with the block in its top-left corner (one extra qubit)."""
        return unitary_dilation(self.block)


def _unit_cost(led: CostLedger) -> CostLedger:
    # a block with an empty ledger is itself the base oracle: one use costs one query
    return led if led.total_queries > 0 else CostLedger(1, 0, led.extra_gates, led.depth)


def _mirror(led: CostLedger) -> CostLedger:
    return CostLedger(led.queries_U_dagger, led.queries_U, led.extra_gates, led.depth, led.notes)


def unitary_dilation(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    d = A.shape[0]
    I = np.eye(d)
    top_r = sqrtm(I - A @ A.conj().T)
    bot_l = sqrtm(I - A.conj().T @ A)
    return np.block([[A, top_r], [bot_l, -A.conj().T]])


def _is_unitary(U: np.ndarray, tol: float = 1e-10) -> bool:
    return np.allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=tol)


def povm_dilation(E: np.ndarray) -> np.ndarray:
    """One-ancilla unitary whose outcome-0 POVM element is E (ancilla is the leading qubit)."""
    E = np.asarray(E, dtype=complex)
    w, V = np.linalg.eigh(0.5 * (E + E.conj().T))
    if w.min() < -HERM_TOL or w.max() > 1 + HERM_TOL:
        raise ValueError("POVM element must satisfy 0 <= E <= I")
    w = np.clip(w, 0, 1)
    s = (V * np.sqrt(w)) @ V.conj().T
    c = (V * np.sqrt(1 - w)) @ V.conj().T
    return np.block([[s, -c], [c, s]])


def from_povm(povm_unitary: np.ndarray, a: int) -> BlockEncoding:
    """Block-encoding of E from a unitary U on (a ancillas) x system.

    E is the outcome-0 element of measuring the leading ancilla qubit after U
    acts on |0^a>|psi>.  The circuit is U, then a CNOT copying that qubit onto a
    fresh flag, then U^dagger.
    """
    U = np.asarray(povm_unitary, dtype=complex)
    D = U.shape[0]
    if U.shape != (D, D) or not _is_unitary(U):
        raise ValueError("povm_unitary must be unitary")
    if a < 1 or D % (1 << a):
        raise DimensionError("dimension is not 2^a times the system dimension")
    d = D >> a
    half = D // 2
    # flag is the leading qubit of the enlarged register
    Ubig = np.kron(np.eye(2), U)
    # flip the flag when the outcome qubit reads 1
    idx = np.arange(2 * D)
    flag, rest = idx // D, idx % D
    out = (flag ^ (rest >= half).astype(int)) * D + rest
    cnot = np.eye(2 * D, dtype=complex)[:, out]
    W = Ubig.conj().T @ cnot @ Ubig
    block = W[:d, :d]
    block = 0.5 * (block + block.conj().T)
    return BlockEncoding(block, a + 1, CostLedger(1, 1, 1, 3))


def lcu_combine(y, blocks: list[BlockEncoding], beta: float) -> BlockEncoding:
    """Block-encoding of sum_j y_j A_j / beta.

    Signs of y are absorbed into the selected unitaries, so real weights of either
    sign are accepted; the condition is beta >= ||y||_1.
    """
    y = np.asarray(y, dtype=float).ravel()
    m = y.size
    if m != len(blocks) or m == 0:
        raise DimensionError("need one weight per block")
    l1 = float(np.abs(y).sum())
    if beta < l1 * (1 - 1e-12):
        raise ValueError(f"beta={beta} is below ||y||_1={l1}")
    dim = blocks[0].dim
    if any(b.dim != dim for b in blocks):
        raise DimensionError("blocks must share a dimension")
    a = max(b.ancillas for b in blocks)
    A = sum(w * b.block for w, b in zip(y, blocks)) / beta
    led = CostLedger(0, 0, 2, 3)
    for b in blocks:
        led = led + b.ledger
    return BlockEncoding(A, a + math.ceil(math.log2(m)) + 1, led)


def amplify(be: BlockEncoding, beta: float, eps: float) -> BlockEncoding:
    """Block-encoding of A/(2 beta); charges ceil(nu ln(max(nu/eps, 2))) uses, nu = 1/(2 beta)."""
    if not (0 < beta <= 1):
        raise ValueError("beta must lie in (0, 1]")
    if eps <= 0:
        raise ValueError("eps must be positive")
    nA = np.linalg.norm(be.block, 2)
    if nA > beta * (1 + 1e-9):
        raise ValueError(f"beta={beta} is below ||A||={nA}")
    nu = 1.0 / (2 * beta)
    k = math.ceil(nu * math.log(max(nu / eps, 2.0)))
    led = _unit_cost(be.ledger).times(k) + CostLedger(0, 0, k * (be.ancillas + 1), k)
    return BlockEncoding(be.block / (2 * beta), be.ancillas + 1, led)


def random_unit_hermitian(d: int, rng: RngLike) -> np.ndarray:
    """Random Hermitian H with all eigenvalues +-1 (so e^{i theta H} - I has norm 2 sin(theta/2))."""
    g = as_generator(rng)
    G = g.standard_normal((d, d)) + 1j * g.standard_normal((d, d))
    Q, _ = np.linalg.qr(G)
    signs = g.choice([-1.0, 1.0], size=d)
    signs[0] = 1.0
    return (Q * signs) @ Q.conj().T


def ham_sim(be: BlockEncoding, t: float, eps: float, inject: bool = False,
            rng: RngLike | None = None) -> BlockEncoding:
    """e^{itA} by eigendecomposition; optionally multiplied by an error unitary at distance exactly eps."""
    A = be.block
    if np.max(np.abs(A - A.conj().T)) > HERM_TOL:
        raise ValueError("block must be Hermitian")
    if eps <= 0:
        raise ValueError("eps must be positive")
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    U = (V * np.exp(1j * t * w)) @ V.conj().T
    if inject:
        if rng is None:
            raise ValueError("error injection needs a random stream")
        if eps > 2:
            raise ValueError("injected error cannot exceed 2")
        H = random_unit_hermitian(be.dim, rng)
        theta = 2 * math.asin(eps / 2)
        w2, V2 = np.linalg.eigh(H)
        U = U @ ((V2 * np.exp(1j * theta * w2)) @ V2.conj().T)
    k = math.ceil(abs(t) + math.log(1.0 / eps)) if eps < 1 else math.ceil(abs(t))
    k = max(k, 1)
    unit = _unit_cost(be.ledger)
    led = unit.times(k) + _mirror(unit).times(k) + CostLedger(0, 0, k * (be.ancillas + 2), k)
    return BlockEncoding(U, be.ancillas + 2, led)


def inner_product_diag(psi_family, phi_family, ancillas: int | None = None) -> BlockEncoding:
    """Block-encoding of diag(<phi_x|psi_x>) from two controlled state-preparation families.

    Families are arrays with one (possibly subnormalized) state per row.
    """
    P = np.atleast_2d(np.asarray(psi_family, dtype=complex))
    Q = np.atleast_2d(np.asarray(phi_family, dtype=complex))
    if P.shape != Q.shape:
        raise DimensionError("families must have the same shape")
    if np.any(np.linalg.norm(P, axis=1) > 1 + NORM_TOL) or np.any(np.linalg.norm(Q, axis=1) > 1 + NORM_TOL):
        raise ValueError("family states must have norm <= 1")
    a = ancillas if ancillas is not None else max(1, math.ceil(math.log2(P.shape[1])))
    diag = np.einsum("xi,xi->x", Q.conj(), P)
    return BlockEncoding(np.diag(diag), a + 2, CostLedger(1, 1, 1, 3))


def hermitian_part(be: BlockEncoding) -> BlockEncoding:
    """(W + W^dagger)/2 via a two-term combination."""
    dag = BlockEncoding(be.block.conj().T, be.ancillas, _mirror(be.ledger))
    return lcu_combine([0.5, 0.5], [be, dag], 1.0)


def with_ledger(be: BlockEncoding, ledger: CostLedger) -> BlockEncoding:
    return replace(be, ledger=ledger)
