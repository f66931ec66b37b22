"""Indexed CNOT and indexed SWAP as classical reversible netlists.

Gates are CNOT, Toffoli and X.  The index is binary (bit t is the t-th least
significant bit).  Selection runs as a tournament: level t pairs up the
surviving values and keeps the odd member iff index bit t-1 is set, each
decision steered by its own copy of that bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = {"CNOT": 2, "Toffoli": 3, "X": 1}


@dataclass
class CircuitNetlist:
    """Ordered gate list over named qubit registers; the last qubit of a gate is its target."""

    n_qubits: int = 0
    registers: dict = field(default_factory=dict)
    ancillas: list = field(default_factory=list)
    gates: list = field(default_factory=list)

    def alloc(self, name: str, size: int, ancilla: bool = False) -> list:
        idx = list(range(self.n_qubits, self.n_qubits + size))
        self.n_qubits += size
        self.registers[name] = idx
        if ancilla:
            self.ancillas.extend(idx)
        return idx

    def add(self, kind: str, *qubits: int) -> None:
        if kind not in KINDS or len(qubits) != KINDS[kind]:
            raise ValueError(f"bad gate {kind}{qubits}")
        if len(set(qubits)) != len(qubits):
            raise ValueError("repeated qubit in gate")
        for q in qubits:
            if not (0 <= q < self.n_qubits):
                raise IndexError(f"qubit {q} out of range")
        self.gates.append((kind, tuple(qubits)))

    def extend_reversed(self, gates) -> None:
        # every gate here is self-inverse
        self.gates.extend(reversed(list(gates)))

    @property
    def n_ancilla(self) -> int:
        return len(self.ancillas)

    @property
    def n_data(self) -> int:
        return self.n_qubits - self.n_ancilla

    def counts(self) -> dict:
        c = {k: 0 for k in KINDS}
        for kind, _ in self.gates:
            c[kind] += 1
        return c

    def layers(self) -> list:
        """As-soon-as-possible schedule: each gate one layer after the latest gate on its qubits."""
        last = [0] * self.n_qubits
        out: list = []
        for gi, (_, qs) in enumerate(self.gates):
            lay = max(last[q] for q in qs)
            if lay == len(out):
                out.append([])
            out[lay].append(gi)
            for q in qs:
                last[q] = lay + 1
        return out

    @property
    def depth(self) -> int:
        return len(self.layers())

    def export(self) -> str:
        c = self.counts()
        head = [f"# qubits {self.n_qubits} data {self.n_data} ancilla {self.n_ancilla}",
                f"# CNOT {c['CNOT']} Toffoli {c['Toffoli']} X {c['X']} depth {self.depth}"]
        for name, idx in self.registers.items():
            head.append(f"# reg {name} {' '.join(map(str, idx))}")
        body = [f"{k} {' '.join(map(str, qs))}" for k, qs in self.gates]
        return "\n".join(head + body) + "\n"


def simulate_netlist(net: CircuitNetlist, bits) -> np.ndarray:
    """Evaluate on one basis input (length n_qubits) or a batch of shape (T, n_qubits)."""
    x = np.array(bits, dtype=bool)
    single = x.ndim == 1
    x = np.atleast_2d(x).copy()
    if x.shape[1] != net.n_qubits:
        raise ValueError(f"input has {x.shape[1]} bits, netlist has {net.n_qubits}")
    for kind, qs in net.gates:
        if kind == "X":
            x[:, qs[0]] ^= True
        elif kind == "CNOT":
            x[:, qs[1]] ^= x[:, qs[0]]
        else:
            x[:, qs[2]] ^= x[:, qs[0]] & x[:, qs[1]]
    return x[0] if single else x


# --- building blocks -------------------------------------------------------

def _log2(d: int) -> int:
    if d < 2 or d & (d - 1):
        raise ValueError("d must be a power of 2, at least 2")
    return d.bit_length() - 1


def fanout(net: CircuitNetlist, src: int, targets: list) -> list:
    """Copy src into len(targets) fresh qubits; the doubling order gives depth ceil(log2(k+1))."""
    have = [src]
    todo = list(targets)
    gates = []
    while todo:
        new = []
        for h in list(have):
            if not todo:
                break
            t = todo.pop(0)
            net.add("CNOT", h, t)
            gates.append(net.gates[-1])
            new.append(t)
        have += new
    return gates


@dataclass
class _Index:
    bits: list          # index qubits, LSB first
    parity: list        # parity[t] = the k_t qubits steering level t+1 (bits[t] first)
    fan_gates: list


def _index_parity(net: CircuitNetlist, name: str, bits: list, d: int) -> _Index:
    L = _log2(d)
    parity, gates = [], []
    for t in range(L):
        k = d >> (t + 1)
        fresh = net.alloc(f"{name}_par{t}", k - 1, ancilla=True) if k > 1 else []
        gates += fanout(net, bits[t], fresh)
        parity.append([bits[t]] + fresh)
    return _Index(bits, parity, gates)


def _select(net, p, odd, even, out):
    """out ^= odd if p else even: two Toffolis and two X."""
    g0 = len(net.gates)
    net.add("Toffoli", p, odd, out)
    net.add("X", p)
    net.add("Toffoli", p, even, out)
    net.add("X", p)
    return net.gates[g0:]


def _route(net, p, v, odd, even):
    """odd ^= v if p, even ^= v if not p."""
    g0 = len(net.gates)
    net.add("Toffoli", p, v, odd)
    net.add("X", p)
    net.add("Toffoli", p, v, even)
    net.add("X", p)
    return net.gates[g0:]


def _icnot_out_core(net, idx: _Index, data: list, target: int, work: list) -> None:
    """target ^= data[i]; intermediate values go to ``work`` (d-2 qubits) and are cleared."""
    d = len(data)
    L = len(idx.parity)
    vals = list(data)
    pos = 0
    compute = []
    for t in range(L):
        k = len(vals) // 2
        if t == L - 1:
            outs = [target]
        else:
            outs = work[pos:pos + k]
            pos += k
        level = []
        for j in range(k):
            level += _select(net, idx.parity[t][j], vals[2 * j + 1], vals[2 * j], outs[j])
        if t < L - 1:
            compute += level
        vals = outs
    assert pos == d - 2
    net.extend_reversed(compute)


def _icnot_in_core(net, idx: _Index, data: list, source: int, work: list) -> None:
    """data[i] ^= source, routing the source down the same tree."""
    L = len(idx.parity)
    # level nodes from the top: level L has one node (the source), level 1 nodes are data pairs
    nodes = {L: [source]}
    pos = 0
    for t in range(L - 1, 0, -1):
        k = len(nodes[t + 1]) * 2
        nodes[t] = work[pos:pos + k]
        pos += k
    compute = []
    for t in range(L, 0, -1):
        children = data if t == 1 else nodes[t - 1]
        level = []
        for j, v in enumerate(nodes[t]):
            level += _route(net, idx.parity[t - 1][j], v, children[2 * j + 1], children[2 * j])
        if t > 1:
            compute += level
    net.extend_reversed(compute)


def _finish_fanout(net: CircuitNetlist, *indices: _Index) -> None:
    for ix in indices:
        net.extend_reversed(ix.fan_gates)


def build_indexed_cnot(d: int, direction: str = "out") -> CircuitNetlist:
    """iCNOTo (b ^= q_i) or iCNOTi (q_i ^= b) on registers i, b, q."""
    if direction not in ("out", "in"):
        raise ValueError("direction must be 'out' or 'in'")
    L = _log2(d)
    net = CircuitNetlist()
    i = net.alloc("i", L)
    b = net.alloc("b", 1)[0]
    q = net.alloc("q", d)
    idx = _index_parity(net, "i", i, d)
    work = net.alloc("work", d - 2, ancilla=True)
    if direction == "out":
        _icnot_out_core(net, idx, q, b, work)
    else:
        _icnot_in_core(net, idx, q, b, work)
    _finish_fanout(net, idx)
    return net


def build_indexed_swap(d: int, kind: str = "single") -> CircuitNetlist:
    """iSWAP (b <-> q_i) or iiSWAP (q_i <-> q_j), each as three XOR passes sharing the fanouts.

    The double kind moves q_i through a scratch bit and is only a swap for i != j;
    with i == j the XOR trick zeroes the qubit.
    """
    L = _log2(d)
    net = CircuitNetlist()
    if kind == "single":
        i = net.alloc("i", L)
        b = net.alloc("b", 1)[0]
        q = net.alloc("q", d)
        idx = _index_parity(net, "i", i, d)
        work = net.alloc("work", d - 2, ancilla=True)
        _icnot_out_core(net, idx, q, b, work)
        _icnot_in_core(net, idx, q, b, work)
        _icnot_out_core(net, idx, q, b, work)
        _finish_fanout(net, idx)
    elif kind == "double":
        i = net.alloc("i", L)
        j = net.alloc("j", L)
        q = net.alloc("q", d)
        ii = _index_parity(net, "i", i, d)
        jj = _index_parity(net, "j", j, d)
        work = net.alloc("work", d - 2, ancilla=True)
        s = net.alloc("scratch", 1, ancilla=True)[0]

        def dicnot(src: _Index, dst: _Index):
            # q_dst ^= q_src via the scratch bit
            _icnot_out_core(net, src, q, s, work)
            _icnot_in_core(net, dst, q, s, work)
            _icnot_out_core(net, src, q, s, work)

        dicnot(ii, jj)
        dicnot(jj, ii)
        dicnot(ii, jj)
        _finish_fanout(net, ii, jj)
    else:
        raise ValueError("kind must be 'single' or 'double'")
    return net


# --- reference counts ------------------------------------------------------

def lemma_counts(d: int, which: str) -> dict:
    """Counts as stated for the constructions (CNOT, Toffoli+X combined, depth bound, ancillas)."""
    L = _log2(d)
    table = {
        "icnot": dict(CNOT=2 * d - 2 - 2 * L, TX=4 * d - 4, depth=10 * L, ancilla=2 * d - 3),
        "iswap": dict(CNOT=2 * d - 2 - 2 * L, TX=12 * d - 12, depth=26 * L, ancilla=2 * d - 3),
        "iiswap": dict(CNOT=4 * d - 4 - 4 * L, TX=36 * d - 36, depth=74 * L, ancilla=4 * d - 5),
    }
    return table[which]


def construction_counts(d: int, which: str) -> dict:
    """Exact counts of the netlists built here.

    One selection pass costs 2 Toffoli + 2 X per decision: d-1 decisions forward
    and d-2 to clear the work qubits for the out direction, d-1 and d/2-1 for in.
    """
    L = _log2(d)
    fan = 2 * (d - 1 - L)
    out_t = 2 * (d - 1) + 2 * (d - 2)
    in_t = 2 * (d - 1) + 2 * (d // 2 - 1)
    if which == "icnot_out":
        t, c, anc = out_t, fan, (d - 1 - L) + (d - 2)
    elif which == "icnot_in":
        t, c, anc = in_t, fan, (d - 1 - L) + (d - 2)
    elif which == "iswap":
        t, c, anc = 2 * out_t + in_t, fan, (d - 1 - L) + (d - 2)
    elif which == "iiswap":
        t, c, anc = 3 * (2 * out_t + in_t), 2 * fan, 2 * (d - 1 - L) + (d - 2) + 1
    else:
        raise ValueError(which)
    return dict(CNOT=c, Toffoli=t, X=t, TX=2 * t, ancilla=anc)


# --- semantic checks -------------------------------------------------------

def _encode(net: CircuitNetlist, values: dict, T: int) -> np.ndarray:
    x = np.zeros((T, net.n_qubits), dtype=bool)
    for name, v in values.items():
        reg = net.registers[name]
        v = np.asarray(v)
        if v.ndim == 1 and len(reg) > 1 and name in ("i", "j"):
            v = (v[:, None] >> np.arange(len(reg))[None, :]) & 1
        x[:, reg] = np.asarray(v, dtype=bool).reshape(T, len(reg))
    return x


def structured_inputs(d: int, kind: str, rng: np.random.Generator, random_q: int = 1000) -> dict:
    """Structured input set: every index (pair) with one random q, every one-hot q, random q.

    For d <= 4 all q patterns are enumerated.
    """
    L = _log2(d)
    rows = []
    n_idx = d * d if kind == "iiswap" else d
    if d <= 4:
        qs = [((np.arange(1 << d)[:, None] >> np.arange(d)) & 1)]
    else:
        qs = [rng.integers(0, 2, size=(1, d)), np.eye(d, dtype=int), rng.integers(0, 2, size=(random_q, d))]
    Q = np.concatenate(qs)
    for q in Q:
        for ij in range(n_idx):
            for b in ((0, 1) if kind != "iiswap" else (0,)):
                rows.append((ij, b, q))
    idx = np.array([r[0] for r in rows])
    bs = np.array([r[1] for r in rows])
    qq = np.stack([r[2] for r in rows])
    return dict(idx=idx, b=bs, q=qq, L=L)


def check_semantics(net: CircuitNetlist, d: int, kind: str, rng: np.random.Generator,
                    random_q: int = 1000) -> dict:
    """Compare against the defining map; report mismatches and dirty ancillas."""
    inp = structured_inputs(d, kind, rng, random_q)
    T = inp["idx"].size
    q = inp["q"].astype(bool)
    if kind == "iiswap":
        i, j = inp["idx"] // d, inp["idx"] % d
        keep = i != j
        i, j, q = i[keep], j[keep], q[keep]
        T = i.size
        x = _encode(net, dict(i=i, j=j, q=q), T)
        y = simulate_netlist(net, x)
        exp = q.copy()
        exp[np.arange(T), i], exp[np.arange(T), j] = q[np.arange(T), j], q[np.arange(T), i]
        got = y[:, net.registers["q"]]
        ok = (got == exp).all(axis=1)
    else:
        i, b = inp["idx"], inp["b"].astype(bool)
        x = _encode(net, dict(i=i, b=b, q=q), T)
        y = simulate_netlist(net, x)
        gb = y[:, net.registers["b"][0]]
        gq = y[:, net.registers["q"]]
        qi = q[np.arange(T), i]
        if kind == "icnot_out":
            ok = (gb == (b ^ qi)) & (gq == q).all(axis=1)
        elif kind == "icnot_in":
            exp = q.copy()
            exp[np.arange(T), i] ^= b
            ok = (gb == b) & (gq == exp).all(axis=1)
        else:
            exp = q.copy()
            exp[np.arange(T), i] = b
            ok = (gb == qi) & (gq == exp).all(axis=1)
    idx_regs = [r for n in ("i", "j") if n in net.registers for r in net.registers[n]]
    ok &= (y[:, idx_regs] == x[:, idx_regs]).all(axis=1)
    clean = ~y[:, net.ancillas].any(axis=1) if net.ancillas else np.ones(T, bool)
    distinct = len({row.tobytes() for row in np.packbits(y, axis=1)})
    return dict(tested=T, wrong=int((~ok).sum()), dirty_ancilla=int((~clean).sum()),
                injective=distinct == len({row.tobytes() for row in np.packbits(x, axis=1)}))


def statevector_check(net: CircuitNetlist, rng: np.random.Generator, n_inputs: int = 4) -> float:
    """Apply the netlist as permutation matrices on a random superposition of basis inputs.

    Returns the largest amplitude mismatch against mapping each basis input classically.
    """
    n = net.n_qubits
    data = [k for k in range(n) if k not in net.ancillas]
    basis = rng.integers(0, 2, size=(n_inputs, n)).astype(bool)
    basis[:, net.ancillas] = False
    amps = rng.normal(size=n_inputs) + 1j * rng.normal(size=n_inputs)
    amps /= np.linalg.norm(amps)
    state = {tuple(b): a for b, a in zip(basis, amps)}
    for kind, qs in net.gates:
        new = {}
        for key, a in state.items():
            k = list(key)
            if kind == "X" or (kind == "CNOT" and k[qs[0]]) or (kind == "Toffoli" and k[qs[0]] and k[qs[1]]):
                k[qs[-1]] = not k[qs[-1]]
            new[tuple(k)] = new.get(tuple(k), 0) + a
        state = new
    out = simulate_netlist(net, basis)
    err = 0.0
    for b, a in zip(out, amps):
        err = max(err, abs(state.get(tuple(b), 0) - a))
    return err if data else 0.0
