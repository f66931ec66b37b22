import math

import numpy as np
import pytest

from qtomo.norms import linf_precision_for_lq
from qtomo.qcore import Ket, RandomStream, random_ket
from qtomo.tomo_pure import (
    amp_encode, align_global_phase, classical_linf_tomo, cond_sample_tomo, copies_only_tomo,
    error_achieved, hadamard_pair_est, lq_wrap, pe_complex_tomo, pe_real_tomo, shots_for,
    sparse_tomo,
)


def _fail_rate(fn, runs, seed):
    errs = []
    for t in range(runs):
        errs.append(fn(RandomStream(seed, t)))
    return np.array(errs)


def test_shots_formula():
    assert shots_for(0.1, 0.01, 100) == math.ceil(8 * math.log(20000) / 0.01) == 7923


def test_classical_basis_state(rs):
    r = classical_linf_tomo(Ket.basis(0, 5), 5, 0.1, 0.1, rs)
    assert np.array_equal(r.estimate, np.eye(5)[0])


def test_classical_uniform(rs):
    psi = Ket(np.ones(4) / 2)
    bad = sum(error_achieved(classical_linf_tomo(psi, 4, 0.05, 0.01, rs.child(t)), psi) > 0.05
              for t in range(1000))
    assert bad <= 10


def test_lq_wrap_inf_is_identity(rs):
    psi = random_ket(8, rs)
    a = lq_wrap(lambda e: classical_linf_tomo(psi, 8, e, 0.1, RandomStream(1, 1)), np.inf, 0.1, 8)
    b = classical_linf_tomo(psi, 8, 0.1, 0.1, RandomStream(1, 1))
    assert np.array_equal(a.estimate, b.estimate) and a.samples == b.samples


def test_lq_wrap_q2_ledger():
    d, eps, delta = 16, 0.2, 0.1
    assert linf_precision_for_lq(eps, 2, 2, d) == pytest.approx(eps / 4)
    psi = Ket(np.ones(d) / 4)
    r = lq_wrap(lambda e: classical_linf_tomo(psi, d, e, delta, RandomStream(2, 0)), 2, eps, d)
    ref = 8 * math.log(2 * d / delta) * d / eps ** 2
    assert 0.5 <= r.samples / ref <= 2


def test_lq_wrap_end_to_end(rs):
    d, eps = 16, 0.2
    errs = []
    for t in range(100):
        psi = random_ket(d, rs.child(1000 + t))
        psi = Ket(np.abs(psi.amps))
        r = lq_wrap(lambda e: classical_linf_tomo(psi, d, e, 0.01, rs.child(t)), 2, eps, d)
        errs.append(error_achieved(r, psi))
    assert max(errs) <= eps


def test_hadamard_pair_examples(rs):
    e0 = np.eye(3)[0]
    plus, minus, _ = hadamard_pair_est(e0, e0, 0.05, 0.01, rs)
    assert plus[0] == pytest.approx(2) and np.all(minus == 0)
    plus, minus, _ = hadamard_pair_est(e0, -e0, 0.05, 0.01, rs)
    assert np.all(plus == 0) and minus[0] == pytest.approx(2)
    with pytest.raises(ValueError):
        hadamard_pair_est(e0, 2 * e0, 0.1, 0.1, rs)


def test_hadamard_pair_random(rs):
    eps = 0.05
    ok = 0
    for t in range(100):
        g = rs.child(t)
        a, b = random_ket(8, g).amps, random_ket(8, g).amps
        p, m, _ = hadamard_pair_est(a, b, eps, 0.01, g)
        ok += max(np.abs(p - np.abs(a + b)).max(), np.abs(m - np.abs(a - b)).max()) <= eps
    assert ok >= 99


def test_cond_sample_real_positive(rs):
    psi = Ket(np.abs(random_ket(8, rs).amps))
    r = cond_sample_tomo(psi, 8, 0.05, 0.05, rs)
    assert np.abs(r.estimate.imag).max() <= 0.05
    assert np.abs(r.estimate - psi.amps).max() <= 0.05


def test_cond_sample_imaginary_unit(rs):
    # r = 1, z = |i - 1| = sqrt 2 gives a = 0; w = |i - i| = 0 gives b = 1
    r, z, w = 1.0, math.sqrt(2), 0.0
    assert 0.5 * r + 0.5 * r ** 2 / r - z ** 2 / (2 * r) == pytest.approx(0)
    assert 0.5 * r + 0.5 * r ** 2 / r - w ** 2 / (2 * r) == pytest.approx(1)
    est = cond_sample_tomo(Ket(np.array([1j, 0])), 2, 0.02, 0.05, rs).estimate
    assert abs(est[0] - 1j) <= 0.02 and est[1] == 0


def test_cond_sample_random(rs):
    d, eps, delta = 16, 0.1, 0.05
    fails = 0
    for t in range(400):
        g = rs.child(t)
        psi = random_ket(d, g)
        r = cond_sample_tomo(psi, d, eps, delta, g)
        fails += error_achieved(r, psi) > eps
    assert fails <= 20
    ref = 32 ** 2 * 8 * math.log(2 * d / delta) / eps ** 2
    assert 1 / 4 <= r.samples / ref <= 4


def test_cond_sample_gradient_box(gen):
    # a(r~, r, z) = r~/2 + r^2/(2 r~) - z^2/(2 r~) on the box used in the error analysis
    eps = 0.1
    worst = np.zeros(4)
    for _ in range(10 ** 4):
        rt = gen.uniform(eps / 2, 1)
        r = max(rt + gen.uniform(-eps / 32, eps / 32), 0)
        z = gen.uniform(abs(r - rt), r + rt)
        da_drt = 0.5 - r ** 2 / (2 * rt ** 2) + z ** 2 / (2 * rt ** 2)
        da_dr = r / rt
        da_dz = -z / rt
        g = np.abs([da_drt, da_dr, da_dz])
        worst = np.maximum(worst, np.append(g, g.sum()))
    assert worst[1] <= 2 and worst[2] <= 4 and worst[3] <= 8


def test_copies_basis_state(rs):
    r = copies_only_tomo(Ket.basis(5, 8), 8, 0.1, 0.1, rs)
    assert align_global_phase(r.estimate, np.eye(8)[5])[0] <= 1e-12


def test_copies_phase_ladder(rs):
    psi = Ket(np.array([1, 1j, -1, -1j]) / 2)
    r = copies_only_tomo(psi, 4, 0.1, 0.1, rs)
    assert error_achieved(r, psi) <= 0.1
    # one coordinate (the largest estimated magnitude) anchors the phase
    anchors = [z for z in r.estimate if z.imag == 0 and z.real > 0]
    assert len(anchors) >= 1


def test_copies_random(rs):
    d, eps = 8, 0.15
    errs = []
    for t in range(200):
        g = rs.child(t)
        psi = random_ket(d, g)
        errs.append(error_achieved(copies_only_tomo(psi, d, eps, 0.1, g), psi))
    assert np.mean(np.array(errs) <= eps) >= 0.9


def test_copies_sample_scaling(rs):
    delta, eps = 0.1, 0.2
    ratios = []
    for d in (4, 8, 16, 32):
        psi = Ket(np.ones(d) / math.sqrt(d))
        r = copies_only_tomo(psi, d, eps, delta, rs)
        ratios.append(r.samples / (math.log2(d) * math.log(d / delta) / eps ** 2))
    assert max(ratios) / min(ratios) <= 4


def test_amp_encode_examples(gen):
    e = amp_encode(np.zeros(4), 0.01)
    assert np.allclose(e.state.amps[0::2], 0) and np.allclose(e.state.amps[1::2], 0.5)
    e = amp_encode(np.ones(4), 0.01)
    # arcsin(1) is not dyadic, so the flag-1 branch vanishes only to within eps
    assert np.allclose(e.state.amps[0::2], 0.5, atol=0.01) and np.allclose(e.state.amps[1::2], 0, atol=0.01)
    x = gen.uniform(-1, 1, 16)
    eps = 2.0 ** -10
    e = amp_encode(x, eps)
    assert np.all(np.abs(e.x_tilde - x) <= eps)
    assert np.allclose(e.state.amps[0::2], e.x_tilde / 4)
    with pytest.raises(ValueError):
        amp_encode([1.5], 0.1)
    e = amp_encode(np.array([0.5, -0.25]), 0.01, b=2)
    assert e.index_swaps == 2 * 2


def test_pe_real_basis(rs):
    r = pe_real_tomo(Ket.basis(0, 8), 8, 0.1, 0.1, rs)
    assert np.abs(r.estimate - np.eye(8)[0]).max() <= 0.1


def test_pe_real_random_real_d4(rs):
    d, eps = 4, 0.1
    ok = 0
    for t in range(100):
        g = rs.child(t)
        psi = random_ket(d, g, real=True)
        r = pe_real_tomo(psi, d, eps, 0.1, g)
        ok += np.abs(r.estimate - psi.amps.real).max() <= eps
    assert ok >= 90


def test_pe_real_full_register_path(rs):
    d, eps = 2, 0.3
    ok = 0
    for t in range(10):
        g = rs.child(t)
        psi = random_ket(d, g, real=True)
        r = pe_real_tomo(psi, d, eps, 0.1, g, full_path=True)
        ok += np.abs(r.estimate - psi.amps.real).max() <= eps
    assert ok >= 9


def test_pe_real_ledger_shape(rs):
    delta = 0.1
    ratios = []
    for d in (4, 16, 64):
        for eps in (0.1, 0.05):
            r = pe_real_tomo(random_ket(d, rs, real=True), d, eps, delta, rs, restrict=False)
            ratios.append(r.ledger.queries_U / (math.sqrt(d) / eps * math.log(d / delta)))
    assert max(ratios) / min(ratios) <= 4


def test_pe_complex(rs):
    psi = random_ket(8, rs)
    r = pe_complex_tomo(psi, 8, 0.1, 0.1, rs)
    assert error_achieved(r, psi) <= 0.1


def test_sparse_examples(rs):
    d, s, eps = 256, 4, 0.1
    v = np.zeros(d)
    v[[3, 50, 77, 200]] = 0.5
    psi = Ket(v)
    r = sparse_tomo(psi, d, s, eps, 0.1, rs)
    assert set(np.nonzero(r.estimate)[0]) == {3, 50, 77, 200}
    assert np.abs(r.estimate - v).max() <= eps
    dense = pe_complex_tomo(psi, d, eps, 0.1, rs, restrict=False)
    ratio = r.ledger.total_queries / dense.ledger.total_queries
    assert ratio <= 4 * math.sqrt(s / d)
    r1 = sparse_tomo(Ket.basis(9, 64), 64, 1, eps, 0.1, rs)
    assert set(np.nonzero(r1.estimate)[0]) == {9}


def test_sparse_output_budget(rs):
    d, s, eps, delta = 128, 4, 0.1, 0.1
    P = eps ** 2 * s
    sizes = []
    for t in range(100):
        g = rs.child(t)
        v = np.zeros(d, dtype=complex)
        # tail kept just under the per-entry threshold eps sqrt(s/d)
        v[:s] = math.sqrt((1 - 0.9 * P) / s)
        v[s:] = math.sqrt(0.9 * P / (d - s)) * np.exp(2j * np.pi * g.generator.random(d - s))
        r = sparse_tomo(Ket(v), d, s, eps, delta, g, P=P)
        sizes.append(np.count_nonzero(r.estimate))
        assert not r.flags
    budget = (s + P / eps ** 2) * math.log2(s) * math.log(1 / delta)
    assert max(sizes) <= 6 * budget


def test_sparse_flags_violation(rs):
    d = 64
    psi = Ket(np.ones(d) / 8)
    r = sparse_tomo(psi, d, 1, 0.1, 0.1, rs)
    assert r.flags


@pytest.mark.parametrize("model", ["classical", "conditional", "copies", "unitary"])
def test_guarantee_every_model(model):
    d, eps, delta = 8, 0.2, 0.1
    fails = 0
    runs = 100
    for t in range(runs):
        g = RandomStream(404, t)
        psi = random_ket(d, g, real=(model == "classical"))
        if model == "classical":
            psi = Ket(np.abs(psi.amps))
            r = classical_linf_tomo(psi, d, eps, delta, g)
        elif model == "conditional":
            r = cond_sample_tomo(psi, d, eps, delta, g)
        elif model == "copies":
            r = copies_only_tomo(psi, d, eps, delta, g)
        else:
            r = pe_complex_tomo(psi, d, eps, delta, g)
        fails += error_achieved(r, psi) > eps
    assert fails / runs <= delta + 3 * math.sqrt(delta / runs)


def test_ledger_monotone(rs):
    psi_for = lambda d: Ket(np.ones(d) / math.sqrt(d))
    for fn in (classical_linf_tomo, cond_sample_tomo, copies_only_tomo):
        grid = [[fn(psi_for(d), d, eps, 0.1, rs).samples for eps in (0.2, 0.1, 0.05)] for d in (4, 8, 16)]
        grid = np.array(grid)
        assert np.all(np.diff(grid, axis=0) >= 0) and np.all(np.diff(grid, axis=1) >= 0)
    q = np.array([[pe_complex_tomo(psi_for(d), d, eps, 0.1, rs, restrict=False).ledger.total_queries
                   for eps in (0.2, 0.1, 0.05)] for d in (4, 8, 16)])
    assert np.all(np.diff(q, axis=0) >= 0) and np.all(np.diff(q, axis=1) >= 0)


def test_record_fields(rs):
    psi = random_ket(4, rs)
    rec = cond_sample_tomo(psi, 4, 0.2, 0.1, rs).to_record(psi, seed=7)
    assert set(rec) == {"model", "d", "eps", "delta", "q", "error_achieved", "queries", "samples", "seed"}
