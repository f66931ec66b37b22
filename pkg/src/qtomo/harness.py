"""Command-line experiment runner.

Configs are INI files::

    [experiment]
    name = pure_tomo_scaling
    seed = 11
    trials = 20
    output = out.csv
    format = csv

    [grid]
    model = conditional
    d = 16
    eps = 0.2, 0.1, 0.05

Grid points are the Cartesian product of the [grid] lists in sorted key order;
point k draws from RandomStream(seed, k) and trial t from its child t.  Rows are
sorted by (point, trial) before writing, so output is byte-identical across
reruns and worker counts.  Wall times go to a separate ``.timing.csv`` file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import expval, gradest, hardness, phaseest, qram, tomo_mixed, tomo_pure
from .norms import linf_precision_for_lq
from .qcore import RandomStream, grid_values, norm, random_density, random_ket


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    grid: dict
    seed: int = 0
    trials: int = 1
    output: str | None = None
    format: str = "csv"
    workers: int = 1

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ConfigError("grid must be nonempty")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.trials < 1 or self.seed < 0:
            raise ConfigError("trials must be >= 1 and seed >= 0")
        exp = EXPERIMENTS[self.name]
        missing = set(exp.required) - set(self.grid)
        if missing:
            raise ConfigError(f"{self.name} needs grid keys {sorted(missing)}")
        for p in self.points():
            exp.validate(p)

    def points(self) -> list[dict]:
        keys = sorted(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]


def _parse_value(s: str):
    s = s.strip()
    if s.lower() in ("inf", "infinity"):
        return math.inf
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def load_config(path_or_text: str, is_text: bool = False) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # grid keys are case sensitive (M and m differ)
    if is_text:
        cp.read_string(path_or_text)
    else:
        if not Path(path_or_text).exists():
            raise ConfigError(f"no such config {path_or_text}")
        cp.read(path_or_text)
    if "experiment" not in cp or "grid" not in cp:
        raise ConfigError("config needs [experiment] and [grid] sections")
    e = cp["experiment"]
    grid = {k: [_parse_value(v) for v in val.split(",") if v.strip()] for k, val in cp["grid"].items()}
    return ExperimentConfig(name=e.get("name", ""), grid=grid, seed=e.getint("seed", 0),
                            trials=e.getint("trials", 1), output=e.get("output"),
                            format=e.get("format", "csv"), workers=e.getint("workers", 1))


# --- experiments -----------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    fn: Callable            # (params, trials, RandomStream) -> list of result dicts
    required: tuple
    columns: tuple
    check: Callable | None = None
    doc: str = ""
    per_trial: bool = True

    def validate(self, p: dict) -> None:
        if self.check is not None:
            msg = self.check(p)
            if msg:
                raise ConfigError(f"invalid grid point {p}: {msg}")


def _pow2(x) -> bool:
    return isinstance(x, int) and x >= 1 and x & (x - 1) == 0


def _exp_grid_labels(p, trials, rs):
    return [dict(trial=k, label=float(v)) for k, v in enumerate(grid_values(p["n"]))]


def _exp_pe_concentration(p, trials, rs):
    M = p["M"]
    err = phaseest.circ_dist(phaseest.run_pe(p.get("phi", 1.0), M, 0, rs, size=trials), p.get("phi", 1.0))
    out = dict(trial=0)
    for k in (1, 2, 3):
        out[f"frac_le_{k}_over_M"] = float(np.mean(err <= k / M))
    out["samples"] = trials
    return [out]


def _exp_pe_bias(p, trials, rs):
    phi = p.get("phi", 1.0)
    alg = p.get("algorithm", 3)
    est = phaseest.run_pe(phi, p["M"], p["m"], rs, size=trials, algorithm=alg, n=p.get("n", math.inf))
    e = phaseest.signed_err(est, phi)
    return [dict(trial=0, bias=float(e.mean()), stderr=float(e.std(ddof=1) / math.sqrt(trials)),
                 samples=trials)]


def _exp_lambda(p, trials, rs):
    t = phaseest.lambda_mc(p["M"], p.get("m", 0), max(trials, 10_000), rs, p.get("algorithm", 2),
                           p.get("n", math.inf))
    return [dict(trial=0, lam=t.lam, stderr=t.std_err, samples=t.mc_samples)]


def _pure_run(model, psi, d, eps, delta, q, g):
    if model == "classical":
        return tomo_pure.lq_wrap(lambda e: tomo_pure.classical_linf_tomo(psi, d, e, delta, g), q, eps, d)
    if model == "conditional":
        return tomo_pure.lq_wrap(lambda e: tomo_pure.cond_sample_tomo(psi, d, e, delta, g), q, eps, d)
    if model == "copies":
        return tomo_pure.lq_wrap(lambda e: tomo_pure.copies_only_tomo(psi, d, e, delta, g), q, eps, d)
    if model == "unitary":
        return tomo_pure.lq_wrap(lambda e: tomo_pure.pe_complex_tomo(psi, d, e, delta, g), q, eps, d)
    raise ConfigError(f"unknown model {model}")


def _exp_pure_tomo(p, trials, rs):
    rows = []
    d, eps, delta, q, model = p["d"], p["eps"], p.get("delta", 0.1), p.get("q", math.inf), p["model"]
    for t in range(trials):
        g = rs.child(t)
        psi = random_ket(d, g, real=(model == "classical"))
        if model == "classical":
            psi = type(psi)(np.abs(psi.amps))
        r = _pure_run(model, psi, d, eps, delta, q, g)
        err = tomo_pure.error_achieved(r, psi)
        rows.append(dict(trial=t, error=err, success=int(err <= eps), cost=r.cost,
                         queries=r.ledger.total_queries, samples=r.samples))
    return rows


def _exp_mixed_tomo(p, trials, rs):
    rows = []
    d, r, eps, delta, q = p["d"], p["r"], p["eps"], p.get("delta", 1 / 3), p.get("q", 1)
    for t in range(trials):
        g = rs.child(t)
        rho = random_density(d, r, g)
        res = tomo_mixed.mixed_tomo(rho, d, r, eps, delta, q, g)
        err = norm(rho.mat - res.estimate, q)
        rows.append(dict(trial=t, error=err, success=int(err <= eps),
                         queries=res.ledger.total_queries, samples=0))
    return rows


def _exp_direct_tomo(p, trials, rs):
    rows = []
    d, r, eps = p["d"], p["r"], p["eps"]
    for t in range(trials):
        g = rs.child(t)
        rho = random_density(d, r, g)
        res = tomo_mixed.direct_sample_tomo(rho, d, eps, g, r=r)
        err = norm(rho.mat - res.estimate, 1)
        rows.append(dict(trial=t, error=err, success=int(err <= eps), queries=0, samples=res.samples))
    return rows


def _exp_gradient(p, trials, rs):
    rows = []
    d, eps, delta = p["d"], p["eps"], p.get("delta", 0.1)
    unb = bool(p.get("unbiased", 0))
    for t in range(trials):
        g = rs.child(t)
        grad = g.generator.uniform(-0.5, 0.5, d)
        orc = gradest.PhaseValueOracle.linear_function(grad)
        res = (gradest.unbiased_block_to_grad if unb else gradest.block_to_grad)(orc, eps, delta, g)
        err = float(np.max(np.abs(res.k - grad)))
        rows.append(dict(trial=t, error=err, success=int(err <= eps),
                         queries=res.ledger.total_queries, samples=0))
    return rows


def _exp_expval(p, trials, rs):
    rows = []
    d, m, eps, delta = p["d"], p["m"], p["eps"], p.get("delta", 0.1)
    for t in range(trials):
        g = rs.child(t)
        mats = []
        for _ in range(m):
            A = g.generator.normal(size=(d, d)) + 1j * g.generator.normal(size=(d, d))
            H = A + A.conj().T
            mats.append(H / np.linalg.norm(H, 2))
        obs = expval.ObservableSet(np.array(mats), eps, delta)
        rho = random_density(d, min(2, d), g)
        res = expval.multi_expectation(rho, obs, delta, g)
        err = float(np.max(np.abs(res.z - expval.expectation_values(rho, obs.mats))))
        rows.append(dict(trial=t, error=err, success=int(err <= eps),
                         queries=res.ledger.total_queries, samples=0))
    return rows


def _exp_qram(p, trials, rs):
    d, kind = p["d"], p["kind"]
    net = {"icnot_out": lambda: qram.build_indexed_cnot(d, "out"),
           "icnot_in": lambda: qram.build_indexed_cnot(d, "in"),
           "iswap": lambda: qram.build_indexed_swap(d, "single"),
           "iiswap": lambda: qram.build_indexed_swap(d, "double")}[kind]()
    c = net.counts()
    sem = qram.check_semantics(net, d, kind, rs.generator, random_q=200)
    return [dict(trial=0, cnot=c["CNOT"], toffoli=c["Toffoli"], x=c["X"], depth=net.depth,
                 ancilla=net.n_ancilla, tested=sem["tested"], wrong=sem["wrong"],
                 dirty_ancilla=sem["dirty_ancilla"])]


def _exp_probset(p, trials, rs):
    ps = hardness.probset_build(p["d"], p["eps"])
    return [dict(trial=0, entropy=ps.closed_entropy(), bound=ps.entropy_bound(),
                 top_eig=float(ps.closed_spectrum()[0]), small_eig=float(ps.closed_spectrum()[1]))]


def _exp_mub(p, trials, rs):
    fam = hardness.mub_build(p["d"], p.get("r", p["d"]))
    c = hardness.mub_claims(fam)
    st = hardness.delta_quadratic_stats(fam, max(trials, 1000), rs)
    return [dict(trial=0, A_op=c["A_op"], A_fro2=c["A_fro2"], ok=int(c["ok"]),
                 mean_exact=st["mean_exact"], tail=st["tail"])]


def _check_tomo(p):
    if not (0 < p.get("eps", 0.1) < 1):
        return "eps must lie in (0, 1)"
    if not (0 < p.get("delta", 0.1) < 1):
        return "delta must lie in (0, 1)"
    if p.get("model") not in (None, "classical", "conditional", "copies", "unitary"):
        return "model must be classical, conditional, copies or unitary"
    if p.get("q", math.inf) < 2:
        return "amplitude targets need q >= 2"
    return None


def _check_mixed(p):
    if not (0 < p["eps"] <= 1 / 3 and 0 < p.get("delta", 1 / 3) <= 1 / 3 + 1e-12):
        return "eps and delta must lie in (0, 1/3]"
    if not (1 <= p["r"] <= p["d"]):
        return "need 1 <= r <= d"
    return None


EXPERIMENTS: dict[str, Experiment] = {
    "grid_labels": Experiment(_exp_grid_labels, ("n",), ("label",),
                              lambda p: None if isinstance(p["n"], int) and p["n"] >= 1 else "n >= 1",
                              "labels of the centred grid", per_trial=False),
    "pe_concentration": Experiment(_exp_pe_concentration, ("M",),
                                   ("frac_le_1_over_M", "frac_le_2_over_M", "frac_le_3_over_M", "samples"),
                                   lambda p: None if _pow2(p["M"]) and p["M"] >= 2 else "M a power of 2",
                                   "fraction of plain estimates within k/M", per_trial=False),
    "pe_bias": Experiment(_exp_pe_bias, ("M", "m"), ("bias", "stderr", "samples"),
                          lambda p: None if _pow2(p["M"]) else "M a power of 2",
                          "mean signed error of the boosted estimators", per_trial=False),
    "lambda": Experiment(_exp_lambda, ("M",), ("lam", "stderr", "samples"),
                         lambda p: None if _pow2(p["M"]) else "M a power of 2",
                         "Monte Carlo shrinkage factor", per_trial=False),
    "pure_tomo_scaling": Experiment(_exp_pure_tomo, ("model", "d", "eps"),
                                    ("error", "success", "cost", "queries", "samples"), _check_tomo,
                                    "pure-state tomography, one row per run"),
    "mixed_tomo": Experiment(_exp_mixed_tomo, ("d", "r", "eps"),
                             ("error", "success", "queries", "samples"), _check_mixed,
                             "Schatten-norm density-matrix tomography"),
    "direct_tomo": Experiment(_exp_direct_tomo, ("d", "r", "eps"),
                              ("error", "success", "queries", "samples"),
                              lambda p: None if p["d"] >= 2 and 0 < p["eps"] < 2 else "d >= 2, eps in (0,2)",
                              "copies-only density-matrix tomography (trace norm)"),
    "gradient": Experiment(_exp_gradient, ("d", "eps"), ("error", "success", "queries", "samples"),
                           _check_tomo, "gradient of a random linear phase"),
    "expval": Experiment(_exp_expval, ("d", "m", "eps"), ("error", "success", "queries", "samples"),
                         lambda p: None if 0 < p["eps"] <= 2 else "eps in (0, 2]",
                         "many expectation values at once"),
    "qram": Experiment(_exp_qram, ("d", "kind"),
                       ("cnot", "toffoli", "x", "depth", "ancilla", "tested", "wrong", "dirty_ancilla"),
                       lambda p: None if _pow2(p["d"]) and p["d"] >= 4 and p["kind"] in
                       ("icnot_out", "icnot_in", "iswap", "iiswap") else "d a power of 2 >= 4, known kind",
                       "indexed CNOT / SWAP netlist counts and checks", per_trial=False),
    "probset": Experiment(_exp_probset, ("d", "eps"), ("entropy", "bound", "top_eig", "small_eig"),
                          lambda p: None if p["d"] >= 12 and p["d"] % 2 == 0 and 6 * p["eps"] < 1
                          else "even d >= 12 and 6 eps < 1", "hard family entropy", per_trial=False),
    "mub": Experiment(_exp_mub, ("d",), ("A_op", "A_fro2", "ok", "mean_exact", "tail"),
                      lambda p: None if hardness.is_odd_prime(p["d"]) else "d an odd prime",
                      "mutually unbiased bases checks", per_trial=False),
}


# --- running ---------------------------------------------------------------

BASE_COLUMNS = ("experiment", "point", "stream_id", "trial")


@dataclass
class ResultTable:
    columns: list
    rows: list
    timings: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        recs = [{c: _jsonable(r.get(c)) for c in self.columns} for r in self.rows]
        return json.dumps(recs, indent=1, sort_keys=False) + "\n"

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _run_point(cfg: ExperimentConfig, k: int, params: dict):
    rs = RandomStream(cfg.seed, k)
    t0 = time.perf_counter()
    out = EXPERIMENTS[cfg.name].fn(params, cfg.trials, rs)
    dt = time.perf_counter() - t0
    rows = []
    for r in out:
        row = dict(experiment=cfg.name, point=k, stream_id=k, **params)
        row.update({kk: (float(v) if isinstance(v, (np.floating,)) else v) for kk, v in r.items()})
        rows.append(row)
    return k, rows, dt


def run(cfg: ExperimentConfig) -> ResultTable:
    exp = EXPERIMENTS[cfg.name]
    pts = cfg.points()
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(lambda kp: _run_point(cfg, *kp), enumerate(pts)))
    else:
        results = [_run_point(cfg, k, p) for k, p in enumerate(pts)]
    results.sort(key=lambda x: x[0])
    rows = [r for _, rs, _ in results for r in rs]
    rows.sort(key=lambda r: (r["point"], r["trial"]))
    cols = list(BASE_COLUMNS) + sorted(cfg.grid) + list(exp.columns)
    timings = [dict(point=k, wall_time=dt) for k, _, dt in results]
    return ResultTable(cols, rows, timings)


def write_table(tab: ResultTable, cfg: ExperimentConfig, path: str | None = None) -> str:
    text = tab.to_csv() if cfg.format == "csv" else tab.to_json()
    out = path or cfg.output
    if out:
        Path(out).write_text(text)
        tim = io.StringIO()
        w = csv.writer(tim, lineterminator="\n")
        w.writerow(["point", "wall_time"])
        for t in tab.timings:
            w.writerow([t["point"], f"{t['wall_time']:.6f}"])
        Path(str(out) + ".timing.csv").write_text(tim.getvalue())
    return text


def fit_scaling(table, x_param: str, y_column: str, invert_x: bool = False) -> tuple[float, float, float]:
    """Least squares of log y on log x (or log 1/x); y averaged per distinct x first."""
    rows = table.rows if isinstance(table, ResultTable) else table
    xs = np.array([float(r[x_param]) for r in rows])
    ys = np.array([float(r[y_column]) for r in rows])
    if invert_x:
        xs = 1.0 / xs
    ux = np.unique(xs)
    if ux.size < 3:
        raise ValueError("need at least 3 distinct x values")
    if np.any(ux <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs positive values")
    my = np.array([ys[xs == u].mean() for u in ux])
    lx, ly = np.log(ux), np.log(my)
    if np.ptp(lx) < 1e-12:
        raise ValueError("degenerate x range")
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


# --- calibration -----------------------------------------------------------

def lambda_calibration_set() -> list[tuple[int, int, int, float]]:
    """(M, m, algorithm, n) combinations used by the low-depth plans for t = 16 .. 256."""
    keys = set()
    for t in (16, 32, 64, 128, 256):
        M, m = phaseest.low_depth_plan(t)
        keys.add((M, m, 2, math.inf))
    return sorted(keys)


def calibrate(data_dir: Path, samples: int = phaseest.DEFAULT_LAMBDA_SAMPLES,
              const_trials: int = 2000, const_seed: int = 2027, log=print) -> None:
    recs = [f"# version {phaseest.LAMBDA_CACHE_VERSION}", "# M m algorithm n lambda samples seed stderr"]
    for M, m, alg, n in lambda_calibration_set():
        rs = RandomStream(phaseest.DEFAULT_LAMBDA_SEED, M * 1000 + m * 10 + alg)
        t = phaseest.lambda_mc(M, m, samples, rs, alg, n)
        recs.append(phaseest.format_lambda_record(t))
        log(f"lambda M={M} m={m} alg={alg}: {t.lam:.6f} +- {t.std_err:.1e}")
    (data_dir / "lambda_cache.txt").write_text("\n".join(recs) + "\n")
    c = tomo_mixed.calibrate_constants(const_trials, RandomStream(const_seed, 1))
    (data_dir / "constants.txt").write_text(tomo_mixed.format_constants(c))
    log(f"constants C'={c['C_prime']:.4f} c'={c['c_prime']:.4f}")


# --- CLI -------------------------------------------------------------------

VERIFY_MODULES = ("qcore", "norms", "blockenc", "phaseest", "gradest", "tomo_pure", "expval",
                  "tomo_mixed", "hardness", "qram", "harness")


def _find_tests() -> Path | None:
    for base in (Path.cwd(), Path(__file__).resolve().parents[2]):
        if (base / "tests").is_dir():
            return base / "tests"
    return None


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qtomo", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    pr = sub.add_parser("run", help="run an experiment config")
    pr.add_argument("config")
    pr.add_argument("--output")
    sub.add_parser("list-experiments", help="list registered experiments")
    pv = sub.add_parser("verify", help="run a module's invariant tests")
    pv.add_argument("module", choices=VERIFY_MODULES)
    pc = sub.add_parser("calibrate", help="rebuild the lambda cache and constants table")
    pc.add_argument("--data-dir", default=str(Path(__file__).parent / "data"))
    pc.add_argument("--samples", type=int, default=phaseest.DEFAULT_LAMBDA_SAMPLES)
    args = ap.parse_args(argv)

    if args.cmd == "list-experiments":
        for name, e in EXPERIMENTS.items():
            print(f"{name:20s} {', '.join(e.required):22s} {e.doc}")
        return 0
    if args.cmd == "run":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        tab = run(cfg)
        text = write_table(tab, cfg, args.output)
        if not (args.output or cfg.output):
            sys.stdout.write(text)
        return 0
    if args.cmd == "verify":
        tests = _find_tests()
        if tests is None:
            print("error: tests directory not found", file=sys.stderr)
            return 2
        import pytest

        return int(pytest.main(["-q", str(tests / f"test_{args.module}.py")]))
    if args.cmd == "calibrate":
        calibrate(Path(args.data_dir), samples=args.samples)
        return 0
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
