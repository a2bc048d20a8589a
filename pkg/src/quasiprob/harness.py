"""Experiment orchestration, report files and the command-line interface.

Output files written by :func:`write_report`:

* ``initial.csv`` / ``final.csv``: spectrum, label, exact, estimate, std
* ``amplitudes_{a,b,c}.csv``: element labels, exact and estimated real/imag
  parts with standard deviations, interference angles, shots
* ``ft_gamma.csv``: conditional fluctuation theorem per gamma
* ``summary.json``: configuration, invariant checks and headline numbers
* ``trajectories.csv`` / ``trajectories.json``: exact Q, Q~ and records

Floats in CSV files are written with 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import circuits, interferometry, trajectories as tr, tripartite as tp
from .circuits import NoiseModel
from .qlinalg import dagger

MODES = ("exact", "sampled", "noisy")
DEFAULT_THETA1 = 0.7098 * math.pi
DEFAULT_THETA2 = 1.7059 * math.pi
DEFAULT_NOISE = {"p1": 0.0, "p2": 0.01, "readout": [0.012, 0.012]}
INITIAL_SPECTRA = ("rs", "r", "s", "e")
FINAL_SPECTRA = ("rs_final", "r_final", "s_final", "e_final")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def parse_angle(text: str | float) -> float:
    """Radians; a trailing ``pi`` multiplies by pi (``"0.7098pi"``)."""
    if isinstance(text, (int, float)):
        return float(text)
    t = text.strip().lower()
    if t.endswith("pi"):
        head = t[:-2].rstrip("*").strip()
        return (float(head) if head else 1.0) * math.pi
    return float(t)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class RunConfig:
    theta1: float = DEFAULT_THETA1
    theta2: float = DEFAULT_THETA2
    beta: float = 1.0
    shots: int = 8192
    reps: int = 10
    seed: int = 0
    mode: str = "exact"
    noise: dict | None = None
    mitigate: bool = True
    out: str = "results"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.shots < 1 or self.reps < 1:
            raise ValueError("shots and reps must be >= 1")
        if self.mode == "noisy" and self.noise is None:
            object.__setattr__(self, "noise", dict(DEFAULT_NOISE))
        if self.mode != "noisy" and self.noise is not None:
            raise ValueError("noise parameters only apply in noisy mode")
        if self.noise is not None:
            self.noise_model()  # validates ranges
        for name in ("theta1", "theta2", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def noise_model(self) -> NoiseModel | None:
        if self.noise is None:
            return None
        n = self.noise
        return NoiseModel(float(n.get("p1", 0.0)), float(n.get("p2", 0.0)),
                          tuple(n.get("readout", (0.0, 0.0))))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        for k in ("theta1", "theta2"):
            if k in d:
                d[k] = parse_angle(d[k])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "mode" in kw and kw["mode"] != "noisy" and "noise" not in kw:
            kw["noise"] = None
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# invariant checks

@dataclass(frozen=True)
class Check:
    value: float
    tol: float
    passed: bool


def _close(value: float, target: float, tol: float) -> Check:
    err = abs(value - target)
    return Check(float(err), tol, bool(err <= tol))


def invariant_checks(ev: tp.EvolvedState, sweep_tolerances: bool = False) -> dict[str, Check]:
    """Every trajectory identity on one evolved setup, as absolute errors."""
    q = tr.quasiprobability(ev)
    qt = tr.retrodiction_quasiprobability(ev)
    table = tr.stochastic_table(ev)
    d_i = tp.delta_mutual_information(ev)
    detailed_tol = 1e-8 if sweep_tolerances else 1e-9
    out = {
        "normalization": _close(q.total(), 1.0, 1e-10),
        "normalization_retro": _close(qt.total(), 1.0, 1e-10),
        "mean_delta_iota": _close(tr.average(q, table.delta_iota), d_i, 1e-9),
        "integral_ft": _close(tr.integral_ft(q, table), 1.0, 1e-8),
        "detailed_ft": Check(tr.detailed_ft_check(q, qt, table), detailed_tol,
                             tr.detailed_ft_check(q, qt, table) <= detailed_tol),
    }
    mg, mt, mgt = tr.marginal_gamma(q), tr.marginal_tau(q), tr.marginal_gamma(qt)
    for name, got, want in (("marginal_gamma", mg, tr.gamma_closed_form(ev)),
                            ("marginal_tau", mt, tr.tau_closed_form(ev)),
                            ("marginal_gamma_retro", mgt, tr.retro_gamma_closed_form(ev))):
        err = float(np.max(np.abs(got - want)))
        out[name] = Check(err, 1e-10, err <= 1e-10)
    worst_neg = float(max(0.0, -mg.min(), -mt.min(), -mgt.min()))
    out["marginal_nonnegative"] = Check(worst_neg, 1e-12, worst_neg <= 1e-12)
    ep_s, ep_sr = tr.entropy_production_fts(q, table)
    out["ft_sigma_S"] = _close(ep_s, 1.0, 1e-8)
    out["ft_sigma_SR"] = _close(ep_sr, 1.0, 1e-8)
    out["mean_sigma_S"] = _close(tr.average(q, table.sigma_S), tp.mutual_information_se_final(ev), 1e-9)
    out["mean_sigma_SR"] = _close(tr.average(q, table.sigma_SR), tp.mutual_information_sr_e_final(ev), 1e-9)
    out["data_processing"] = Check(float(d_i), -1e-9, bool(d_i >= -1e-9))
    before, after = tp.check_preservation(ev)
    out["preservation"] = _close(before, after, 1e-9)
    lhs, rhs = tp.cmi_identity(ev)
    out["cmi_identity"] = _close(lhs, rhs, 1e-9)
    worst = 0.0
    for o in tr.ORDERINGS:
        qo = tr.quasiprobability(ev, o)
        worst = max(worst, abs(tr.integral_ft(qo, table) - 1.0))
    out["orderings_integral_ft"] = Check(worst, 1e-8, worst <= 1e-8)
    return out


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepSummary:
    n: int
    seed: int | None
    passed: dict[str, int]
    failed: dict[str, int]
    negative_setups: int
    min_quasiprobability: float

    @property
    def all_passed(self) -> bool:
        return not any(self.failed.values())

    def to_dict(self) -> dict:
        return {"n": self.n, "seed": self.seed, "passed": self.passed, "failed": self.failed,
                "negative_setups": self.negative_setups,
                "min_quasiprobability": self.min_quasiprobability, "all_passed": self.all_passed}


def sweep_setups(n: int, seed: int | None = None, kind: str = "random"):
    """``n`` evolved setups: Haar/Wishart random, or random states with ``U = 1``."""
    if n < 1:
        raise ValueError("sweep needs n >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(n):
        s = tp.random_setup(rng)
        if kind == "identity":
            s = tp.identity_setup(s.rho_RS, s.rho_E)
        elif kind != "random":
            raise ValueError(f"unknown sweep kind {kind!r}")
        yield tp.evolve(s)


def sweep(n: int, seed: int | None = None, kind: str = "random") -> SweepSummary:
    passed: dict[str, int] = {}
    failed: dict[str, int] = {}
    negative, qmin = 0, math.inf
    for ev in sweep_setups(n, seed, kind):
        for name, chk in invariant_checks(ev, sweep_tolerances=True).items():
            passed.setdefault(name, 0)
            failed.setdefault(name, 0)
            if chk.passed:
                passed[name] += 1
            else:
                failed[name] += 1
        m = tr.quasiprobability(ev).min()
        qmin = min(qmin, m)
        negative += m < -1e-6
    return SweepSummary(n, seed, passed, failed, negative, float(qmin))


# ---------------------------------------------------------------------------
# experiment

def transition_gammas(ev: tp.EvolvedState) -> list[tuple[str, tr.GammaIndex]]:
    """One gamma per initial (s, n) in the order 00, 10, 01, 11 of computational bits.

    The final labels are the ones the interaction actually reaches (largest
    P[gamma]); labels are converted from computational bits to eigenlabels.
    """
    mg = tr.gamma_closed_form(ev)
    s_lab = _computational_labels(ev.s.vectors)
    n_lab = _computational_labels(ev.e.vectors)
    out = []
    for k, (sb, nb) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
        s, n = s_lab[sb], n_lab[nb]
        sf, nf = np.unravel_index(int(np.argmax(mg[s, n])), mg.shape[2:])
        out.append((f"gamma{k + 1}", tr.GammaIndex(int(s), int(n), int(sf), int(nf))))
    return out


def _computational_labels(vectors: np.ndarray) -> dict[int, int]:
    """Computational index -> eigenlabel, for bases that are permutations."""
    return {int(np.argmax(np.abs(vectors[:, j]))): j for j in range(vectors.shape[1])}


@dataclass
class Report:
    config: RunConfig
    initial: list[list]
    final: list[list]
    amplitudes: dict[str, tuple[list[str], list[list]]]
    ft_gamma: list[list]
    summary: dict
    ev: tp.EvolvedState = field(repr=False)


def _measure_eigenbasis(c: circuits.Circuit, basis: np.ndarray, qubits: Sequence[int]) -> None:
    if not np.allclose(basis, np.eye(basis.shape[0]), atol=1e-14, rtol=0):
        c.unitary(dagger(basis), qubits)


def distribution_circuits(ev: tp.EvolvedState, theta1: float, theta2: float, beta: float,
                          final: bool) -> dict[str, circuits.Circuit]:
    """``local``: R, S, E each in their eigenbasis; ``global``: RS eigenbasis and E."""
    sfx = "_final" if final else ""
    out = {}
    c = circuits.build_full_circuit(theta1, theta2, beta, interact=final)
    for sub, q in (("r", 2), ("s", 3), ("e", 4)):
        _measure_eigenbasis(c, getattr(ev, sub + sfx).vectors, [q])
    out["local"] = c.measure([2, 3, 4])
    c = circuits.build_full_circuit(theta1, theta2, beta, interact=final)
    _measure_eigenbasis(c, getattr(ev, "rs" + sfx).vectors, [2, 3])
    _measure_eigenbasis(c, getattr(ev, "e" + sfx).vectors, [4])
    out["global"] = c.measure([2, 3, 4])
    return out


def _distribution_estimates(counts: dict[str, np.ndarray], names: Sequence[str]) -> dict[str, np.ndarray]:
    """Spectra from outcome frequencies (arrays over bitstrings of R, S, E)."""
    loc = counts["local"].reshape(2, 2, 2)
    glo = counts["global"].reshape(4, 2)
    rs, r, s, e = names
    return {rs: glo.sum(axis=1), r: loc.sum(axis=(1, 2)), s: loc.sum(axis=(0, 2)), e: loc.sum(axis=(0, 1))}


def _frequencies(table: circuits.ShotTable, m: int) -> np.ndarray:
    return np.array([table.frequency(b) for b in circuits.bitstrings(m)])


def _mean_std(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean over repetitions and the standard error of that mean."""
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def run(config: RunConfig) -> Report:
    setup = tp.experiment_setup(config.theta1, config.theta2, config.beta)
    ev = tp.evolve(setup)
    if any(d != 2 for d in ev.dims):
        raise ValueError("the circuit experiment is defined for three qubits")
    table = tr.stochastic_table(ev)
    q = tr.quasiprobability(ev)
    gammas = transition_gammas(ev)
    exact_ft = {name: tr.conditional_ft(q, table, g) for name, g in gammas}
    exact_amp = {f: interferometry.direct_amplitudes(ev, f) for f in interferometry.FAMILIES}
    noise = config.noise_model()

    spectra_names = INITIAL_SPECTRA + FINAL_SPECTRA
    if config.mode == "exact":
        reps = 1
        tabs = [interferometry.exact_tables(ev)]
        spec_samples = {k: getattr(ev, k).eigenvalues[None, :] for k in spectra_names}
        thetas = {f: (tabs[0][f].theta_real, tabs[0][f].theta_imag) for f in tabs[0]}
    else:
        reps = config.reps
        sampler = interferometry.TableSampler(ev, noise, mitigate=config.mode == "noisy" and config.mitigate)
        dist_circ = {fin: distribution_circuits(ev, config.theta1, config.theta2, config.beta, fin)
                     for fin in (False, True)}
        tabs = []
        spec_samples = {k: [] for k in spectra_names}
        for rep_ss in circuits.repetition_seeds(config.seed, reps):
            amp_ss, dist_ss = rep_ss.spawn(2)
            tabs.append(sampler.sample(config.shots, amp_ss))
            dss = iter(dist_ss.spawn(4))
            for fin, names in ((False, INITIAL_SPECTRA), (True, FINAL_SPECTRA)):
                freqs = {k: _frequencies(circuits.sample(c, config.shots, noise, next(dss)), 3)
                         for k, c in dist_circ[fin].items()}
                for k, v in _distribution_estimates(freqs, names).items():
                    spec_samples[k].append(v)
        spec_samples = {k: np.array(v) for k, v in spec_samples.items()}
        thetas = {f: (tabs[0][f].theta_real, tabs[0][f].theta_imag) for f in tabs[0]}

    # distributions
    dist_rows = {False: [], True: []}
    for k in spectra_names:
        mean, std = _mean_std(spec_samples[k])
        for label, (ex, m, sd) in enumerate(zip(getattr(ev, k).eigenvalues, mean, std)):
            dist_rows[k in FINAL_SPECTRA].append([k, label, float(ex), float(m), float(sd)])

    # amplitudes
    amp_out = {}
    for f in interferometry.FAMILIES:
        vals = np.array([t[f].values for t in tabs])
        mre, sre = _mean_std(vals.real)
        mim, sim = _mean_std(vals.imag)
        spec = interferometry.family_specs(ev)[f]
        header = list(spec.axes) + ["exact_real", "exact_imag", "real", "imag", "std_real",
                                    "std_imag", "theta_real", "theta_imag", "shots"]
        rows = []
        for idx in np.ndindex(*spec.shape):
            ex = exact_amp[f][idx]
            rows.append(list(map(int, idx)) + [float(ex.real), float(ex.imag), float(mre[idx]),
                        float(mim[idx]), float(sre[idx]), float(sim[idx]),
                        float(thetas[f][0][idx]), float(thetas[f][1][idx]),
                        0 if config.mode == "exact" else config.shots])
        amp_out[f] = (header, rows)

    # fluctuation theorems per gamma, from assembled quasiprobabilities
    fts = []
    integral = []
    for t in tabs:
        qa = interferometry.assemble_quasiprobability(ev, t["a"], t["b"], t["c"])
        fts.append([_safe_conditional(qa, table, g) for _, g in gammas])
        integral.append(tr.average(qa, np.where(table.valid, np.exp(-np.nan_to_num(table.delta_iota)), 0.0)))
    fts = np.array(fts)
    mean, std = _mean_std(fts)
    imean, istd = _mean_std(np.array(integral))
    pg = tr.marginal_gamma(q)
    ft_rows = []
    for (name, g), ex, m, sd in zip(gammas, exact_ft.values(), mean, std):
        within = bool(abs(m - 1.0) <= 3 * sd) if config.mode != "exact" else bool(abs(m - 1.0) <= 1e-9)
        ft_rows.append([name, *g, float(pg[g]), float(ex), float(m), float(sd), within])
    ft_rows.append(["integral", "", "", "", "", 1.0, float(tr.integral_ft(q, table)), float(imean),
                    float(istd), bool(abs(imean - 1) <= (3 * istd if config.mode != "exact" else 1e-9))])

    checks = invariant_checks(ev)
    summary = {
        "config": config.to_dict(),
        "delta_I": tp.delta_mutual_information(ev),
        "I_SR_initial": tp.mutual_information_sr(ev, final=False),
        "I_SR_final": tp.mutual_information_sr(ev, final=True),
        "min_quasiprobability": q.min(),
        "bell_weights": list(circuits.bell_probabilities(config.theta1, config.theta2)),
        "gammas": {name: list(map(int, g)) for name, g in gammas},
        "checks": {k: asdict(v) for k, v in checks.items()},
        "all_checks_passed": all(c.passed for c in checks.values()),
        "ft_gamma": {r[0]: {"mean": r[7], "std": r[8], "within": r[9]} for r in ft_rows},
    }
    return Report(config, dist_rows[False], dist_rows[True], amp_out, ft_rows, summary, ev)


def _safe_conditional(q: tr.QuasiDistribution, table: tr.StochasticTable, g) -> float:
    try:
        return tr.conditional_ft(q, table, g)
    except ValueError:
        return float("nan")


DIST_HEADER = ["spectrum", "label", "exact", "estimate", "std"]
FT_HEADER = ["gamma", "s", "n", "s'", "n'", "P", "exact", "mean", "std", "within"]


def write_report(report: Report, out: str | os.PathLike | None = None) -> str:
    out = os.fspath(out if out is not None else report.config.out)
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "initial.csv"), DIST_HEADER, report.initial)
    _write_csv(os.path.join(out, "final.csv"), DIST_HEADER, report.final)
    for f, (header, rows) in report.amplitudes.items():
        _write_csv(os.path.join(out, f"amplitudes_{f}.csv"), header, rows)
    _write_csv(os.path.join(out, "ft_gamma.csv"), FT_HEADER, report.ft_gamma)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(report.summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    ev = report.ev
    q, qt, table = tr.quasiprobability(ev), tr.retrodiction_quasiprobability(ev), tr.stochastic_table(ev)
    tr.write_csv(os.path.join(out, "trajectories.csv"), q, qt, table)
    tr.write_json(os.path.join(out, "trajectories.json"), q, qt, table)
    return out


def format_summary(summary: dict, ft_rows: list[list] | None = None) -> str:
    lines = [f"mode: {summary['config']['mode']}",
             f"Delta I = {summary['delta_I']:.12g}",
             f"min Q = {summary['min_quasiprobability']:.6g}"]
    for name, c in summary["checks"].items():
        lines.append(f"  {'PASS' if c['passed'] else 'FAIL'}  {name:24s} err={c['value']:.3g}")
    for name, v in summary["ft_gamma"].items():
        lines.append(f"  {name:9s} {v['mean']:.6f} +/- {v['std']:.2g}  {'ok' if v['within'] else 'OUTSIDE'}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# command line

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasiprob", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("exact", "exact evaluation"), ("sample", "noiseless shot sampling"),
                        ("noisy", "sampling under depolarizing and read-out noise")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file with RunConfig fields")
        sp.add_argument("--theta1", type=parse_angle)
        sp.add_argument("--theta2", type=parse_angle)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--shots", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        if name == "noisy":
            sp.add_argument("--p1", type=float)
            sp.add_argument("--p2", type=float)
            sp.add_argument("--readout", type=float, nargs=2, metavar=("EPS01", "EPS10"))
            sp.add_argument("--no-mitigation", action="store_true")
    sp = sub.add_parser("sweep", help="invariant checks on random setups")
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--kind", choices=("random", "identity"), default="random")
    sp.add_argument("--out", help="write sweep.json here")
    sp = sub.add_parser("report", help="print the summary of an output directory")
    sp.add_argument("--out", default="results")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    mode = {"exact": "exact", "sample": "sampled", "noisy": "noisy"}[args.command]
    base = RunConfig.from_file(args.config) if args.config else RunConfig()
    noise = None
    if mode == "noisy":
        noise = dict(base.noise or DEFAULT_NOISE)
        for k in ("p1", "p2"):
            if getattr(args, k) is not None:
                noise[k] = getattr(args, k)
        if args.readout is not None:
            noise["readout"] = list(args.readout)
    over = {k: getattr(args, k) for k in ("theta1", "theta2", "beta", "shots", "reps", "seed", "out")}
    cfg = base.with_overrides(mode=mode, noise=noise, **over)
    if mode == "noisy" and args.no_mitigation:
        cfg = replace(cfg, mitigate=False)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "sweep":
        s = sweep(args.n, args.seed, args.kind)
        text = json.dumps(s.to_dict(), indent=1, sort_keys=True)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, "sweep.json"), "w") as fh:
                fh.write(text + "\n")
        print(text)
        return 0 if s.all_passed else 1
    if args.command == "report":
        path = os.path.join(args.out, "summary.json")
        if not os.path.exists(path):
            print(f"no summary.json in {args.out}", file=sys.stderr)
            return 2
        with open(path) as fh:
            print(format_summary(json.load(fh)))
        return 0
    cfg = config_from_args(args)
    report = run(cfg)
    out = write_report(report)
    print(format_summary(report.summary))
    print(f"wrote {out}")
    return 0
