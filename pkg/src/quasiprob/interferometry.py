"""Interference (Hadamard-test) measurement of matrix elements.

An ancilla in ``|+>`` controls a payload unitary ``V`` acting on ``|f>``. After
a rotation ``RY(theta)`` on the ancilla and undoing the preparation of ``|f>``,
the joint probabilities of reading the ancilla as 0 or 1 with the payload back
in ``|0...0>`` are::

    P0 = (cos^2(t/2) + sin^2(t/2) |a|^2 - sin(t) Re a) / 2
    P1 = (sin^2(t/2) + cos^2(t/2) |a|^2 + sin(t) Re a) / 2

with ``a = <f|V|f>``. ``RX(theta)`` replaces ``Re a`` by ``-Im a``. Off-diagonal
elements ``<f|U|f'>`` use ``V = U W`` where ``W|f> = |f'>``.

Three families of elements rebuild the trajectory quasiprobability:

* ``a[r, s, l]      = <r s|l>``
* ``b[s', n', s, n] = <s' n'|U|s n>``
* ``c[l, n, r', s', n'] = <l n|U^dag|r' s' n'>``
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import circuits
from .circuits import BELL_VECTORS, Circuit, NoiseModel
from .qlinalg import dagger
from .trajectories import CANONICAL, QuasiDistribution
from .tripartite import EvolvedState

SIN_MIN = 1e-6
MITIGATION_SIN_MIN = 0.1
MITIGATION_GRID = tuple(k * math.pi / 180 for k in range(1, 180))
FAMILIES = ("a", "b", "c")
PARTS = ("real", "imag")


# ---------------------------------------------------------------------------
# tasks and circuits

@dataclass(frozen=True)
class AmplitudeTask:
    """Measure ``Re`` or ``Im`` of ``<f|U W|f>``.

    ``f_prep`` maps ``|0...0>`` to ``|f>``; ``f_map`` is ``W`` with
    ``W|f> = |f'>`` (identity when omitted).
    """

    unitary: np.ndarray = field(repr=False)
    f_prep: Circuit = field(repr=False)
    f_map: np.ndarray | None = field(default=None, repr=False)
    theta: float = math.pi / 2
    part: str = "real"
    label: tuple = ()

    def __post_init__(self):
        if self.part not in PARTS:
            raise ValueError(f"part must be one of {PARTS}")
        if abs(math.sin(self.theta)) <= SIN_MIN:
            raise ValueError(f"sin(theta) too small for inversion (theta={self.theta!r})")
        d = 2 ** self.f_prep.num_qubits
        for m in (self.unitary, self.f_map):
            if m is not None and np.shape(m) != (d, d):
                raise ValueError(f"payload must be {d}x{d}")

    @property
    def num_payload(self) -> int:
        return self.f_prep.num_qubits

    @property
    def payload(self) -> np.ndarray:
        u = np.asarray(self.unitary, dtype=complex)
        return u if self.f_map is None else u @ np.asarray(self.f_map, dtype=complex)

    @property
    def f(self) -> np.ndarray:
        return circuits.simulate(self.f_prep)

    def amplitude(self) -> complex:
        """Exact ``<f|U W|f>``."""
        f = self.f
        return complex(np.vdot(f, self.payload @ f))

    def with_theta(self, theta: float) -> "AmplitudeTask":
        return replace(self, theta=float(theta))

    def with_part(self, part: str) -> "AmplitudeTask":
        return replace(self, part=part)


def _interference_prefix(task: AmplitudeTask) -> Circuit:
    m = task.num_payload
    regs = {"interference": [0]}
    regs.update({name: [1 + q[0]] for name, q in task.f_prep.registers.items() if len(q) == 1})
    c = Circuit(m + 1, regs)
    c.h(0)
    c.compose(task.f_prep, list(range(1, m + 1)))
    c.unitary(task.payload, list(range(1, m + 1)), [0])
    return c


def _interference_suffix(task: AmplitudeTask, theta: float) -> Circuit:
    m = task.num_payload
    c = Circuit(m + 1)
    if task.part == "real":
        c.ry(theta, 0)
    else:
        c.rx(theta, 0)
    c.compose(task.f_prep.inverse(), list(range(1, m + 1)))
    return c.measure()


def build_interference_circuit(task: AmplitudeTask) -> Circuit:
    """Ancilla ``H``, preparation, controlled payload, ``RY``/``RX``, un-preparation, measure all."""
    c = _interference_prefix(task)
    return c.compose(_interference_suffix(task, task.theta))


def build_magnitude_circuit(task: AmplitudeTask) -> Circuit:
    """Direct estimate of ``|<f|V|f>|^2``: prepare, apply ``V``, un-prepare, measure."""
    m = task.num_payload
    c = Circuit(m, task.f_prep.registers)
    c.compose(task.f_prep)
    c.unitary(task.payload, list(range(m)))
    c.compose(task.f_prep.inverse())
    return c.measure()


def outcome_labels(task: AmplitudeTask) -> tuple[str, str]:
    """Bitstrings counted as ``P0`` and ``P1``: ancilla bit, then the payload in ``|0...0>``."""
    z = "0" * task.num_payload
    return "0" + z, "1" + z


def _closed_form(a: complex, theta: float, part: str) -> tuple[float, float]:
    c2, s2 = math.cos(theta / 2) ** 2, math.sin(theta / 2) ** 2
    mag = abs(a) ** 2
    x = a.real if part == "real" else -a.imag
    st = math.sin(theta)
    return 0.5 * (c2 + s2 * mag - st * x), 0.5 * (s2 + c2 * mag + st * x)


def exact_interference_probabilities(task: AmplitudeTask) -> tuple[float, float]:
    return _closed_form(task.amplitude(), task.theta, task.part)


def invert_amplitude(p0: float, p1: float, theta: float) -> float:
    """``tan(theta/2) P1 - cot(theta/2) P0 + cot(theta)``; the ``|a|^2`` terms cancel."""
    st = math.sin(theta)
    if abs(st) <= SIN_MIN:
        raise ValueError(f"sin(theta) too small for inversion (theta={theta!r})")
    half = theta / 2
    return math.tan(half) * p1 - p0 / math.tan(half) + math.cos(theta) / st


def _signed(value: float, part: str) -> float:
    return value if part == "real" else -value


def inversion_variance(p0: float, p1: float, theta: float, shots: int) -> float:
    """Multinomial variance of the linear estimator built from frequencies ``p0``, ``p1``."""
    t, k = math.tan(theta / 2), 1.0 / math.tan(theta / 2)
    var = t * t * p1 * (1 - p1) + k * k * p0 * (1 - p0) + 2 * t * k * p0 * p1
    return max(var, 0.0) / shots


# ---------------------------------------------------------------------------
# estimation

@dataclass(frozen=True)
class AmplitudeEstimate:
    value: float
    variance: float
    shots_used: int
    theta_used: float
    mitigated: bool = False
    magnitude2: float | None = None
    part: str = "real"
    p0: float = float("nan")
    p1: float = float("nan")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _estimate_from_counts(task: AmplitudeTask, table: circuits.ShotTable, theta: float) -> tuple:
    l0, l1 = outcome_labels(task)
    p0, p1 = table.frequency(l0), table.frequency(l1)
    value = _signed(invert_amplitude(p0, p1, theta), task.part)
    return value, inversion_variance(p0, p1, theta, table.shots), p0, p1


def estimate_amplitude(task: AmplitudeTask, shots: int, noise: NoiseModel | None = None,
                       seed: int | np.random.SeedSequence | None = None,
                       with_magnitude: bool = False, mitigated: bool = False) -> AmplitudeEstimate:
    """Sample the interference circuit and invert the measured frequencies.

    ``with_magnitude`` adds an independent direct estimate of ``|a|^2`` from a
    separate random stream.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    main_ss, mag_ss = ss.spawn(2)
    table = circuits.sample(build_interference_circuit(task), shots, noise, main_ss)
    value, var, p0, p1 = _estimate_from_counts(task, table, task.theta)
    mag = None
    if with_magnitude:
        mt = circuits.sample(build_magnitude_circuit(task), shots, noise, mag_ss)
        mag = mt.frequency("0" * task.num_payload)
    return AmplitudeEstimate(value, var, shots, task.theta, mitigated, mag, task.part, p0, p1)


def _noisy_outcomes(task: AmplitudeTask, noise: NoiseModel | None, thetas) -> np.ndarray:
    """Noisy ``(P0, P1)`` for every angle, propagating the shared prefix once."""
    n = task.num_payload + 1
    prefix = _interference_prefix(task)
    rho = circuits.density_evolve(circuits.initial_density(n), prefix.gates, n, noise)
    out = np.empty((len(thetas), 2))
    for i, th in enumerate(thetas):
        r = circuits.density_evolve(rho, _interference_suffix(task, th).gates, n, noise)
        p = circuits.readout_distribution(r, n, tuple(range(n)), noise)
        out[i] = p[0], p[2 ** (n - 1)]
    return out


def mitigation_residuals(task: AmplitudeTask, noise: NoiseModel | None,
                         thetas=MITIGATION_GRID) -> tuple[np.ndarray, np.ndarray]:
    """Angles with ``|sin| >= 0.1`` and the noisy inversion error at each."""
    thetas = np.array([t for t in thetas if abs(math.sin(t)) >= MITIGATION_SIN_MIN])
    exact = task.amplitude()
    target = exact.real if task.part == "real" else exact.imag
    probs = _noisy_outcomes(task, noise, thetas)
    est = np.array([_signed(invert_amplitude(p0, p1, t), task.part)
                    for (p0, p1), t in zip(probs, thetas)])
    return thetas, np.abs(est - target)


def select_mitigation_angle(task: AmplitudeTask, noise: NoiseModel | None) -> float:
    """Grid angle whose noisy prediction inverts closest to the exact element.

    Ties go to the smallest angle.
    """
    thetas, res = mitigation_residuals(task, noise)
    return float(thetas[int(np.argmin(res))])


def noisy_residual(task: AmplitudeTask, noise: NoiseModel | None, theta: float | None = None) -> float:
    """``|invert(noisy P0, P1) - exact|`` at one angle (default: the task's)."""
    th = task.theta if theta is None else theta
    _, res = mitigation_residuals(task, noise, [th])
    return float(res[0])


# ---------------------------------------------------------------------------
# preparation circuits for eigenbasis states

def _x_flips(c: Circuit, index: int, qubits) -> Circuit:
    m = len(qubits)
    for k, q in enumerate(qubits):
        if (index >> (m - 1 - k)) & 1:
            c.x(q)
    return c


def _bell_label_of(vec: np.ndarray) -> int | None:
    for label in range(4):
        if np.allclose(vec, BELL_VECTORS[:, label], atol=1e-12, rtol=0):
            return label
    return None


def basis_state_prep(basis: np.ndarray, index: int, registers: dict[str, list[int]]) -> Circuit:
    """Circuit preparing column ``index`` of ``basis`` from ``|0...0>``.

    Computational columns use ``X`` gates, Bell columns use ``H`` and ``CNOT``
    after the flips, anything else falls back to one multi-qubit gate.
    """
    d = basis.shape[0]
    m = int(round(math.log2(d)))
    c = Circuit(m, registers)
    qs = list(range(m))
    vec = basis[:, index]
    j = int(np.argmax(np.abs(vec)))
    if np.allclose(vec, np.eye(d)[:, j], atol=1e-12, rtol=0):
        return _x_flips(c, j, qs)
    if d == 4:
        label = _bell_label_of(vec)
        if label is not None:
            # bits (x, y) on (first, second) with label = x + 2 y
            if label & 1:
                c.x(0)
            if label & 2:
                c.x(1)
            return c.h(0).cnot(0, 1)
    _x_flips(c, index, qs)
    return c.unitary(basis, qs)


def _prep_product(parts: list[tuple[np.ndarray, int]], names: Sequence[str]) -> Circuit:
    """Tensor product of per-subsystem basis preparations, one qubit block each.

    ``names`` labels the qubits when there is one name per qubit.
    """
    sizes = [int(round(math.log2(b.shape[0]))) for b, _ in parts]
    n = sum(sizes)
    c = Circuit(n, {name: [q] for q, name in enumerate(names)} if len(names) == n else {})
    start = 0
    for (b, i), size in zip(parts, sizes):
        c.compose(basis_state_prep(b, i, {}), list(range(start, start + size)))
        start += size
    return c


# ---------------------------------------------------------------------------
# the three families

@dataclass(frozen=True)
class FamilySpec:
    name: str
    shape: tuple[int, ...]
    axes: tuple[str, ...]


def family_specs(ev: EvolvedState) -> dict[str, FamilySpec]:
    dr, ds, de = ev.dims
    return {
        "a": FamilySpec("a", (dr, ds, dr * ds), ("r", "s", "l")),
        "b": FamilySpec("b", (ds, de, ds, de), ("s'", "n'", "s", "n")),
        "c": FamilySpec("c", (dr * ds, de, dr, ds, de), ("l", "n", "r'", "s'", "n'")),
    }


def _require_qubits(ev: EvolvedState) -> None:
    if any(d & (d - 1) for d in ev.dims):
        raise ValueError("circuit construction needs power-of-two dimensions")


def _task(u: np.ndarray, f_prep: Circuit, fp_prep: Circuit, label: tuple, theta: float) -> AmplitudeTask:
    # W = F' F^dag sends |f> = F|0> to |f'> = F'|0>
    w = circuits.circuit_unitary(fp_prep) @ dagger(circuits.circuit_unitary(f_prep))
    return AmplitudeTask(u, f_prep, w, theta, "real", label)


def family_tasks(ev: EvolvedState, family: str, theta: float = math.pi / 2) -> list[AmplitudeTask]:
    """Real-part tasks for every element of one family, in C order of its shape."""
    _require_qubits(ev)
    spec = family_specs(ev)[family]
    dr, ds, de = ev.dims
    tasks = []
    if family == "a":
        eye = np.eye(dr * ds)
        for r, s, l in np.ndindex(*spec.shape):
            f = _prep_product([(ev.r.vectors, r), (ev.s.vectors, s)], ["R", "S"])
            fp = _prep_product([(ev.rs.vectors, l)], ["R", "S"])
            tasks.append(_task(eye, f, fp, (r, s, l), theta))
    elif family == "b":
        u = ev.setup.U
        for sf, nf, s, n in np.ndindex(*spec.shape):
            f = _prep_product([(ev.s_final.vectors, sf), (ev.e_final.vectors, nf)], ["S", "E"])
            fp = _prep_product([(ev.s.vectors, s), (ev.e.vectors, n)], ["S", "E"])
            tasks.append(_task(u, f, fp, (sf, nf, s, n), theta))
    elif family == "c":
        ud = dagger(ev.setup.full_unitary)
        for l, n, rf, sf, nf in np.ndindex(*spec.shape):
            f = _prep_product([(ev.rs.vectors, l), (ev.e.vectors, n)], ["R", "S", "E"])
            fp = _prep_product([(ev.r_final.vectors, rf), (ev.s_final.vectors, sf),
                                (ev.e_final.vectors, nf)], ["R", "S", "E"])
            tasks.append(_task(ud, f, fp, (l, n, rf, sf, nf), theta))
    else:
        raise ValueError(f"unknown family {family!r}")
    return tasks


def direct_amplitudes(ev: EvolvedState, family: str) -> np.ndarray:
    """Matrix elements computed straight from the eigenbases (no circuits)."""
    dr, ds, de = ev.dims
    pb = _product
    if family == "a":
        return (dagger(pb(ev.r.vectors, ev.s.vectors)) @ ev.rs.vectors).reshape(dr, ds, dr * ds)
    if family == "b":
        m = dagger(pb(ev.s_final.vectors, ev.e_final.vectors)) @ ev.setup.U @ pb(ev.s.vectors, ev.e.vectors)
        return m.reshape(ds, de, ds, de)
    if family == "c":
        m = (dagger(pb(ev.rs.vectors, ev.e.vectors)) @ dagger(ev.setup.full_unitary)
             @ pb(ev.r_final.vectors, ev.s_final.vectors, ev.e_final.vectors))
        return m.reshape(dr * ds, de, dr, ds, de)
    raise ValueError(f"unknown family {family!r}")


def _product(*bases: np.ndarray) -> np.ndarray:
    out = bases[0]
    for b in bases[1:]:
        out = np.kron(out, b)
    return out


# ---------------------------------------------------------------------------
# amplitude tables

@dataclass(frozen=True)
class AmplitudeTable:
    family: str
    axes: tuple[str, ...]
    values: np.ndarray
    variance_real: np.ndarray
    variance_imag: np.ndarray
    theta_real: np.ndarray
    theta_imag: np.ndarray
    shots: int = 0

    def rows(self) -> list[list]:
        out = []
        for idx in np.ndindex(*self.values.shape):
            v = self.values[idx]
            out.append(list(map(int, idx)) + [float(v.real), float(v.imag),
                       float(self.variance_real[idx]), float(self.variance_imag[idx]),
                       float(self.theta_real[idx]), float(self.theta_imag[idx]), self.shots])
        return out

    def header(self) -> list[str]:
        return list(self.axes) + ["real", "imag", "var_real", "var_imag",
                                  "theta_real", "theta_imag", "shots"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in row])


def _empty(shape):
    return np.zeros(shape)


def exact_amplitude_table(ev: EvolvedState, family: str, theta: float = math.pi / 2) -> AmplitudeTable:
    """Invert closed-form interference probabilities for every element."""
    spec = family_specs(ev)[family]
    vals = np.zeros(spec.shape, dtype=complex)
    for task in family_tasks(ev, family, theta):
        a = task.amplitude()
        re = invert_amplitude(*_closed_form(a, theta, "real"), theta)
        im = -invert_amplitude(*_closed_form(a, theta, "imag"), theta)
        vals[task.label] = complex(re, im)
    th = np.full(spec.shape, theta)
    return AmplitudeTable(family, spec.axes, vals, _empty(spec.shape), _empty(spec.shape), th, th, 0)


def exact_tables(ev: EvolvedState, theta: float = math.pi / 2) -> dict[str, AmplitudeTable]:
    return {f: exact_amplitude_table(ev, f, theta) for f in FAMILIES}


class TableSampler:
    """Repeated sampled amplitude tables with cached circuits and angles.

    Noiseless runs sample each interference circuit from its exact outcome
    distribution; with gate noise every shot is a Pauli-error trajectory.
    ``mitigate`` picks per-element angles from the noisy model first.
    """

    def __init__(self, ev: EvolvedState, noise: NoiseModel | None = None,
                 mitigate: bool = False, theta: float = math.pi / 2):
        self.ev = ev
        self.noise = noise
        self.mitigate = mitigate
        self.specs = family_specs(ev)
        self.jobs = []  # (family, label, task)
        for fam in FAMILIES:
            for t in family_tasks(ev, fam, theta):
                for part in PARTS:
                    task = t.with_part(part)
                    if mitigate:
                        task = task.with_theta(select_mitigation_angle(task, noise))
                    self.jobs.append((fam, task))
        gate_noise = noise is not None and noise.has_gate_noise
        self._circuits = [build_interference_circuit(t) for _, t in self.jobs]
        self._dists = None if gate_noise else [circuits.measured_distribution(c) for c in self._circuits]

    def sample(self, shots: int, seed: int | np.random.SeedSequence | None) -> dict[str, AmplitudeTable]:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        seeds = ss.spawn(len(self.jobs))
        vals = {f: np.zeros(s.shape, dtype=complex) for f, s in self.specs.items()}
        var = {f: {p: np.zeros(s.shape) for p in PARTS} for f, s in self.specs.items()}
        ths = {f: {p: np.zeros(s.shape) for p in PARTS} for f, s in self.specs.items()}
        for i, (fam, task) in enumerate(self.jobs):
            if self._dists is not None:
                table = circuits.sample_distribution(self._dists[i], shots, self.noise, seeds[i])
            else:
                table = circuits.sample(self._circuits[i], shots, self.noise, seeds[i])
            value, v, _, _ = _estimate_from_counts(task, table, task.theta)
            vals[fam][task.label] += value if task.part == "real" else 1j * value
            var[fam][task.part][task.label] = v
            ths[fam][task.part][task.label] = task.theta
        return {f: AmplitudeTable(f, self.specs[f].axes, vals[f], var[f]["real"], var[f]["imag"],
                                  ths[f]["real"], ths[f]["imag"], shots) for f in FAMILIES}


def sampled_tables(ev: EvolvedState, shots: int, seed=None, noise: NoiseModel | None = None,
                   mitigate: bool = False) -> dict[str, AmplitudeTable]:
    return TableSampler(ev, noise, mitigate).sample(shots, seed)


# ---------------------------------------------------------------------------
# assembly

def assemble_quasiprobability(ev: EvolvedState, a, b, c) -> QuasiDistribution:
    """Rebuild the canonical-order quasiprobability from the three element families.

    ``Q = p_l p_n Re[ <l n|U^dag|l' n'> <l'|r' s'> <r'|r> b[s',n',s,n] a[r,s,l] ]``
    where ``<l n|U^dag|l' n'> = sum_{r''s''} c[l,n,r'',s'',n'] <r'' s''|l'>``.
    The overlaps ``<l'|r' s'>`` and ``<r'|r>`` between known eigenbases are
    computed classically; for product final eigenvectors they are
    permutations and Kronecker deltas.
    """
    a, b, c = (t.values if isinstance(t, AmplitudeTable) else np.asarray(t) for t in (a, b, c))
    specs = family_specs(ev)
    for name, arr in zip(FAMILIES, (a, b, c)):
        if arr.shape != specs[name].shape:
            raise ValueError(f"table {name} has shape {arr.shape}, expected {specs[name].shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"table {name} has missing entries")
    dr, ds, de = ev.dims
    rsf_lf = (dagger(_product(ev.r_final.vectors, ev.s_final.vectors)) @ ev.rs_final.vectors
              ).reshape(dr, ds, dr * ds)                       # <r's'|l'>
    rf_r = dagger(ev.r_final.vectors) @ ev.r.vectors            # <r'|r>
    c_l = np.einsum("lnxym,xyL->lnLm", c, rsf_lf)              # <l n|U^dag|l' n'>
    k = np.einsum("lnLm,abL,ar,bmsn,rsl->rslnabLm", c_l, np.conj(rsf_lf), rf_r, b, a)
    w = ev.rs.eigenvalues[None, None, :, None] * ev.e.eigenvalues[None, None, None, :]
    k = k * w[..., None, None, None, None]
    return QuasiDistribution(np.ascontiguousarray(k.real), ev, CANONICAL, "assembled",
                             np.ascontiguousarray(k.imag))
