"""Gate-level statevector simulation, shot sampling and the experiment's circuits.

Qubit ``0`` is the most significant bit of a statevector index and the
leftmost character of every bitstring. Bitstrings list measured qubits in
the order given to the ``measure`` gate.

Noise is handled two ways that share one :class:`NoiseModel`:

* :func:`sample` unravels depolarizing noise into random Pauli insertions
  (one trajectory per shot) and flips read-out bits at random;
* :func:`noisy_probabilities` propagates the density matrix through the same
  channels and returns the exact noisy outcome distribution.

Seeds: ``sample`` spawns three child streams from ``SeedSequence(seed)`` --
gate errors, measurement, read-out -- so switching noise off leaves the
measurement stream untouched. Repetitions use ``SeedSequence(seed).spawn(reps)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .qlinalg import dagger, unitarity_error

_SQ2 = 1 / math.sqrt(2)
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    "X": PAULI["X"],
    "Y": PAULI["Y"],
    "Z": PAULI["Z"],
}
# Y as written in the interaction: |0><1| - |1><0| = Z X
Y_INTERACTION = np.array([[0, 1], [-1, 0]], dtype=complex)

REGISTERS_FULL = ("ancilla-1", "ancilla-2", "R", "S", "E", "ancilla-3")


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def controlled(u: np.ndarray, n_controls: int = 1) -> np.ndarray:
    """Matrix of ``u`` controlled on ``n_controls`` leading qubits all being 1."""
    d = u.shape[0]
    size = d * 2 ** n_controls
    out = np.eye(size, dtype=complex)
    out[size - d:, size - d:] = u
    return out


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    angle: float | None = None
    matrix: np.ndarray | None = field(default=None, compare=False)

    KINDS = ("RY", "RX", "H", "X", "Y", "Z", "CNOT", "CZ", "U", "MEASURE")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        object.__setattr__(self, "controls", tuple(int(q) for q in self.controls))
        qubits = self.targets + self.controls
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"gate {self.kind} uses a qubit twice: {qubits}")
        if self.kind in ("RY", "RX") and self.angle is None:
            raise ValueError(f"{self.kind} needs an angle")
        if self.kind == "U":
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2 ** len(self.targets),) * 2:
                raise ValueError(f"U payload shape {m.shape} does not match {len(self.targets)} targets")
            if unitarity_error(m) > 1e-10:
                raise ValueError("U payload is not unitary")
            object.__setattr__(self, "matrix", m)
        elif self.kind in ("CNOT", "CZ"):
            if len(self.targets) != 1 or len(self.controls) != 1:
                raise ValueError(f"{self.kind} takes one control and one target")
        elif self.kind != "MEASURE" and len(self.targets) != 1:
            raise ValueError(f"{self.kind} acts on exactly one target")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + self.targets

    def unitary(self) -> np.ndarray:
        """Matrix on ``self.qubits`` (controls first, then targets)."""
        if self.kind == "RY":
            base = ry(self.angle)
        elif self.kind == "RX":
            base = rx(self.angle)
        elif self.kind == "CNOT":
            base = _FIXED["X"]
        elif self.kind == "CZ":
            base = _FIXED["Z"]
        elif self.kind == "U":
            base = self.matrix
        elif self.kind == "MEASURE":
            raise ValueError("measurement has no unitary")
        else:
            base = _FIXED[self.kind]
        return controlled(base, len(self.controls)) if self.controls else base

    def inverse(self) -> "Gate":
        if self.kind in ("RY", "RX"):
            return Gate(self.kind, self.targets, self.controls, -self.angle)
        if self.kind == "U":
            return Gate("U", self.targets, self.controls, matrix=dagger(self.matrix))
        if self.kind == "MEASURE":
            raise ValueError("measurement is not invertible")
        return self

    def shifted(self, mapping: Sequence[int]) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.targets),
                    tuple(mapping[q] for q in self.controls), self.angle, self.matrix)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "targets": list(self.targets), "controls": list(self.controls)}
        if self.angle is not None:
            d["angle"] = self.angle
        if self.matrix is not None:
            d["matrix"] = [[[z.real, z.imag] for z in row] for row in self.matrix]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        m = d.get("matrix")
        if m is not None:
            m = np.array([[complex(re, im) for re, im in row] for row in m])
        return cls(d["kind"], tuple(d["targets"]), tuple(d.get("controls", ())), d.get("angle"), m)


class Circuit:
    """Ordered gate list on ``num_qubits`` qubits with named registers."""

    def __init__(self, num_qubits: int, registers: dict[str, Sequence[int]] | None = None):
        if num_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        self.num_qubits = num_qubits
        self.gates: list[Gate] = []
        self.registers: dict[str, tuple[int, ...]] = {}
        for name, qs in (registers or {}).items():
            self.registers[name] = tuple(qs)

    def __repr__(self) -> str:
        return f"Circuit({self.num_qubits} qubits, {len(self.gates)} gates)"

    def qubit(self, q) -> int:
        if isinstance(q, str):
            reg = self.registers[q]
            if len(reg) != 1:
                raise ValueError(f"register {q!r} has {len(reg)} qubits")
            return reg[0]
        return int(q)

    def append(self, gate: Gate) -> "Circuit":
        if any(q < 0 or q >= self.num_qubits for q in gate.qubits):
            raise ValueError(f"gate {gate.kind} on {gate.qubits} outside {self.num_qubits} qubits")
        if self.measured_qubits and gate.kind != "MEASURE":
            raise ValueError("gates after the measurement layer are not supported")
        if gate.kind == "MEASURE" and self.measured_qubits:
            raise ValueError("circuit already has a measurement layer")
        self.gates.append(gate)
        return self

    def _one(self, kind, q, angle=None):
        return self.append(Gate(kind, (self.qubit(q),), (), angle))

    def h(self, q):
        return self._one("H", q)

    def x(self, q):
        return self._one("X", q)

    def y(self, q):
        return self._one("Y", q)

    def z(self, q):
        return self._one("Z", q)

    def ry(self, theta, q):
        return self._one("RY", q, theta)

    def rx(self, theta, q):
        return self._one("RX", q, theta)

    def cnot(self, control, target):
        return self.append(Gate("CNOT", (self.qubit(target),), (self.qubit(control),)))

    def cz(self, control, target):
        return self.append(Gate("CZ", (self.qubit(target),), (self.qubit(control),)))

    def unitary(self, matrix, targets: Sequence, controls: Sequence = ()):
        return self.append(Gate("U", tuple(self.qubit(q) for q in targets),
                                tuple(self.qubit(q) for q in controls), matrix=matrix))

    def measure(self, qubits: Sequence | None = None):
        qs = range(self.num_qubits) if qubits is None else qubits
        return self.append(Gate("MEASURE", tuple(self.qubit(q) for q in qs)))

    @property
    def measured_qubits(self) -> tuple[int, ...]:
        for g in self.gates:
            if g.kind == "MEASURE":
                return g.targets
        return ()

    @property
    def unitary_gates(self) -> list[Gate]:
        return [g for g in self.gates if g.kind != "MEASURE"]

    def compose(self, other: "Circuit", qubits: Sequence[int] | None = None) -> "Circuit":
        """Append ``other``'s gates with its qubit ``i`` mapped to ``qubits[i]``."""
        mapping = list(range(other.num_qubits)) if qubits is None else list(qubits)
        for g in other.gates:
            self.append(g.shifted(mapping))
        return self

    def inverse(self) -> "Circuit":
        inv = Circuit(self.num_qubits, self.registers)
        for g in reversed(self.unitary_gates):
            inv.append(g.inverse())
        return inv

    def copy(self) -> "Circuit":
        c = Circuit(self.num_qubits, self.registers)
        c.gates = list(self.gates)
        return c

    def to_dict(self) -> dict:
        return {"num_qubits": self.num_qubits,
                "registers": {k: list(v) for k, v in self.registers.items()},
                "gates": [g.to_dict() for g in self.gates]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        c = cls(d["num_qubits"], d.get("registers"))
        for g in d["gates"]:
            c.append(Gate.from_dict(g))
        return c

    @classmethod
    def from_json(cls, s: str) -> "Circuit":
        return cls.from_dict(json.loads(s))


# ---------------------------------------------------------------------------
# exact simulation

def _apply(state: np.ndarray, u: np.ndarray, qubits: Sequence[int], offset: int = 0) -> np.ndarray:
    """Apply ``u`` to tensor axes ``offset + q``; leading axes are spectators."""
    k = len(qubits)
    axes = [offset + q for q in qubits]
    t = np.tensordot(u.reshape((2,) * (2 * k)), state, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(t, list(range(k)), axes)


def simulate(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    """Exact statevector of a measurement-free circuit (trailing measurement is an error)."""
    if circuit.measured_qubits:
        raise ValueError("simulate() needs a circuit without measurements; use probabilities()")
    return _run_unitary(circuit, initial)


def _run_unitary(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    n = circuit.num_qubits
    if initial is None:
        state = np.zeros((2,) * n, dtype=complex)
        state[(0,) * n] = 1.0
    else:
        state = np.asarray(initial, dtype=complex).reshape((2,) * n)
    for g in circuit.unitary_gates:
        state = _apply(state, g.unitary(), g.qubits)
    return state.reshape(-1)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    d = 2 ** circuit.num_qubits
    cols = [_run_unitary(circuit, np.eye(d, dtype=complex)[:, j]) for j in range(d)]
    return np.column_stack(cols)


def _marginal(probs: np.ndarray, n: int, qubits: Sequence[int]) -> np.ndarray:
    t = probs.reshape((2,) * n)
    rest = tuple(q for q in range(n) if q not in qubits)
    t = t.sum(axis=rest) if rest else t
    order = sorted(qubits)
    t = np.transpose(t, [order.index(q) for q in qubits])
    return t.reshape(-1)


def bitstrings(m: int) -> list[str]:
    return [format(i, f"0{m}b") for i in range(2 ** m)]


def probabilities(circuit: Circuit) -> dict[str, float]:
    """Exact noiseless outcome distribution of the measured qubits."""
    qs = circuit.measured_qubits or tuple(range(circuit.num_qubits))
    psi = _run_unitary(circuit)
    p = _marginal(np.abs(psi) ** 2, circuit.num_qubits, qs)
    return dict(zip(bitstrings(len(qs)), p.tolist()))


# ---------------------------------------------------------------------------
# noise

@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing gate noise plus classical read-out flips.

    After every gate on ``k`` qubits the state is replaced by the maximally
    mixed state on those qubits with probability ``p1`` (k = 1) or ``p2``
    (k >= 2). ``readout = (eps01, eps10)``: probability to read 1 when the
    qubit is 0, and 0 when it is 1.
    """

    p1: float = 0.0
    p2: float = 0.0
    readout: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "readout", tuple(float(e) for e in self.readout))
        for v in (self.p1, self.p2) + self.readout:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"noise parameter {v} outside [0, 1]")

    @property
    def has_gate_noise(self) -> bool:
        return self.p1 > 0 or self.p2 > 0

    def gate_error(self, g: Gate) -> float:
        return self.p1 if len(g.qubits) == 1 else self.p2

    def confusion(self) -> np.ndarray:
        e01, e10 = self.readout
        # column = true bit, row = reported bit
        return np.array([[1 - e01, e10], [e01, 1 - e10]])

    def to_dict(self) -> dict:
        return {"p1": self.p1, "p2": self.p2, "readout": list(self.readout)}


def _depolarize(rho: np.ndarray, qubits: Sequence[int], p: float, n: int) -> np.ndarray:
    """``(1-p) rho + p Tr_Q(rho) (x) I_Q / 2^k`` on the (2,)*2n tensor."""
    if p == 0.0:
        return rho
    qs = list(qubits)
    k = len(qs)
    # trace out Q
    row = list(range(n))
    col = [n + i if i not in qs else i for i in range(n)]
    keep = [i for i in range(n) if i not in qs]
    red = np.einsum(rho, row + col, keep + [n + i for i in keep])
    eye = np.eye(2 ** k).reshape((2,) * (2 * k)) / 2 ** k
    full = np.multiply.outer(red, eye)  # axes: keep_rows, keep_cols, q_rows, q_cols
    src = keep + [n + i for i in keep] + qs + [n + i for i in qs]
    mixed = np.moveaxis(full, list(range(2 * n)), src)
    return (1 - p) * rho + p * mixed


def density_evolve(rho: np.ndarray, gates: Iterable[Gate], n: int,
                   noise: NoiseModel | None = None) -> np.ndarray:
    """Propagate a (2,)*2n density tensor through gates with depolarizing noise."""
    for g in gates:
        if g.kind == "MEASURE":
            continue
        u = g.unitary()
        rho = _apply(rho, u, g.qubits)
        rho = np.conj(_apply(np.conj(rho), u, [n + q for q in g.qubits]))
        if noise is not None:
            rho = _depolarize(rho, g.qubits, noise.gate_error(g), n)
    return rho


def initial_density(n: int) -> np.ndarray:
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    return rho


def readout_distribution(rho: np.ndarray, n: int, qubits: Sequence[int],
                         noise: NoiseModel | None = None) -> np.ndarray:
    diag = np.real(np.einsum(rho.reshape(2 ** n, 2 ** n), [0, 0], [0]))
    p = _marginal(np.clip(diag, 0.0, None), n, qubits).reshape((2,) * len(qubits))
    if noise is not None and any(noise.readout):
        conf = noise.confusion()
        for ax in range(len(qubits)):
            p = np.moveaxis(np.tensordot(conf, p, axes=([1], [ax])), 0, ax)
    return p.reshape(-1)


def noisy_probabilities(circuit: Circuit, noise: NoiseModel | None = None) -> dict[str, float]:
    """Exact outcome distribution under ``noise`` (density-matrix propagation)."""
    n = circuit.num_qubits
    qs = circuit.measured_qubits or tuple(range(n))
    rho = density_evolve(initial_density(n), circuit.gates, n, noise)
    p = readout_distribution(rho, n, qs, noise)
    return dict(zip(bitstrings(len(qs)), p.tolist()))


# ---------------------------------------------------------------------------
# sampling

@dataclass
class ShotTable:
    counts: dict[str, int]
    shots: int
    seed: int | None = None

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def frequency(self, bits: str) -> float:
        return self.counts.get(bits, 0) / self.shots

    def frequencies(self) -> dict[str, float]:
        return {k: v / self.shots for k, v in self.counts.items()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bitstring", "count"])
            for k in sorted(self.counts):
                w.writerow([k, self.counts[k]])


def _apply_pauli_errors(states: np.ndarray, qubits: Sequence[int], p: float,
                        rng: np.random.Generator) -> np.ndarray:
    hit = np.flatnonzero(rng.random(states.shape[0]) < p)
    if hit.size == 0:
        return states
    labels = rng.integers(0, 4, size=(hit.size, len(qubits)))
    for j, q in enumerate(qubits):
        for code, name in ((1, "X"), (2, "Y"), (3, "Z")):
            rows = hit[labels[:, j] == code]
            if rows.size:
                states[rows] = _apply(states[rows], PAULI[name], [q], offset=1)
    return states


def _trajectory_probabilities(circuit: Circuit, shots: int, noise: NoiseModel,
                              rng: np.random.Generator) -> np.ndarray:
    n = circuit.num_qubits
    states = np.zeros((shots,) + (2,) * n, dtype=complex)
    states[(slice(None),) + (0,) * n] = 1.0
    for g in circuit.unitary_gates:
        states = _apply(states, g.unitary(), g.qubits, offset=1)
        p = noise.gate_error(g)
        if p > 0:
            states = _apply_pauli_errors(states, g.qubits, p, rng)
    probs = np.abs(states) ** 2
    qs = circuit.measured_qubits or tuple(range(n))
    rest = tuple(1 + q for q in range(n) if q not in qs)
    t = probs.sum(axis=rest) if rest else probs
    order = sorted(qs)
    t = np.transpose(t, [0] + [1 + order.index(q) for q in qs])
    return t.reshape(shots, -1)


def _seed_streams(seed) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(3)


def _finish(outcomes: np.ndarray, m: int, shots: int, noise: NoiseModel | None,
            read_ss: np.random.SeedSequence, seed) -> ShotTable:
    if noise is not None and any(noise.readout):
        bits = (outcomes[:, None] >> np.arange(m - 1, -1, -1)) & 1
        r = np.random.default_rng(read_ss).random(bits.shape)
        e01, e10 = noise.readout
        flip = np.where(bits == 0, r < e01, r < e10)
        bits = bits ^ flip.astype(bits.dtype)
        outcomes = bits @ (1 << np.arange(m - 1, -1, -1))
    counts = np.bincount(outcomes, minlength=2 ** m)
    labels = bitstrings(m)
    table = {labels[i]: int(c) for i, c in enumerate(counts) if c}
    return ShotTable(table, shots, seed if isinstance(seed, int) else None)


def sample_distribution(p: np.ndarray, shots: int, noise: NoiseModel | None = None,
                        seed: int | np.random.SeedSequence | None = None) -> ShotTable:
    """Sample from a known outcome distribution over ``log2(len(p))`` bits.

    Gate noise in ``noise`` is ignored; read-out flips are applied. Uses the
    same random streams as :func:`sample`, so for a noiseless circuit
    ``sample(c, ...)`` equals ``sample_distribution(exact probabilities, ...)``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.asarray(p, dtype=float)
    m = int(round(math.log2(p.size)))
    if 2 ** m != p.size:
        raise ValueError("distribution length must be a power of two")
    _, meas_ss, read_ss = _seed_streams(seed)
    u = np.random.default_rng(meas_ss).random(shots)
    cdf = np.cumsum(p)
    cdf[-1] = np.inf
    outcomes = np.searchsorted(cdf, u, side="right")
    return _finish(outcomes, m, shots, noise, read_ss, seed)


def measured_distribution(circuit: Circuit) -> np.ndarray:
    """Noiseless Born distribution of the measured qubits, in bitstring order."""
    n = circuit.num_qubits
    qs = circuit.measured_qubits or tuple(range(n))
    return _marginal(np.abs(_run_unitary(circuit)) ** 2, n, qs)


def sample(circuit: Circuit, shots: int, noise: NoiseModel | None = None,
           seed: int | np.random.SeedSequence | None = None) -> ShotTable:
    """Sample ``shots`` outcomes of the measured qubits.

    Each shot draws one uniform from the measurement stream and inverts the
    cumulative distribution, so runs with and without (zero) noise consume
    identical random numbers.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if noise is None or not noise.has_gate_noise:
        return sample_distribution(measured_distribution(circuit), shots, noise, seed)
    gate_ss, meas_ss, read_ss = _seed_streams(seed)
    m = len(circuit.measured_qubits or range(circuit.num_qubits))
    u = np.random.default_rng(meas_ss).random(shots)
    probs = _trajectory_probabilities(circuit, shots, noise, np.random.default_rng(gate_ss))
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = np.inf
    outcomes = (cdf > u[:, None]).argmax(axis=1)
    return _finish(outcomes, m, shots, noise, read_ss, seed)


def repetition_seeds(seed: int | None, reps: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(reps)


# ---------------------------------------------------------------------------
# experiment constructions

def u_se() -> np.ndarray:
    """Controlled interaction ``|0><0|_S (x) 1_E + |1><1|_S (x) Y_E`` (S is the first factor)."""
    out = np.zeros((4, 4), dtype=complex)
    out[:2, :2] = np.eye(2)
    out[2:, 2:] = Y_INTERACTION
    return out


def bell_probabilities(theta1: float, theta2: float) -> tuple[float, float, float, float]:
    """Bell-state weights produced by :func:`build_bell_diagonal_prep`.

    Labels: 0 = (|00>+|11>)/sqrt2, 1 = (|00>-|11>)/sqrt2, 2 = (|01>+|10>)/sqrt2,
    3 = (|01>-|10>)/sqrt2 on (R, S).
    """
    c1, s1 = math.cos(theta1 / 2) ** 2, math.sin(theta1 / 2) ** 2
    c2, s2 = math.cos(theta2 / 2) ** 2, math.sin(theta2 / 2) ** 2
    return (c1 * c2, s1 * c2, c1 * s2, s1 * s2)


BELL_VECTORS = np.array([[1, 0, 0, 1], [1, 0, 0, -1], [0, 1, 1, 0], [0, 1, -1, 0]],
                        dtype=complex).T * _SQ2  # columns


def build_bell_diagonal_prep(theta1: float, theta2: float) -> Circuit:
    """Four-qubit preparation on (ancilla-1, ancilla-2, R, S)."""
    c = Circuit(4, {"ancilla-1": [0], "ancilla-2": [1], "R": [2], "S": [3]})
    c.ry(theta1, "ancilla-1").ry(theta2, "ancilla-2")
    c.cnot("ancilla-1", "R").cnot("ancilla-2", "S")
    c.h("R").cnot("R", "S")
    return c


def thermal_angle(beta: float) -> float:
    """RY angle giving ``P(0) = 1 / (1 + exp(-beta))``."""
    p0 = 1.0 / (1.0 + math.exp(-beta))
    return 2.0 * math.acos(math.sqrt(p0))


def build_thermal_prep(beta: float) -> Circuit:
    """Two-qubit preparation on (E, ancilla-3); E ends up diagonal and thermal."""
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    c = Circuit(2, {"E": [0], "ancilla-3": [1]})
    c.ry(thermal_angle(beta), "E").cnot("E", "ancilla-3")
    return c


def append_u_se(c: Circuit, s, e) -> Circuit:
    """CNOT then CZ, both controlled on S, realizes :func:`u_se`."""
    return c.cnot(s, e).cz(s, e)


def build_full_circuit(theta1: float, theta2: float, beta: float, interact: bool = True) -> Circuit:
    """Six-qubit circuit on (ancilla-1, ancilla-2, R, S, E, ancilla-3)."""
    c = Circuit(6, {name: [i] for i, name in enumerate(REGISTERS_FULL)})
    c.compose(build_bell_diagonal_prep(theta1, theta2), [0, 1, 2, 3])
    c.compose(build_thermal_prep(beta), [4, 5])
    if interact:
        append_u_se(c, "S", "E")
    return c


def append_bell_measurement(c: Circuit, r, s) -> Circuit:
    """Rotate the Bell basis of (r, s) onto computational states and measure them.

    Outcome bits ``xy`` correspond to Bell label ``x + 2 y``.
    """
    c.cnot(r, s).h(r)
    return c.measure([r, s])


def bell_label(bits: str) -> int:
    return int(bits[0]) + 2 * int(bits[1])
