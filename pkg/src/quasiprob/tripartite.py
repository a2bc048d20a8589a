"""Reference / system / environment model.

Tensor order is always (R, S, E). The interaction acts on S (x) E and is
embedded as ``1_R (x) U``; the initial joint state is ``rho_RS (x) rho_E``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import circuits
from .qlinalg import (
    DensityMatrix,
    SpectralDecomposition,
    as_matrix,
    conditional_mutual_information,
    conjugate,
    haar_unitary,
    hermitian_eig,
    mutual_information,
    partial_trace,
    random_density_matrix,
    tensor,
    unitarity_error,
)

R, S, E = 0, 1, 2
SPECTRUM_NAMES = ("rs", "r", "s", "e", "rs_final", "r_final", "s_final", "e_final")


@dataclass(frozen=True)
class TripartiteSetup:
    rho_RS: DensityMatrix
    rho_E: DensityMatrix
    U: np.ndarray
    label: str = ""

    def __post_init__(self):
        if len(self.rho_RS.dims) != 2:
            raise ValueError("rho_RS must carry dims (d_R, d_S)")
        u = as_matrix(self.U)
        d = self.rho_RS.dims[1] * self.rho_E.dim
        if u.shape != (d, d):
            raise ValueError(f"U must act on S (x) E, dimension {d}; got {u.shape}")
        err = unitarity_error(u)
        if err > 1e-10:
            raise ValueError(f"U is not unitary (max |U^dag U - I| = {err:.3g})")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "U", u)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.rho_RS.dims[0], self.rho_RS.dims[1], self.rho_E.dim)

    @property
    def full_unitary(self) -> np.ndarray:
        return tensor(np.eye(self.dims[0]), self.U)

    @property
    def rho_initial(self) -> DensityMatrix:
        return DensityMatrix(tensor(self.rho_RS.matrix, self.rho_E.matrix), self.dims, validate=False)

    # serialization: complex entries as [re, im] pairs, row-major
    def to_dict(self) -> dict:
        def enc(m):
            return [[[z.real, z.imag] for z in row] for row in np.asarray(m)]
        return {"dims": list(self.dims), "rho_RS": enc(self.rho_RS.matrix),
                "rho_E": enc(self.rho_E.matrix), "U": enc(self.U), "label": self.label}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TripartiteSetup":
        def dec(m):
            return np.array([[complex(re, im) for re, im in row] for row in m])
        dr, ds, de = d["dims"]
        return cls(DensityMatrix(dec(d["rho_RS"]), (dr, ds)), DensityMatrix(dec(d["rho_E"]), (de,)),
                   dec(d["U"]), d.get("label", ""))

    @classmethod
    def from_json(cls, s: str) -> "TripartiteSetup":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class EvolvedState:
    setup: TripartiteSetup
    rho_final: DensityMatrix
    spectra: Mapping[str, SpectralDecomposition] = field(repr=False)

    def __getattr__(self, name):
        # ev.rs, ev.s_final, ... resolve to the cached spectral data
        spectra = object.__getattribute__(self, "spectra")
        if name in spectra:
            return spectra[name]
        raise AttributeError(name)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.setup.dims

    def marginal(self, keep, final: bool = True) -> DensityMatrix:
        rho = self.rho_final if final else self.setup.rho_initial
        return partial_trace(rho, keep)


def _basis_decomposition(rho: np.ndarray, basis: np.ndarray, name: str) -> SpectralDecomposition:
    b = as_matrix(basis)
    if b.shape != rho.shape or unitarity_error(b) > 1e-10:
        raise ValueError(f"override basis for {name!r} must be a unitary of shape {rho.shape}")
    diag = np.conj(b).T @ rho @ b
    off = np.max(np.abs(diag - np.diag(np.diag(diag))))
    if off > 1e-9:
        raise ValueError(f"override basis for {name!r} does not diagonalize the state (off-diag {off:.3g})")
    return SpectralDecomposition(np.real(np.diag(diag)).copy(), b.copy())


def evolve(setup: TripartiteSetup, bases: Mapping[str, np.ndarray] | None = None) -> EvolvedState:
    """Apply ``1_R (x) U`` and cache every spectral decomposition used downstream.

    ``bases`` may replace the canonical eigenbasis of any of the states named
    in ``SPECTRUM_NAMES`` by an explicit unitary whose columns diagonalize it;
    useful when a spectrum is degenerate.
    """
    bases = dict(bases or {})
    unknown = set(bases) - set(SPECTRUM_NAMES)
    if unknown:
        raise ValueError(f"unknown spectra {sorted(unknown)}")
    rho0 = setup.rho_initial
    rho1 = DensityMatrix(conjugate(setup.full_unitary, rho0.matrix), setup.dims)
    states = {
        "rs": setup.rho_RS.matrix,
        "r": partial_trace(rho0, [R]).matrix,
        "s": partial_trace(rho0, [S]).matrix,
        "e": setup.rho_E.matrix,
        "rs_final": partial_trace(rho1, [R, S]).matrix,
        "r_final": partial_trace(rho1, [R]).matrix,
        "s_final": partial_trace(rho1, [S]).matrix,
        "e_final": partial_trace(rho1, [E]).matrix,
    }
    spectra = {}
    for name, m in states.items():
        spectra[name] = (_basis_decomposition(m, bases[name], name) if name in bases
                         else hermitian_eig(m))
    gap = np.max(np.abs(spectra["r"].eigenvalues - spectra["r_final"].eigenvalues))
    if gap > 1e-10:
        raise RuntimeError(f"reference spectrum changed under a local interaction ({gap:.3g})")
    return EvolvedState(setup, rho1, spectra)


def mutual_information_sr(ev: EvolvedState, final: bool) -> float:
    rho_rs = ev.marginal([R, S], final=final)
    return mutual_information(rho_rs, ([0], [1]))


def delta_mutual_information(ev: EvolvedState) -> float:
    """``I(S;R)`` lost during the interaction, in nats."""
    return mutual_information_sr(ev, final=False) - mutual_information_sr(ev, final=True)


def check_preservation(ev: EvolvedState) -> tuple[float, float]:
    """``(I(R;S)`` initially, ``I(R;SE)`` finally``)``."""
    lhs = mutual_information_sr(ev, final=False)
    rhs = mutual_information(ev.rho_final, ([R], [S, E]))
    return lhs, rhs


def cmi_identity(ev: EvolvedState) -> tuple[float, float]:
    """``(Delta I, I(E;R|S)`` of the final state``)``."""
    return delta_mutual_information(ev), conditional_mutual_information(ev.rho_final, [E], [R], [S])


def mutual_information_se_final(ev: EvolvedState) -> float:
    return mutual_information(ev.marginal([S, E]), ([0], [1]))


def mutual_information_sr_e_final(ev: EvolvedState) -> float:
    return mutual_information(ev.rho_final, ([R, S], [E]))


# ---------------------------------------------------------------------------
# constructors

def bell_diagonal_state(p) -> DensityMatrix:
    """``sum_l p_l |psi(l)><psi(l)|`` with the Bell labels of :func:`circuits.bell_probabilities`."""
    p = np.asarray(p, dtype=float)
    if p.shape != (4,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("need four nonnegative weights summing to one")
    b = circuits.BELL_VECTORS
    return DensityMatrix((b * p) @ b.conj().T, (2, 2))


def thermal_state(beta: float) -> DensityMatrix:
    p0 = 1.0 / (1.0 + np.exp(-beta))
    return DensityMatrix(np.diag([p0, 1.0 - p0]).astype(complex), (2,))


def experiment_setup(theta1: float = 0.7098 * np.pi, theta2: float = 1.7059 * np.pi,
                     beta: float = 1.0) -> TripartiteSetup:
    """Three-qubit experiment: Bell-diagonal R/S, thermal E, controlled-Y interaction."""
    return TripartiteSetup(bell_diagonal_state(circuits.bell_probabilities(theta1, theta2)),
                           thermal_state(beta), circuits.u_se(),
                           label=f"experiment theta1={theta1!r} theta2={theta2!r} beta={beta!r}")


def random_setup(rng: np.random.Generator, dims: tuple[int, int, int] = (2, 2, 2),
                 label: str = "") -> TripartiteSetup:
    """Wishart-random full-rank states and a Haar-random interaction."""
    dr, ds, de = dims
    return TripartiteSetup(DensityMatrix(random_density_matrix(dr * ds, rng), (dr, ds)),
                           DensityMatrix(random_density_matrix(de, rng), (de,)),
                           haar_unitary(ds * de, rng), label)


def identity_setup(rho_RS: DensityMatrix, rho_E: DensityMatrix) -> TripartiteSetup:
    return TripartiteSetup(rho_RS, rho_E, np.eye(rho_RS.dims[1] * rho_E.dim), "identity")
