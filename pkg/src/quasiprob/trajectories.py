"""Quasiprobability trajectories and the fluctuation theorems they satisfy.

A trajectory ``zeta = (r, s, l, n, r', s', l', n')`` collects eigenlabels of
rho_R, rho_S, rho_RS, rho_E before the interaction and of their counterparts
after it. Labels follow the (descending, canonicalized) order of the spectral
decompositions cached on :class:`~quasiprob.tripartite.EvolvedState`.
Distributions are dense ``numpy`` arrays with axes in that order.

With every projector rank one the canonical forward trajectory is::

    Q = p_l p_n Re[ <l n|U^dag|l' n'> <l'|r' s'> <r' s' n'|U|r s n> <r s|l> ]

and the retrodiction trajectory starts from ``rho'_RS (x) rho'_E`` with the
projector order reversed.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .qlinalg import dagger
from .tripartite import (
    EvolvedState,
    TripartiteSetup,
    delta_mutual_information,
    evolve,
)

SUPPORT_TOL = 1e-14
ZERO_EIG = 1e-14
PROB_TOL = 1e-12
AXES = ("r", "s", "l", "n", "r'", "s'", "l'", "n'")


class TrajectoryIndex(NamedTuple):
    r: int
    s: int
    l: int
    n: int
    r_f: int
    s_f: int
    l_f: int
    n_f: int


class GammaIndex(NamedTuple):
    s: int
    n: int
    s_f: int
    n_f: int


class TauIndex(NamedTuple):
    l: int
    l_f: int
    n: int
    n_f: int


class Ordering(NamedTuple):
    """Which projector acts first, before and after the interaction.

    ``initial`` / ``final`` is ``"global"`` (Pi_ln, Pi_l'n') or ``"local"``
    (Pi_rs, Pi_r's'). The canonical trajectory applies Pi_ln then Pi_rs,
    evolves, then Pi_r's' then Pi_l'n'.
    """

    initial: str = "global"
    final: str = "local"

    @property
    def name(self) -> str:
        return f"{self.initial}-{self.final}"

    @property
    def pairs_local_labels(self) -> bool:
        """True when U connects Pi_rs to Pi_r's' directly, which pins r = r'.

        Only then does the pointwise relation of :func:`detailed_ft_check` hold;
        the other two orders leave weight on r != r'.
        """
        return self.initial != self.final


CANONICAL = Ordering("global", "local")
ORDERINGS = (CANONICAL, Ordering("local", "local"), Ordering("global", "global"),
             Ordering("local", "global"))


@dataclass(frozen=True)
class QuasiDistribution:
    values: np.ndarray
    ev: EvolvedState = field(repr=False)
    ordering: Ordering = CANONICAL
    kind: str = "forward"
    imag: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, zeta) -> float:
        return float(self.values[tuple(zeta)])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def total(self) -> float:
        return float(np.sum(self.values))

    def min(self) -> float:
        return float(np.min(self.values))

    def items(self) -> Iterator[tuple[TrajectoryIndex, float]]:
        for idx in np.ndindex(*self.values.shape):
            yield TrajectoryIndex(*idx), float(self.values[idx])

    @property
    def support(self) -> np.ndarray:
        return np.abs(self.values) > SUPPORT_TOL


def lattice_shape(ev: EvolvedState) -> tuple[int, ...]:
    dr, ds, de = ev.dims
    return (dr, ds, dr * ds, de) * 2


def _product_basis(*vecs: np.ndarray) -> np.ndarray:
    """Columns of the Kronecker product basis, labels in argument order."""
    out = vecs[0]
    for v in vecs[1:]:
        out = np.einsum("ai,bj->abij", out, v).reshape(out.shape[0] * v.shape[0], -1)
    return out


def _trajectory_bases(ev: EvolvedState) -> dict[str, np.ndarray]:
    return {
        "rsn": _product_basis(ev.r.vectors, ev.s.vectors, ev.e.vectors),
        "ln": _product_basis(ev.rs.vectors, ev.e.vectors),
        "rsn_f": _product_basis(ev.r_final.vectors, ev.s_final.vectors, ev.e_final.vectors),
        "ln_f": _product_basis(ev.rs_final.vectors, ev.e_final.vectors),
    }


def _complex_kernel(ev: EvolvedState, ordering: Ordering) -> np.ndarray:
    """``Tr(U^dag X U Y)`` over the lattice, without eigenvalue weights.

    The mirrored retrodiction string ``Tr(U Y^dag U^dag X^dag)`` is its complex
    conjugate, so both distributions share one kernel and its rounding.
    """
    dr, ds, de = ev.dims
    drs = dr * ds
    b = _trajectory_bases(ev)
    u = ev.setup.full_unitary
    # overlaps <rs|l> and <l'|r's'>
    rs_l = (dagger(_product_basis(ev.r.vectors, ev.s.vectors)) @ ev.rs.vectors).reshape(dr, ds, drs)
    lf_rsf = (dagger(ev.rs_final.vectors) @ _product_basis(ev.r_final.vectors, ev.s_final.vectors)
              ).reshape(drs, dr, ds)

    def elem(fin, ini):
        return dagger(b[fin]) @ u @ b[ini]          # <final|U|initial>

    # Y = yc |y_out><y_in|, X = xc |x_out><x_in|;  Tr(U^dag X U Y) = xc yc <x_in|U|y_out> <x_out|U|y_in>^*
    m_rsf_rs = elem("rsn_f", "rsn").reshape(dr, ds, de, dr, ds, de)   # r's'n', rsn
    m_lf_l = elem("ln_f", "ln").reshape(drs, de, drs, de)            # l'n', ln
    m_rsf_l = elem("rsn_f", "ln").reshape(dr, ds, de, drs, de)        # r's'n', ln
    m_lf_rs = elem("ln_f", "rsn").reshape(drs, de, dr, ds, de)        # l'n', rsn

    yc = rs_l if ordering.initial == "global" else np.conj(rs_l)         # [r,s,l]
    xc = lf_rsf if ordering.final == "local" else np.conj(lf_rsf)        # [l',r',s']
    # index letters: r s l n | a b L m  for r' s' l' n'
    if ordering.initial == "global" and ordering.final == "local":
        # x_in = r's'n', y_out = rsn, x_out = l'n', y_in = ln
        k = np.einsum("abmrsn,Lmln->rslnabLm", m_rsf_rs, np.conj(m_lf_l))
    elif ordering.initial == "local" and ordering.final == "local":
        # y_out = ln, y_in = rsn
        k = np.einsum("abmln,Lmrsn->rslnabLm", m_rsf_l, np.conj(m_lf_rs))
    elif ordering.initial == "global" and ordering.final == "global":
        # x_in = l'n', x_out = r's'n'
        k = np.einsum("Lmrsn,abmln->rslnabLm", m_lf_rs, np.conj(m_rsf_l))
    elif ordering.initial == "local" and ordering.final == "global":
        k = np.einsum("Lmln,abmrsn->rslnabLm", m_lf_l, np.conj(m_rsf_rs))
    else:
        raise ValueError(f"unknown ordering {ordering}")
    k = k * yc[:, :, :, None, None, None, None, None] * np.transpose(xc, (1, 2, 0))[None, None, None, None, :, :, :, None]
    return k


def _weights(ev: EvolvedState, final: bool) -> np.ndarray:
    if final:
        return (ev.rs_final.eigenvalues[None, None, None, None, None, None, :, None]
                * ev.e_final.eigenvalues[None, None, None, None, None, None, None, :])
    return (ev.rs.eigenvalues[None, None, :, None, None, None, None, None]
            * ev.e.eigenvalues[None, None, None, :, None, None, None, None])


def quasiprobability(ev: EvolvedState, ordering: Ordering = CANONICAL) -> QuasiDistribution:
    """Forward quasiprobability ``Re Tr(U^dag X U Y rho)`` on the full lattice."""
    k = _complex_kernel(ev, ordering) * _weights(ev, final=False)
    return QuasiDistribution(np.ascontiguousarray(k.real), ev, ordering, "forward",
                             np.ascontiguousarray(k.imag))


def retrodiction_quasiprobability(ev: EvolvedState, ordering: Ordering = CANONICAL) -> QuasiDistribution:
    """Retrodiction trajectory from ``rho'_RS (x) rho'_E``, projector order mirrored."""
    k = np.conj(_complex_kernel(ev, ordering)) * _weights(ev, final=True)
    return QuasiDistribution(np.ascontiguousarray(k.real), ev, ordering, "retrodiction",
                             np.ascontiguousarray(k.imag))


def marginal_gamma(q: QuasiDistribution) -> np.ndarray:
    """``P[gamma]`` with axes (s, n, s', n'): sum over l, l', r, r'."""
    return q.values.sum(axis=(0, 2, 4, 6))


def marginal_tau(q: QuasiDistribution) -> np.ndarray:
    """``P'[tau]`` with axes (l, l', n, n'): sum over s, s', r, r'."""
    return np.transpose(q.values.sum(axis=(0, 1, 4, 5)), (0, 2, 1, 3))


def _local_transition(ev: EvolvedState, retro: bool) -> np.ndarray:
    """``|<s'n'|U|sn>|^2`` with axes (s, n, s', n'), U reduced onto S (x) E."""
    dr, ds, de = ev.dims
    u = ev.setup.U
    ini = _product_basis(ev.s.vectors, ev.e.vectors)
    fin = _product_basis(ev.s_final.vectors, ev.e_final.vectors)
    amp = dagger(ini) @ dagger(u) @ fin if retro else (dagger(fin) @ u @ ini).T
    return (np.abs(amp) ** 2).reshape(ds, de, ds, de)


def gamma_closed_form(ev: EvolvedState) -> np.ndarray:
    """``|<s'n'|U|sn>|^2 p_s p_n``, axes (s, n, s', n')."""
    t = _local_transition(ev, retro=False)
    return t * ev.s.eigenvalues[:, None, None, None] * ev.e.eigenvalues[None, :, None, None]


def retro_gamma_closed_form(ev: EvolvedState) -> np.ndarray:
    """``|<sn|U^dag|s'n'>|^2 p_s' p_n'``, axes (s, n, s', n')."""
    t = _local_transition(ev, retro=True)
    return t * ev.s_final.eigenvalues[None, None, :, None] * ev.e_final.eigenvalues[None, None, None, :]


def tau_closed_form(ev: EvolvedState) -> np.ndarray:
    """``|<l'n'|U|ln>|^2 p_l p_n``, axes (l, l', n, n')."""
    dr, ds, de = ev.dims
    ini = _product_basis(ev.rs.vectors, ev.e.vectors)
    fin = _product_basis(ev.rs_final.vectors, ev.e_final.vectors)
    t = (np.abs(dagger(fin) @ ev.setup.full_unitary @ ini) ** 2).reshape(dr * ds, de, dr * ds, de)
    t = np.transpose(t, (2, 0, 3, 1))  # l, l', n, n'
    return t * ev.rs.eigenvalues[:, None, None, None] * ev.e.eigenvalues[None, None, :, None]


# ---------------------------------------------------------------------------
# stochastic quantities

def delta_iota(p_l, p_s, p_r, p_lf, p_sf, p_rf):
    """Stochastic mutual-information change ``ln(p_l / p_s p_r) - ln(p_l' / p_s' p_r')``."""
    return np.log(p_l / (p_s * p_r)) - np.log(p_lf / (p_sf * p_rf))


@dataclass(frozen=True)
class StochasticRecord:
    delta_iota: float
    sigma_S: float
    sigma_SR: float
    valid: bool


@dataclass(frozen=True)
class StochasticTable:
    """Per-trajectory ``delta_iota``, ``sigma_S``, ``sigma_SR`` on the full lattice.

    Entries referencing a zero eigenvalue are NaN and flagged invalid.
    """

    delta_iota: np.ndarray
    sigma_S: np.ndarray
    sigma_SR: np.ndarray
    valid: np.ndarray

    def record(self, zeta) -> StochasticRecord:
        z = tuple(zeta)
        return StochasticRecord(float(self.delta_iota[z]), float(self.sigma_S[z]),
                                float(self.sigma_SR[z]), bool(self.valid[z]))


def _axis(v: np.ndarray, pos: int) -> np.ndarray:
    shape = [1] * 8
    shape[pos] = len(v)
    return v.reshape(shape)


def stochastic_table(ev: EvolvedState) -> StochasticTable:
    spec = [ev.r, ev.s, ev.rs, ev.e, ev.r_final, ev.s_final, ev.rs_final, ev.e_final]
    logs, oks = [], []
    for pos, sd in enumerate(spec):
        p = sd.eigenvalues
        ok = p > ZERO_EIG
        logs.append(_axis(np.where(ok, np.log(np.where(ok, p, 1.0)), np.nan), pos))
        oks.append(_axis(ok, pos))
    lr, ls, ll, ln, lrf, lsf, llf, lnf = logs
    shape = lattice_shape(ev)
    di = np.broadcast_to((ll - ls - lr) - (llf - lsf - lrf), shape)
    sig_s = np.broadcast_to(ls + ln - lsf - lnf, shape)
    sig_sr = np.broadcast_to(ll + ln - llf - lnf, shape)
    valid = np.ones(shape, dtype=bool)
    for ok in oks:
        valid = valid & ok
    return StochasticTable(np.array(di), np.array(sig_s), np.array(sig_sr), valid)


def stochastic_record(ev: EvolvedState, zeta) -> StochasticRecord:
    return stochastic_table(ev).record(zeta)


# ---------------------------------------------------------------------------
# averages and fluctuation theorems

def _values_on_support(q: QuasiDistribution, f) -> tuple[np.ndarray, np.ndarray]:
    if callable(f):
        fv = np.empty(q.shape)
        for idx in np.ndindex(*q.shape):
            fv[idx] = f(TrajectoryIndex(*idx)) if abs(q.values[idx]) > SUPPORT_TOL else 0.0
    else:
        fv = np.broadcast_to(np.asarray(f, dtype=float), q.shape)
    mask = q.support
    if not np.all(np.isfinite(fv[mask])):
        raise ValueError("function is not finite on the support of the distribution "
                         "(zero eigenvalue carrying nonzero quasiprobability?)")
    return mask, fv


def average(q: QuasiDistribution, f: Callable[[TrajectoryIndex], float] | np.ndarray) -> float:
    """``sum_zeta Q[zeta] f(zeta)`` over ``|Q| > 1e-14``; off-support terms are exactly 0."""
    mask, fv = _values_on_support(q, f)
    terms = np.where(mask, q.values * np.where(mask, fv, 0.0), 0.0)
    return float(np.sum(terms.ravel()))


def _exp_minus(x: np.ndarray, valid: np.ndarray) -> np.ndarray:
    return np.where(valid, np.exp(-np.where(valid, x, 0.0)), np.nan)


def _require_valid(q: QuasiDistribution, table: StochasticTable) -> None:
    bad = q.support & ~table.valid
    if np.any(bad):
        idx = TrajectoryIndex(*np.argwhere(bad)[0])
        raise ValueError(f"trajectory {idx} carries quasiprobability but references a zero eigenvalue")


def integral_ft(q: QuasiDistribution, table: StochasticTable) -> float:
    """``<exp(-delta_iota)>_Q``."""
    _require_valid(q, table)
    return average(q, _exp_minus(table.delta_iota, table.valid))


def entropy_production_fts(q: QuasiDistribution, table: StochasticTable) -> tuple[float, float]:
    """``(<exp(-sigma_S)>_Q, <exp(-sigma_SR)>_Q)``."""
    _require_valid(q, table)
    return (average(q, _exp_minus(table.sigma_S, table.valid)),
            average(q, _exp_minus(table.sigma_SR, table.valid)))


def _fiber(gamma) -> tuple:
    s, n, sf, nf = gamma
    return (slice(None), s, slice(None), n, slice(None), sf, slice(None), nf)


def gamma_probabilities(q: QuasiDistribution) -> np.ndarray:
    """``P[gamma]`` used for conditioning.

    Engine output uses the closed forms: inside a fiber the quasiprobabilities
    can cancel down by several orders of magnitude, and summing them loses
    digits that the ratios ``Q / P`` would amplify. Estimated or assembled
    distributions fall back to their own fiber sums.
    """
    if q.kind == "forward":
        return gamma_closed_form(q.ev)
    if q.kind == "retrodiction":
        return retro_gamma_closed_form(q.ev)
    return marginal_gamma(q)


def conditional_ft(q: QuasiDistribution, table: StochasticTable, gamma) -> float:
    """``<exp(-delta_iota)>`` under ``Q[zeta] / P[gamma]`` for one fixed gamma = (s, n, s', n')."""
    gamma = GammaIndex(*gamma)
    p = float(gamma_probabilities(q)[gamma])
    if p <= PROB_TOL:
        raise ValueError(f"P[gamma={tuple(gamma)}] = {p:.3g} is below {PROB_TOL}")
    sl = _fiber(gamma)
    qv, valid, di = q.values[sl], table.valid[sl], table.delta_iota[sl]
    mask = np.abs(qv) > SUPPORT_TOL
    if np.any(mask & ~valid):
        raise ValueError("zero eigenvalue on the support of the conditional distribution")
    terms = np.where(mask, qv * _exp_minus(di, valid), 0.0)
    return float(np.sum(np.where(mask, terms, 0.0).ravel()) / p)


def detailed_ft_check(q: QuasiDistribution, qt: QuasiDistribution, table: StochasticTable,
                      gamma=None) -> float:
    """Max over trajectories of ``|Q/P e^{-delta_iota} - Q~/P~|``.

    Restricted to one gamma if given, else to every gamma with P and P~ above
    1e-12; trajectories with invalid records are skipped.
    """
    pg, pt = gamma_probabilities(q), gamma_probabilities(qt)
    if gamma is not None:
        g = GammaIndex(*gamma)
        if pg[g] <= PROB_TOL or pt[g] <= PROB_TOL:
            raise ValueError(f"P or retrodiction P at gamma={tuple(g)} is below {PROB_TOL}")
        gammas = [g]
    else:
        gammas = [GammaIndex(*g) for g in np.argwhere((pg > PROB_TOL) & (pt > PROB_TOL))]
    worst = 0.0
    for g in gammas:
        sl = _fiber(g)
        valid = table.valid[sl]
        lhs = q.values[sl] / pg[g] * _exp_minus(table.delta_iota[sl], valid)
        rhs = qt.values[sl] / pt[g]
        if np.any(valid):
            worst = max(worst, float(np.max(np.abs(lhs - rhs)[valid])))
    return worst


def valid_gammas(q: QuasiDistribution) -> list[GammaIndex]:
    pg = marginal_gamma(q)
    return [GammaIndex(*map(int, g)) for g in np.argwhere(pg > PROB_TOL)]


# ---------------------------------------------------------------------------
# fluctuation-dissipation relation

@dataclass(frozen=True)
class FDRRow:
    eps: float
    variance: float
    two_delta_I: float
    residual: float

    @property
    def ratio(self) -> float:
        return self.residual / (self.two_delta_I / 2) if self.two_delta_I > 0 else 0.0


@dataclass(frozen=True)
class FDRTable:
    rows: tuple[FDRRow, ...]
    noise_floor: float = 1e-12

    def ratios(self) -> list[float]:
        return [r.ratio for r in self.rows]

    @property
    def ratio_decreasing(self) -> bool:
        """Residual ratio strictly shrinks as eps shrinks (rows sorted by decreasing eps)."""
        rows = [r for r in sorted(self.rows, key=lambda r: -r.eps) if r.eps > 0]
        for a, b in zip(rows, rows[1:]):
            at_floor = a.ratio <= self.noise_floor and b.ratio <= self.noise_floor
            if not (b.ratio < a.ratio or at_floor):
                return False
        return True


def fdr_check(family: Callable[[float], TripartiteSetup], eps_list: Sequence[float]) -> FDRTable:
    """Variance of ``delta_iota`` versus ``2 Delta I`` along a one-parameter family."""
    rows = []
    for eps in eps_list:
        ev = evolve(family(eps))
        q = quasiprobability(ev)
        table = stochastic_table(ev)
        _require_valid(q, table)
        d_i = delta_mutual_information(ev)
        var = average(q, (np.where(table.valid, table.delta_iota, 0.0) - d_i) ** 2)
        rows.append(FDRRow(float(eps), var, 2 * d_i, abs(var - 2 * d_i)))
    return FDRTable(tuple(rows))


def exp_family(base: TripartiteSetup, generator: np.ndarray,
               relax_state: bool = True) -> Callable[[float], TripartiteSetup]:
    """``eps -> (rho_RS(eps), rho_E(eps), exp(-i eps G))``.

    With ``relax_state`` the states are mixed toward the maximally mixed state,
    ``rho(eps) = (1 - eps) I/d + eps rho``, so that every trajectory carries a
    small ``delta_iota`` as eps -> 0 (the small-dissipation regime). Without it
    only the interaction is scaled.
    """
    from scipy.linalg import expm

    from .qlinalg import DensityMatrix

    g = np.asarray(generator, dtype=complex)

    def family(eps: float) -> TripartiteSetup:
        rs, e = base.rho_RS, base.rho_E
        if relax_state:
            rs = DensityMatrix((1 - eps) * np.eye(rs.dim) / rs.dim + eps * rs.matrix, rs.dims)
            e = DensityMatrix((1 - eps) * np.eye(e.dim) / e.dim + eps * e.matrix, e.dims)
        return TripartiteSetup(rs, e, expm(-1j * eps * g), f"{base.label} eps={eps!r}")

    return family


def heisenberg_generator() -> np.ndarray:
    """``XX + YY + ZZ`` on S (x) E."""
    from .circuits import PAULI
    return sum(np.kron(PAULI[p], PAULI[p]) for p in "XYZ")


# ---------------------------------------------------------------------------
# export

def export_rows(q: QuasiDistribution, qt: QuasiDistribution, table: StochasticTable,
                include_imag: bool = False) -> list[dict]:
    rows = []
    for idx in np.ndindex(*q.shape):
        row = dict(zip(AXES, map(int, idx)))
        row["Q"] = float(q.values[idx])
        row["Q~"] = float(qt.values[idx])
        for name, arr in (("delta_iota", table.delta_iota), ("sigma_S", table.sigma_S),
                          ("sigma_SR", table.sigma_SR)):
            v = float(arr[idx])
            row[name] = v if np.isfinite(v) else None
        if include_imag and q.imag is not None:
            row["Q_imag"] = float(q.imag[idx])
        rows.append(row)
    return rows


def write_csv(path, q: QuasiDistribution, qt: QuasiDistribution, table: StochasticTable,
              include_imag: bool = False) -> None:
    rows = export_rows(q, qt, table, include_imag)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(rows[0].keys()))
        for row in rows:
            w.writerow(["" if v is None else (f"{v:.17g}" if isinstance(v, float) else v)
                        for v in row.values()])


def write_json(path, q: QuasiDistribution, qt: QuasiDistribution, table: StochasticTable,
               include_imag: bool = False) -> None:
    data = {"axes": list(AXES), "ordering": q.ordering.name,
            "trajectories": export_rows(q, qt, table, include_imag),
            "marginal_gamma": marginal_gamma(q).tolist(), "marginal_tau": marginal_tau(q).tolist()}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
