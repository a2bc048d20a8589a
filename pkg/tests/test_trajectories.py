import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiprob import trajectories as tr
from quasiprob import tripartite as tp
from quasiprob.qlinalg import DensityMatrix

from oracles import ClassicalModel, brute_force_q

X_BASIS = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
TRANSITION_GAMMAS = [(0, 0, 0, 0), (1, 0, 1, 1), (0, 1, 0, 1), (1, 1, 1, 0)]


@pytest.fixture(scope="module")
def experiment_ev():
    return tp.evolve(tp.experiment_setup())


@pytest.fixture(scope="module")
def random_evs():
    rng = np.random.default_rng(11)
    return [tp.evolve(tp.random_setup(rng)) for _ in range(3)]


def labels_of(vectors):
    """Computational index -> eigenlabel for permutation bases."""
    return {int(np.argmax(np.abs(vectors[:, j]))): j for j in range(vectors.shape[1])}


# ---------------------------------------------------------------------------
# engine versus explicit traces

@pytest.mark.parametrize("ordering", tr.ORDERINGS, ids=lambda o: o.name)
def test_engine_matches_brute_force(experiment_ev, random_evs, ordering):
    for ev in [experiment_ev] + random_evs:
        q = tr.quasiprobability(ev, ordering)
        qt = tr.retrodiction_quasiprobability(ev, ordering)
        want = brute_force_q(ev, ordering.initial, ordering.final)
        want_t = brute_force_q(ev, ordering.initial, ordering.final, retro=True)
        assert np.max(np.abs(q.values - want)) < 1e-12
        assert np.max(np.abs(qt.values - want_t)) < 1e-12


def test_canonical_order_matches_literal_trace(random_evs):
    # with Pi_ln next to rho, the weights are exactly the trace against rho itself
    ev = random_evs[0]
    dr, ds, de = ev.dims
    u = np.kron(np.eye(dr), ev.setup.U)
    rho = np.kron(ev.setup.rho_RS.matrix, ev.setup.rho_E.matrix)
    q = tr.quasiprobability(ev)
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = tuple(int(rng.integers(k)) for k in q.shape)
        r, s, l, n, rf, sf, lf, nf = z
        ket = np.kron
        y = (np.outer(ket(ket(ev.r.vectors[:, r], ev.s.vectors[:, s]), ev.e.vectors[:, n]),
                      ket(ev.rs.vectors[:, l], ev.e.vectors[:, n]).conj())
             * (ket(ev.r.vectors[:, r], ev.s.vectors[:, s]).conj() @ ev.rs.vectors[:, l]))
        x = (np.outer(ket(ev.rs_final.vectors[:, lf], ev.e_final.vectors[:, nf]),
                      ket(ket(ev.r_final.vectors[:, rf], ev.s_final.vectors[:, sf]), ev.e_final.vectors[:, nf]).conj())
             * (ev.rs_final.vectors[:, lf].conj() @ ket(ev.r_final.vectors[:, rf], ev.s_final.vectors[:, sf])))
        want = np.trace(u.conj().T @ x @ u @ y @ rho).real
        assert abs(q[z] - want) < 1e-13


def test_lattice_shape(experiment_ev):
    q = tr.quasiprobability(experiment_ev)
    assert q.shape == (2, 2, 4, 2) * 2
    assert q.values.size == 1024


def test_higher_dimensional_engine():
    ev = tp.evolve(tp.random_setup(np.random.default_rng(12), dims=(2, 3, 2)))
    q = tr.quasiprobability(ev)
    assert np.max(np.abs(q.values - brute_force_q(ev))) < 1e-12
    assert abs(q.total() - 1) < 1e-10


# ---------------------------------------------------------------------------
# negativity

def test_experiment_setup_quasiprobability_is_nonnegative(experiment_ev):
    # local eigenbases are computational, so every trace factorizes into squared moduli
    q = tr.quasiprobability(experiment_ev)
    assert q.min() >= -1e-15


def test_degenerate_basis_choice_exposes_negativity():
    # rho_S and rho'_R are maximally mixed, so rotating both eigenbases is allowed
    ev = tp.evolve(tp.experiment_setup(), bases={"s": X_BASIS, "r_final": X_BASIS})
    q = tr.quasiprobability(ev)
    table = tr.stochastic_table(ev)
    assert q.min() < -1e-6
    assert abs(q.total() - 1) < 1e-10
    assert abs(tr.integral_ft(q, table) - 1) < 1e-9
    assert abs(tr.average(q, table.delta_iota) - tp.delta_mutual_information(ev)) < 1e-9


def test_random_setups_are_often_negative():
    rng = np.random.default_rng(13)
    neg = sum(tr.quasiprobability(tp.evolve(tp.random_setup(rng))).min() < -1e-6 for _ in range(50))
    assert neg >= 10


# ---------------------------------------------------------------------------
# classical limits

def test_identity_product_diagonal_is_classical():
    p_r, p_s, p_n = np.array([0.7, 0.3]), np.array([0.6, 0.4]), np.array([0.8, 0.2])
    rs = DensityMatrix(np.diag(np.kron(p_r, p_s)).astype(complex), (2, 2))
    e = DensityMatrix(np.diag(p_n).astype(complex), (2,))
    ev = tp.evolve(tp.identity_setup(rs, e))
    q = tr.quasiprobability(ev)
    qt = tr.retrodiction_quasiprobability(ev)
    assert q.min() >= 0
    assert np.allclose(q.values, qt.values, atol=1e-15)
    lr, ls, ln = labels_of(ev.r.vectors), labels_of(ev.s.vectors), labels_of(ev.e.vectors)
    ll = labels_of(ev.rs.vectors)
    want = np.zeros(q.shape)
    for r in range(2):
        for s in range(2):
            for n in range(2):
                a, b, c, d = lr[r], ls[s], ll[2 * r + s], ln[n]
                want[a, b, c, d, a, b, c, d] = p_r[r] * p_s[s] * p_n[n]
    assert np.max(np.abs(q.values - want)) < 1e-15
    table = tr.stochastic_table(ev)
    assert tr.integral_ft(q, table) == pytest.approx(1.0, abs=1e-15)
    assert tr.detailed_ft_check(q, qt, table) < 1e-15


def _classical_setup(rng):
    p_rs = rng.random((2, 2)) + 0.1
    p_rs /= p_rs.sum()
    p_n = rng.random(2) + 0.1
    p_n /= p_n.sum()
    order = rng.permutation(4)
    perm = {(s, n): divmod(int(order[2 * s + n]), 2) for s in range(2) for n in range(2)}
    u = np.zeros((4, 4))
    for (s, n), (sf, nf) in perm.items():
        u[2 * sf + nf, 2 * s + n] = 1
    setup = tp.TripartiteSetup(DensityMatrix(np.diag(p_rs.ravel()).astype(complex), (2, 2)),
                               DensityMatrix(np.diag(p_n).astype(complex), (2,)), u)
    return ClassicalModel(p_rs, p_n, perm), setup


def test_classical_oracle():
    rng = np.random.default_rng(14)
    for _ in range(20):
        model, setup = _classical_setup(rng)
        ev = tp.evolve(setup)
        q = tr.quasiprobability(ev)
        table = tr.stochastic_table(ev)
        lr, ls, ln = labels_of(ev.r.vectors), labels_of(ev.s.vectors), labels_of(ev.e.vectors)
        ll = labels_of(ev.rs.vectors)
        lrf, lsf, lnf = labels_of(ev.r_final.vectors), labels_of(ev.s_final.vectors), labels_of(ev.e_final.vectors)
        llf = labels_of(ev.rs_final.vectors)
        want = np.zeros(q.shape)
        for idx in zip(*np.nonzero(model.joint)):
            r, s, n, rf, sf, nf = idx
            z = (lr[r], ls[s], ll[2 * r + s], ln[n], lrf[rf], lsf[sf], llf[2 * rf + sf], lnf[nf])
            want[z] = model.joint[idx]
        assert np.max(np.abs(q.values - want)) < 1e-10
        di = tp.delta_mutual_information(ev)
        assert abs(di - model.delta_mutual_information()) < 1e-10
        assert abs(tr.average(q, table.delta_iota)
                   - model.average(lambda r, s, n, rf, sf, nf: model.delta_iota(r, s, rf, sf))) < 1e-10
        assert abs(tr.integral_ft(q, table)
                   - model.average(lambda r, s, n, rf, sf, nf: math.exp(-model.delta_iota(r, s, rf, sf)))) < 1e-10
        for s in range(2):
            for n in range(2):
                sf, nf = model.perm[(s, n)]
                g = (ls[s], ln[n], lsf[sf], lnf[nf])
                got = tr.conditional_ft(q, table, g)
                ref = model.conditional(lambda r, s_, n_, rf, sf_, nf_: math.exp(-model.delta_iota(r, s_, rf, sf_)), s, n)
                assert abs(got - ref) < 1e-10
                assert abs(got - 1) < 1e-9


# ---------------------------------------------------------------------------
# marginals

def test_marginals_closed_forms(experiment_ev, random_evs):
    for ev in [experiment_ev] + random_evs:
        q, qt = tr.quasiprobability(ev), tr.retrodiction_quasiprobability(ev)
        assert np.max(np.abs(tr.marginal_gamma(q) - tr.gamma_closed_form(ev))) < 1e-10
        assert np.max(np.abs(tr.marginal_tau(q) - tr.tau_closed_form(ev))) < 1e-10
        assert np.max(np.abs(tr.marginal_gamma(qt) - tr.retro_gamma_closed_form(ev))) < 1e-10
        assert abs(tr.marginal_gamma(q).sum() - 1) < 1e-12


def test_marginal_gamma_direct_formula_experiment(experiment_ev):
    # |<s'n'|U|sn>|^2 p_s p_n with computational labels, written out by hand
    u = experiment_ev.setup.U
    p_s = experiment_ev.s.eigenvalues
    p_n = experiment_ev.e.eigenvalues
    want = np.zeros((2, 2, 2, 2))
    for s in range(2):
        for n in range(2):
            for sf in range(2):
                for nf in range(2):
                    want[s, n, sf, nf] = abs(u[2 * sf + nf, 2 * s + n]) ** 2 * p_s[s] * p_n[n]
    assert np.max(np.abs(tr.marginal_gamma(tr.quasiprobability(experiment_ev)) - want)) < 1e-12
    valid = [tuple(map(int, g)) for g in tr.valid_gammas(tr.quasiprobability(experiment_ev))]
    assert sorted(valid) == sorted(TRANSITION_GAMMAS)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_marginals_nonnegative_random(seed):
    ev = tp.evolve(tp.random_setup(np.random.default_rng(seed)))
    q = tr.quasiprobability(ev)
    assert tr.marginal_gamma(q).min() >= -1e-12
    assert tr.marginal_tau(q).min() >= -1e-12


# ---------------------------------------------------------------------------
# stochastic quantities

def test_delta_iota_scalar_example():
    v = tr.delta_iota(0.4, 0.5, 0.5, 0.3, 0.5, 0.5)
    assert v == pytest.approx(math.log(4 / 3), abs=1e-15)
    assert v == pytest.approx(0.28768, abs=1e-5)


def test_uniform_spectra_give_zero_delta_iota():
    ev = tp.evolve(tp.TripartiteSetup(DensityMatrix.maximally_mixed((2, 2)), DensityMatrix.maximally_mixed((2,)),
                                      tp.haar_unitary(4, np.random.default_rng(15))))
    table = tr.stochastic_table(ev)
    assert np.all(table.valid)
    assert np.max(np.abs(table.delta_iota)) < 1e-12


def test_delta_iota_equals_sigma_difference_on_experiment(experiment_ev):
    table = tr.stochastic_table(experiment_ev)
    diff = table.sigma_SR - table.sigma_S
    assert np.max(np.abs((table.delta_iota - diff)[table.valid])) < 1e-12


def test_record_lookup(experiment_ev):
    table = tr.stochastic_table(experiment_ev)
    z = (0, 1, 2, 0, 1, 1, 3, 1)
    rec = tr.stochastic_record(experiment_ev, z)
    assert rec.valid
    assert rec.delta_iota == table.delta_iota[z]


def test_zero_eigenvalues_flagged():
    bell = DensityMatrix.from_vector([1, 0, 0, 1], (2, 2))
    ev = tp.evolve(tp.identity_setup(bell, tp.thermal_state(1.0)))
    table = tr.stochastic_table(ev)
    assert not table.valid.all()
    q = tr.quasiprobability(ev)
    # zero-weight labels carry no quasiprobability here, so the theorem is still evaluable
    assert tr.integral_ft(q, table) == pytest.approx(1.0, abs=1e-12)
    bad = np.zeros(q.shape)
    bad[tuple(np.argwhere(~table.valid)[0])] = 1.0
    with pytest.raises(ValueError, match="zero eigenvalue"):
        tr.integral_ft(tr.QuasiDistribution(bad, ev), table)


# ---------------------------------------------------------------------------
# averages and theorems

def test_average_examples(experiment_ev):
    q = tr.quasiprobability(experiment_ev)
    table = tr.stochastic_table(experiment_ev)
    assert tr.average(q, lambda z: 1.0) == pytest.approx(1.0, abs=1e-12)
    assert abs(tr.average(q, table.delta_iota) - tp.delta_mutual_information(experiment_ev)) < 1e-9
    assert abs(tr.average(q, table.sigma_S) - tp.mutual_information_se_final(experiment_ev)) < 1e-9
    assert abs(tr.average(q, table.sigma_SR) - tp.mutual_information_sr_e_final(experiment_ev)) < 1e-9


def test_average_callable_matches_array(experiment_ev):
    q = tr.quasiprobability(experiment_ev)
    table = tr.stochastic_table(experiment_ev)
    a = tr.average(q, lambda z: table.delta_iota[tuple(z)])
    assert a == pytest.approx(tr.average(q, table.delta_iota), abs=1e-14)


def test_average_rejects_infinite_on_support(experiment_ev):
    q = tr.quasiprobability(experiment_ev)
    f = np.zeros(q.shape)
    f[tuple(np.argwhere(q.support)[0])] = np.inf
    with pytest.raises(ValueError):
        tr.average(q, f)


def test_identity_theorems_exact():
    s = tp.random_setup(np.random.default_rng(16))
    ev = tp.evolve(tp.identity_setup(s.rho_RS, s.rho_E))
    q, qt, table = tr.quasiprobability(ev), tr.retrodiction_quasiprobability(ev), tr.stochastic_table(ev)
    assert tr.integral_ft(q, table) == pytest.approx(1.0, abs=1e-12)
    assert tr.detailed_ft_check(q, qt, table) < 1e-12
    a, b = tr.entropy_production_fts(q, table)
    assert a == pytest.approx(1.0, abs=1e-12) and b == pytest.approx(1.0, abs=1e-12)


def test_experiment_theorems(experiment_ev):
    q, qt = tr.quasiprobability(experiment_ev), tr.retrodiction_quasiprobability(experiment_ev)
    table = tr.stochastic_table(experiment_ev)
    assert abs(tr.integral_ft(q, table) - 1) < 1e-9
    for g in TRANSITION_GAMMAS:
        assert abs(tr.conditional_ft(q, table, g) - 1) < 1e-9
        assert tr.detailed_ft_check(q, qt, table, g) < 1e-9
    a, b = tr.entropy_production_fts(q, table)
    assert abs(a - 1) < 1e-9 and abs(b - 1) < 1e-9


def test_conditional_ft_rejects_zero_probability(experiment_ev):
    q = tr.quasiprobability(experiment_ev)
    table = tr.stochastic_table(experiment_ev)
    with pytest.raises(ValueError):
        tr.conditional_ft(q, table, (1, 0, 0, 1))
    with pytest.raises(ValueError):
        tr.detailed_ft_check(q, tr.retrodiction_quasiprobability(experiment_ev), table, (1, 0, 0, 1))


def test_orderings_integral_ft(random_evs):
    for ev in random_evs:
        table = tr.stochastic_table(ev)
        for o in tr.ORDERINGS:
            q = tr.quasiprobability(ev, o)
            qt = tr.retrodiction_quasiprobability(ev, o)
            assert abs(q.total() - 1) < 1e-10 and abs(qt.total() - 1) < 1e-10
            assert abs(tr.integral_ft(q, table) - 1) < 1e-8
            if o.pairs_local_labels:
                assert tr.detailed_ft_check(q, qt, table) < 1e-8


def test_orderings_without_pairing_spread_over_reference_labels(random_evs):
    ev = random_evs[0]
    q = tr.quasiprobability(ev, tr.Ordering("local", "local"))
    off = np.abs(q.values[0, :, :, :, 1]).max()
    assert off > 1e-6
    canon = tr.quasiprobability(ev)
    assert np.abs(canon.values[0, :, :, :, 1]).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([(2, 2, 2), (2, 3, 2), (3, 2, 2)]))
def test_theorems_property(seed, dims):
    ev = tp.evolve(tp.random_setup(np.random.default_rng(seed), dims=dims))
    q, qt = tr.quasiprobability(ev), tr.retrodiction_quasiprobability(ev)
    table = tr.stochastic_table(ev)
    assert abs(q.total() - 1) < 1e-10
    assert abs(tr.average(q, table.delta_iota) - tp.delta_mutual_information(ev)) < 1e-9
    assert abs(tr.integral_ft(q, table) - 1) < 1e-8
    assert tr.detailed_ft_check(q, qt, table) < 1e-8
    a, b = tr.entropy_production_fts(q, table)
    assert abs(a - 1) < 1e-8 and abs(b - 1) < 1e-8
    for g in tr.valid_gammas(q):
        assert abs(tr.conditional_ft(q, table, g) - 1) < 1e-8


# ---------------------------------------------------------------------------
# fluctuation-dissipation relation

def test_fdr_zero_eps_is_trivial():
    fam = tr.exp_family(tp.experiment_setup(), tr.heisenberg_generator())
    row = tr.fdr_check(fam, [0.0]).rows[0]
    assert row.variance == pytest.approx(0.0, abs=1e-15)
    assert row.two_delta_I == pytest.approx(0.0, abs=1e-15)


def test_fdr_relaxed_family_ratio_decreases():
    fam = tr.exp_family(tp.experiment_setup(), tr.heisenberg_generator(), relax_state=True)
    table = tr.fdr_check(fam, [0.2, 0.1, 0.05, 0.025])
    assert table.ratio_decreasing
    r = table.ratios()
    # roughly quadratic decay
    assert r[-1] < r[0] / 20


def test_fdr_fixed_state_family_plateaus():
    # with the states held fixed the ratio does not vanish; it grows toward a constant
    fam = tr.exp_family(tp.experiment_setup(), tr.heisenberg_generator(), relax_state=False)
    table = tr.fdr_check(fam, [0.2, 0.1, 0.05, 0.025])
    r = table.ratios()
    assert not table.ratio_decreasing
    assert 0.5 < r[-1] < 1.0


def test_fdr_classical_cumulant_oracle():
    # near-uniform classical state: ln-ratios are small, variance tracks twice the mean
    rng = np.random.default_rng(17)
    base_rs, base_n = rng.random((2, 2)) + 0.5, rng.random(2) + 0.5
    base_rs /= base_rs.sum()
    base_n /= base_n.sum()
    perm = {(0, 0): (0, 0), (0, 1): (1, 1), (1, 0): (1, 0), (1, 1): (0, 1)}
    ratios = []
    for eps in [0.2, 0.1, 0.05, 0.025]:
        p_rs = (1 - eps) / 4 + eps * base_rs
        p_n = (1 - eps) / 2 + eps * base_n
        model = ClassicalModel(p_rs, p_n, perm)
        d = model.delta_mutual_information()
        var = model.average(lambda r, s, n, rf, sf, nf: (model.delta_iota(r, s, rf, sf) - d) ** 2)
        ratios.append(abs(var - 2 * d) / d)
        # same numbers from the quantum engine
        u = np.zeros((4, 4))
        for (s, n), (sf, nf) in perm.items():
            u[2 * sf + nf, 2 * s + n] = 1
        ev = tp.evolve(tp.TripartiteSetup(DensityMatrix(np.diag(p_rs.ravel()).astype(complex), (2, 2)),
                                          DensityMatrix(np.diag(p_n).astype(complex), (2,)), u))
        q, table = tr.quasiprobability(ev), tr.stochastic_table(ev)
        var_q = tr.average(q, (table.delta_iota - tp.delta_mutual_information(ev)) ** 2)
        assert abs(var_q - var) < 1e-12
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


# ---------------------------------------------------------------------------
# export

def test_csv_and_json_export(tmp_path, experiment_ev):
    q, qt, table = tr.quasiprobability(experiment_ev), tr.retrodiction_quasiprobability(experiment_ev), tr.stochastic_table(experiment_ev)
    tr.write_csv(tmp_path / "t.csv", q, qt, table)
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "s", "l", "n", "r'", "s'", "l'", "n'", "Q", "Q~", "delta_iota", "sigma_S", "sigma_SR"]
    assert len(rows) == 1025
    back = np.array([float(r[8]) for r in rows[1:]]).reshape(q.shape)
    assert np.array_equal(back, q.values)
    tr.write_json(tmp_path / "t.json", q, qt, table, include_imag=True)
    data = json.loads((tmp_path / "t.json").read_text())
    assert data["ordering"] == "global-local"
    assert len(data["trajectories"]) == 1024
    assert "Q_imag" in data["trajectories"][0]
