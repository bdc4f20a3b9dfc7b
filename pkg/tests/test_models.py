import numpy as np
import pytest

import uncertain_markov as um
from uncertain_markov import (
    ControlGrid,
    ParameterError,
    ShapeError,
    SiteGraph,
    UsageError,
    build_uncertain_generator,
    envelope_speeds,
    encode,
    is_attractive,
    ising_speed,
    qmatrix_from_speed,
    tabular_speed,
)
from uncertain_markov.models import check_qmatrix, speed_from_dict
from uncertain_markov.statespace import bit_table

from conftest import contact


def test_contact_recovery_rate_is_one():
    c = contact(SiteGraph.path(3), [0.1, 0.4])
    occupied = bit_table(3).T == 1
    assert np.all(c.rates[:, occupied] == 1.0)


def test_contact_infection_two_neighbours():
    c = contact(SiteGraph.path(3), [0.1, 0.4])
    assert c.rate(1, 1, encode((1, 0, 1))) == pytest.approx(0.8, abs=1e-15)
    assert c.rate(0, 1, encode((1, 0, 1))) == pytest.approx(0.2, abs=1e-15)


def test_contact_isolated_healthy_site():
    c = contact(SiteGraph.isolated(2), [0.4])
    assert c.rate(0, 0, encode((0, 1))) == 0.0


def test_contact_rejects_nonpositive_lambda():
    with pytest.raises(ParameterError):
        contact(SiteGraph.path(2), [0.0, 0.4])


def test_ising_single_site_is_one():
    c = ising_speed(SiteGraph.isolated(1), ControlGrid.from_values([0.3, 2.0], "beta"))
    np.testing.assert_array_equal(c.rates, 1.0)


def test_ising_hand_values():
    c = ising_speed(SiteGraph.path(2), ControlGrid.from_values([0.5], "beta"))
    assert c.rate(0, 0, encode((1, 1))) == pytest.approx(np.exp(-0.5), rel=1e-15)
    assert c.rate(0, 0, encode((1, 0))) == pytest.approx(np.exp(0.5), rel=1e-15)
    assert c.rate(0, 0, encode((0, 0))) == pytest.approx(np.exp(-0.5), rel=1e-15)


def test_ising_rejects_nonpositive_beta():
    with pytest.raises(ParameterError):
        ising_speed(SiteGraph.path(2), ControlGrid.from_values([-1.0], "beta"))


def test_tabular_zeros_and_roundtrip():
    z = tabular_speed(np.zeros((2, 2, 4)))
    assert z.n_controls == 2 and np.all(z.rates == 0)
    c = contact(SiteGraph.path(3), [0.1, 0.4])
    t = tabular_speed(c.rates.tolist(), c.grid, c.graph)
    np.testing.assert_array_equal(t.rates, c.rates)
    for g in range(2):
        assert (qmatrix_from_speed(t, g) != qmatrix_from_speed(c, g)).nnz == 0


def test_tabular_errors():
    table = np.ones((1, 2, 4))
    table[0, 1, 2] = -1
    with pytest.raises(ParameterError):
        tabular_speed(table)
    with pytest.raises(ShapeError):
        tabular_speed([[[1.0, 1.0, 1.0, 1.0], [1.0, 1.0]]])
    with pytest.raises(ShapeError):
        tabular_speed(np.ones((1, 2, 8)))


def test_qmatrix_single_site_contact():
    c = contact(SiteGraph.isolated(1), [0.7])
    np.testing.assert_array_equal(qmatrix_from_speed(c, 0).toarray(), [[0.0, 0.0], [1.0, -1.0]])


def test_qmatrix_pair_row():
    c = contact(SiteGraph.complete(2), [0.4])
    Q = qmatrix_from_speed(c, 0).toarray()
    row = Q[encode((1, 0))]
    assert row[encode((0, 0))] == 1.0
    assert row[encode((1, 1))] == pytest.approx(0.4)
    assert row[encode((1, 0))] == pytest.approx(-1.4)
    assert row[encode((0, 1))] == 0.0


def test_qmatrix_bad_control():
    c = contact(SiteGraph.path(2), [0.4])
    with pytest.raises(ParameterError):
        qmatrix_from_speed(c, 1)


def _all_models(max_sites=4, seed=0):
    rng = np.random.default_rng(seed)
    for n in range(1, max_sites + 1):
        for graph in (SiteGraph.path(n), SiteGraph.cycle(n), SiteGraph.complete(n)):
            yield contact(graph, [0.1, 0.4, 1.3])
            yield ising_speed(graph, ControlGrid.from_values([0.2, 0.5], "beta"))
        yield tabular_speed(rng.exponential(size=(3, n, 1 << n)))


def test_generated_qmatrices_structure():
    for c in _all_models():
        gen = build_uncertain_generator(c)
        for g in range(c.n_controls):
            Q = gen.dense(g)
            check_qmatrix(Q)
            off = Q - np.diag(np.diag(Q))
            assert np.all(off >= 0)
            assert np.max(np.abs(Q.sum(axis=1))) <= 1e-12


def test_uncertain_generator_family():
    single = build_uncertain_generator(contact(SiteGraph.path(3), [0.4]))
    assert len(single) == 1
    gen = build_uncertain_generator(contact(SiteGraph.path(3), [0.1, 0.4]))
    Q0, Q1 = gen.dense(0), gen.dense(1)
    np.testing.assert_array_equal(Q0 != 0, Q1 != 0)
    differ = Q0 != Q1
    off = ~np.eye(8, dtype=bool)
    # off-diagonal differences are exactly the infection entries (upward flips)
    up = (np.arange(8)[None, :] & ~np.arange(8)[:, None]) != 0
    assert np.all(differ[off] == (up & (Q0 != 0))[off])
    np.testing.assert_allclose(Q1[differ & off], 4 * Q0[differ & off], rtol=1e-15)


def test_apply_matches_dense_matrix():
    rng = np.random.default_rng(3)
    for c in _all_models(3):
        gen = build_uncertain_generator(c)
        v = rng.normal(size=c.n_states)
        W = gen.apply_all(v)
        for g in range(c.n_controls):
            np.testing.assert_allclose(W[g], gen.dense(g) @ v, atol=1e-12)
            np.testing.assert_allclose(gen.apply(g, v), W[g], atol=0)


def test_from_matrices_general_family():
    Qa = np.array([[-1.0, 1.0, 0.0], [0.5, -1.0, 0.5], [0.0, 2.0, -2.0]])
    Qb = np.array([[-3.0, 0.0, 3.0], [0.0, 0.0, 0.0], [1.0, 1.0, -2.0]])
    gen = um.UncertainGenerator.from_matrices([Qa, Qb])
    np.testing.assert_allclose(gen.dense(0), Qa)
    np.testing.assert_allclose(gen.dense(1), Qb)
    with pytest.raises(ParameterError):
        um.UncertainGenerator.from_matrices([[[1.0, -1.0], [0.0, 0.0]]])


def test_envelope_singleton_grid():
    c = contact(SiteGraph.path(3), [0.3])
    up, lo = envelope_speeds(c)
    np.testing.assert_array_equal(up.rates, c.rates)
    np.testing.assert_array_equal(lo.rates, c.rates)


def test_envelope_contact_uses_extreme_lambdas():
    c = contact(SiteGraph.path(3), [0.1, 0.4])
    up, lo = envelope_speeds(c)
    np.testing.assert_array_equal(up.rates[0], contact(SiteGraph.path(3), [0.4]).rates[0])
    np.testing.assert_array_equal(lo.rates[0], contact(SiteGraph.path(3), [0.1]).rates[0])


def test_envelope_bounds_exhaustive():
    for c in _all_models():
        up, lo = envelope_speeds(c)
        occupied = bit_table(c.n_sites).T == 1
        r, u, l = c.rates, up.rates[0], lo.rates[0]
        assert np.all((l <= r)[:, ~occupied]) and np.all((r <= u)[:, ~occupied])
        assert np.all((u <= r)[:, occupied]) and np.all((r <= l)[:, occupied])


def test_attractive_examples():
    assert is_attractive(contact(SiteGraph.path(3), [0.4]))
    assert is_attractive(tabular_speed(np.ones((1, 3, 8))))
    # 0->1 rate 1 + (# healthy neighbours) decreases as the neighbour gets infected
    table = np.ones((1, 2, 4))
    for eta in range(4):
        for x in range(2):
            if not (eta >> x) & 1:
                table[0, x, eta] = 1 + (1 - ((eta >> (1 - x)) & 1))
    bad = tabular_speed(table, graph=SiteGraph.path(2))
    assert not is_attractive(bad)
    assert not is_attractive(bad, exhaustive=True)


def test_attractive_needs_single_control():
    with pytest.raises(UsageError):
        is_attractive(contact(SiteGraph.path(2), [0.1, 0.4]))


def _attractive_candidates(max_sites=4, seed=1):
    rng = np.random.default_rng(seed)
    for c in _all_models(max_sites, seed):
        yield from envelope_speeds(c)
        for g in range(c.n_controls):
            yield tabular_speed(c.rates[g:g + 1])
    for n in range(1, max_sites + 1):
        bits = bit_table(n).T
        ones = bits.sum(axis=0)
        for _ in range(5):
            a, b = rng.exponential(size=2)
            # attractive by construction, then occasionally broken at one entry
            rates = np.where(bits == 0, a + b * ones, a + b * (n - ones))[None].astype(float)
            yield tabular_speed(rates)
            broken = rates.copy()
            broken[0, rng.integers(n), rng.integers(1 << n)] += rng.normal()
            yield tabular_speed(np.abs(broken))


def test_attractive_covering_scan_matches_exhaustive():
    seen = {True: 0, False: 0}
    for c in _attractive_candidates():
        fast = is_attractive(c)
        assert fast == is_attractive(c, exhaustive=True)
        seen[fast] += 1
    assert seen[True] > 10 and seen[False] > 10


def test_grid_refinement_never_shrinks_generator_sup():
    rng = np.random.default_rng(5)
    graph = SiteGraph.cycle(4)
    coarse = build_uncertain_generator(ising_speed(graph, ControlGrid.from_values([0.2, 0.9], "beta")))
    fine = build_uncertain_generator(ising_speed(graph, ControlGrid.from_values([0.2, 0.4, 0.6, 0.9, 1.5], "beta")))
    for _ in range(50):
        v = rng.normal(size=16)
        assert np.all(um.apply_generator_sup(fine, v)[0] >= um.apply_generator_sup(coarse, v)[0])


def test_speed_from_dict():
    c = speed_from_dict({"sites": 3, "edges": [[0, 1], [1, 2]], "model": "contact",
                         "controls": [{"label": "a", "lambda": 0.1}, {"label": "b", "lambda": 0.4}]})
    assert c.grid.labels == ("a", "b")
    np.testing.assert_array_equal(c.rates, contact(SiteGraph.path(3), [0.1, 0.4]).rates)
    t = speed_from_dict({"sites": 1, "model": "tabular", "controls": [{}], "rates": [[[1.0, 2.0]]]})
    assert t.rate(0, 0, 1) == 2.0
    with pytest.raises(ParameterError):
        speed_from_dict({"sites": 2, "model": "ising", "controls": [{"label": "a"}]})
    with pytest.raises(ParameterError):
        speed_from_dict({"sites": 2, "model": "voter", "controls": [{}]})
    with pytest.raises(ParameterError):
        speed_from_dict({"model": "contact"})
