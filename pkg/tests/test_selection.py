import numpy as np
import pytest

from uncertain_markov import (
    SiteGraph,
    UsageError,
    brute_force_sup,
    build_uncertain_generator,
    encode,
    evolve,
    extract_policy,
    ising_speed,
    ControlGrid,
    verify_selection,
)
from uncertain_markov.statespace import site_sum

from conftest import contact


def corner():
    f = np.zeros(4)
    f[encode((1, 1))] = 1.0
    return f


def test_singleton_grid_gives_constant_policy():
    gen = build_uncertain_generator(contact(SiteGraph.path(3), [0.3]))
    pol = extract_policy(evolve(gen, site_sum(3), 0.2, 1e-2))
    assert np.all(pol.choice == 0)
    rep = verify_selection(gen, site_sum(3), 1.0, 1e-3)
    assert rep.max_gap <= 1e-8


def test_constant_f(path3_contact):
    gen = build_uncertain_generator(path3_contact)
    pol = extract_policy(evolve(gen, np.full(8, 2.0), 0.3, 1e-2))
    assert np.all(pol.choice == 0)
    assert verify_selection(gen, np.full(8, 2.0), 1.0).max_gap <= 1e-10


def test_time_reversal_bookkeeping():
    run = evolve(build_uncertain_generator(contact(SiteGraph.complete(2), [0.1, 0.4])), corner(), 0.25, 0.1)
    pol = extract_policy(run)
    np.testing.assert_allclose(pol.cell_boundaries, [0.0, 0.05, 0.15, 0.25], atol=1e-15)
    # forward cell [0.15, 0.25] is governed by the iterate at backward time 0
    np.testing.assert_array_equal(pol.choice[-1], run.argmax_field[0])
    np.testing.assert_array_equal(pol.choice[0], run.argmax_field[2])


def test_pair_picks_high_infection_near_terminal_time(pair_contact):
    pol = verify_selection(build_uncertain_generator(pair_contact), corner(), 1.0).policy
    assert pol.choice[-1, encode((1, 0))] == 1
    assert pol.choice[-1, encode((0, 1))] == 1


def test_empty_run_rejected(path3_contact):
    run = evolve(build_uncertain_generator(path3_contact), site_sum(3), 0.0)
    with pytest.raises(UsageError):
        extract_policy(run)
    assert verify_selection(build_uncertain_generator(path3_contact), site_sum(3), 0.0).policy is None


def test_batch_run_rejected(path3_contact):
    run = evolve(build_uncertain_generator(path3_contact), np.ones((8, 2)), 0.1, 1e-2)
    with pytest.raises(UsageError):
        extract_policy(run)


@pytest.mark.parametrize("which", ["path3", "pair", "ising"])
def test_selection_reproduces_value(which):
    if which == "path3":
        c = contact(SiteGraph.path(3), [0.1, 0.4])
    elif which == "pair":
        c = contact(SiteGraph.complete(2), [0.1, 0.4])
    else:
        c = ising_speed(SiteGraph.path(2), ControlGrid.from_values([0.2, 0.5], "beta"))
    gen = build_uncertain_generator(c)
    rep = verify_selection(gen, site_sum(c.n_sites), 1.0, 1e-3, tol=1e-4)
    assert rep.passed
    assert np.all(rep.selected <= rep.hjb + 1e-6)


def test_switching_payoff():
    gen = build_uncertain_generator(contact(SiteGraph.path(3), [0.1, 0.4]))
    f = np.array([0.0, 1, 0, 0, 0, 0, 0, 2])
    rep = verify_selection(gen, f, 1.0, 1e-3)
    assert rep.passed
    # the policy really does switch at some state
    assert any(len(np.unique(rep.policy.choice[:, k])) > 1 for k in range(8))


def test_selected_beats_brute_force_family(pair_contact):
    gen = build_uncertain_generator(pair_contact)
    rep = verify_selection(gen, corner(), 1.0, 1e-3)
    bf = brute_force_sup(gen, corner(), 1.0, 2)
    assert np.all(rep.selected >= bf.best_value - 1e-4)


def test_selection_is_deterministic(path3_contact):
    gen = build_uncertain_generator(path3_contact)
    a = verify_selection(gen, site_sum(3), 0.5).policy
    b = verify_selection(gen, site_sum(3), 0.5).policy
    np.testing.assert_array_equal(a.choice, b.choice)
    np.testing.assert_array_equal(a.cell_boundaries, b.cell_boundaries)
