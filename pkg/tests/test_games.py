import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlgames.congestion import (CongestionNetwork, Edge, build_congestion_game, parallel_links,
                                 two_route_network)
from srlgames.games import (DegenerateComparison, Game, GameError, as_profile, coordination_game,
                            dominance_margin, expected_payoff, iterated_dominance, matching_pennies,
                            nash_gap, nash_gap_batch, is_strict_nash, payoff_vector,
                            payoff_vectors_batch, prisoners_dilemma, pure_profile, random_game,
                            single_player, uniform_profile)

from oracles import payoff_vectors


def _random_profile(game, rng):
    return [rng.dirichlet(np.ones(n)) for n in game.actions]


shapes = st.lists(st.integers(1, 3), min_size=1, max_size=3)


# --- payoff vectors ---------------------------------------------------------

def test_matching_pennies_uniform_opponent():
    g = matching_pennies()
    assert np.allclose(payoff_vector(g, 0, uniform_profile(g)), [0.0, 0.0])


def test_matching_pennies_pure_heads_opponent():
    g = matching_pennies()
    x = [np.array([0.5, 0.5]), np.array([1.0, 0.0])]
    assert np.allclose(payoff_vector(g, 0, x), [1.0, -1.0])


@pytest.mark.parametrize("x", [[1.0, 0.0], [0.3, 0.7]])
def test_single_player_payoff_ignores_strategy(x):
    g = single_player([0.0, 1.0])
    assert np.allclose(payoff_vector(g, 0, [np.array(x)]), [0.0, 1.0])


def test_single_player_batch_broadcasts():
    g = single_player([0.0, 1.0])
    out = payoff_vectors_batch(g, [np.full((5, 2), 0.5)])
    assert out[0].shape == (5, 2) and np.allclose(out[0], [0.0, 1.0])


def test_expected_payoff_examples():
    g = matching_pennies()
    assert expected_payoff(g, 0, uniform_profile(g)) == pytest.approx(0.0)
    one = Game(payoffs=(np.array([[3.5]]), np.array([[-1.0]])))
    assert expected_payoff(one, 0, [np.ones(1), np.ones(1)]) == pytest.approx(3.5)


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_payoff_vector_matches_enumeration(actions, seed):
    rng = np.random.default_rng(seed)
    g = random_game(actions, rng)
    x = _random_profile(g, rng)
    ref = payoff_vectors(g.payoffs, x)
    for k in range(g.n_players):
        assert np.allclose(payoff_vector(g, k, x), ref[k], atol=1e-12)
        assert expected_payoff(g, k, x) == pytest.approx(float(ref[k] @ x[k]), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2 ** 32 - 1), st.floats(0, 1))
def test_payoff_vector_affine_in_each_opponent(actions, seed, lam):
    rng = np.random.default_rng(seed)
    g = random_game(actions, rng)
    x, y = _random_profile(g, rng), _random_profile(g, rng)
    for j in range(g.n_players):
        mixed = list(x)
        mixed[j] = lam * x[j] + (1 - lam) * y[j]
        alt = list(x)
        alt[j] = y[j]
        for k in range(g.n_players):
            lhs = payoff_vector(g, k, mixed)
            rhs = lam * payoff_vector(g, k, x) + (1 - lam) * payoff_vector(g, k, alt)
            assert np.allclose(lhs, rhs, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_zero_sum_payoffs_cancel(seed):
    rng = np.random.default_rng(seed)
    g = matching_pennies()
    x = _random_profile(g, rng)
    assert expected_payoff(g, 0, x) + expected_payoff(g, 1, x) == pytest.approx(0.0, abs=1e-14)


def test_batch_agrees_with_single():
    rng = np.random.default_rng(3)
    g = random_game((2, 3, 2), rng)
    xs = [rng.dirichlet(np.ones(n), size=7) for n in g.actions]
    out = payoff_vectors_batch(g, xs)
    for b in range(7):
        prof = [x[b] for x in xs]
        for k in range(3):
            assert np.allclose(out[k][b], payoff_vector(g, k, prof))


# --- validation ---------------------------------------------------------------

def test_invalid_profiles_rejected():
    g = matching_pennies()
    with pytest.raises(GameError):
        as_profile(g, [np.array([0.6, 0.6]), np.array([0.5, 0.5])])
    with pytest.raises(GameError):
        as_profile(g, [np.array([1.2, -0.2]), np.array([0.5, 0.5])])
    with pytest.raises(GameError):
        as_profile(g, [np.array([0.5, 0.5])])
    with pytest.raises(GameError):
        as_profile(g, [np.array([1.0 + 1e-14, -1e-14]), np.array([0.5, 0.5])])


def test_tiny_negative_entries_clamped():
    g = matching_pennies()
    x = as_profile(g, [np.array([1.0 + 5e-16, -5e-16]), np.array([0.5, 0.5])])
    assert x[0][1] == 0.0


def test_bad_tensors_rejected():
    with pytest.raises(GameError):
        Game(payoffs=(np.zeros((2, 2)),))
    with pytest.raises(GameError):
        Game(payoffs=(np.zeros((2, 2)), np.zeros((2, 3))))
    with pytest.raises(GameError):
        Game(payoffs=(np.ones((2, 2)), np.ones((2, 2))), zero_sum=True)


# --- equilibria -----------------------------------------------------------------

def test_nash_gap_examples():
    g = matching_pennies()
    assert nash_gap(g, uniform_profile(g)) == pytest.approx(0.0)
    assert nash_gap(g, pure_profile(g, (0, 0))) == pytest.approx(2.0)
    c = coordination_game()
    assert nash_gap(c, pure_profile(c, (0, 0))) == 0.0
    assert nash_gap(c, pure_profile(c, (1, 1))) == 0.0


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_nash_gap_nonnegative(actions, seed):
    rng = np.random.default_rng(seed)
    g = random_game(actions, rng)
    x = _random_profile(g, rng)
    gap = nash_gap(g, x)
    assert gap >= 0
    batch = nash_gap_batch(g, [xk[None, :] for xk in x])
    assert batch[0] == pytest.approx(gap, abs=1e-12)


def test_strict_nash_examples():
    c = coordination_game(2.0, 1.0)
    assert is_strict_nash(c, (0, 0))
    assert is_strict_nash(c, (1, 1))
    assert not is_strict_nash(c, (0, 1))
    g = matching_pennies()
    assert not any(is_strict_nash(g, p) for p in g.pure_profiles())
    trivial = Game(payoffs=(np.zeros((1, 1)), np.zeros((1, 1))))
    assert is_strict_nash(trivial, (0, 0))


def test_strict_nash_accepts_vertex_profile():
    c = coordination_game()
    assert is_strict_nash(c, pure_profile(c, (0, 0)))
    with pytest.raises(GameError):
        is_strict_nash(c, [np.array([0.5, 0.5]), np.array([1.0, 0.0])])


def test_strict_nash_deviations_strictly_lose():
    c = coordination_game()
    eq = pure_profile(c, (0, 0))
    for k in range(2):
        v = payoff_vector(c, k, eq)
        assert np.all(np.delete(v, 0) < v[0])


# --- dominance --------------------------------------------------------------------

def test_dominance_examples():
    assert dominance_margin(single_player([0.0, 1.0]), 0, 0, 1) == pytest.approx(1.0)
    pd = prisoners_dilemma()
    assert dominance_margin(pd, 0, 0, 1) == pytest.approx(1.0)
    assert dominance_margin(pd, 1, 0, 1) == pytest.approx(1.0)
    g = matching_pennies()
    assert dominance_margin(g, 0, 0, 1) <= 0 and dominance_margin(g, 0, 1, 0) <= 0


def test_dominance_self_comparison_warns():
    with pytest.warns(DegenerateComparison):
        assert dominance_margin(matching_pennies(), 0, 1, 1) == 0.0


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_dominance_is_antisymmetric_in_sign(actions, seed):
    rng = np.random.default_rng(seed)
    g = random_game(actions, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateComparison)
        for k, n in enumerate(g.actions):
            for a in range(n):
                for b in range(n):
                    if a != b and dominance_margin(g, k, a, b) > 0:
                        assert dominance_margin(g, k, b, a) < 0


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_dominance_margin_bounds_mixed_play(actions, seed):
    rng = np.random.default_rng(seed)
    g = random_game(actions, rng)
    x = _random_profile(g, rng)
    for k, n in enumerate(g.actions):
        if n < 2:
            continue
        v = payoff_vector(g, k, x)
        assert v[1] - v[0] >= dominance_margin(g, k, 0, 1) - 1e-12


def test_iterated_dominance_prisoners_dilemma():
    assert iterated_dominance(prisoners_dilemma()) == [[1], [1]]
    assert iterated_dominance(matching_pennies()) == [[0, 1], [0, 1]]


# --- congestion ---------------------------------------------------------------------

def _two_paths(shared=1.0, other=0.0, disjoint=False):
    edges = (Edge("r", a=1.0, sigma=shared), Edge("p", a=1.0, sigma=other),
             Edge("q", a=2.0, sigma=other))
    paths = ((("p",), ("q",)),) if disjoint else ((("r", "p"), ("r", "q")),)
    return CongestionNetwork(edges=edges, paths=paths)


def test_shared_edge_covariance_is_its_variance():
    _, cov = build_congestion_game(_two_paths(shared=1.0))
    assert cov[0, 1] == pytest.approx(1.0)


def test_disjoint_paths_uncorrelated():
    _, cov = build_congestion_game(_two_paths(other=0.7, disjoint=True))
    assert cov[0, 1] == 0.0


def test_diagonal_is_sum_of_path_variances():
    _, cov = build_congestion_game(two_route_network(shared_sigma=0.5, route_sigma=2.0))
    assert np.allclose(np.diag(cov), [0.25 + 4.0, 0.25 + 4.0])
    assert cov[0, 1] == pytest.approx(0.25)


def test_congestion_payoffs_are_negated_delays():
    g, _ = build_congestion_game(parallel_links(2, ((1.0, 2.0), (1.5, 2.0))))
    # both on link0: load 2 -> delay 1 + 2*2
    assert g.payoffs[0][0, 0] == pytest.approx(-5.0)
    assert g.payoffs[0][0, 1] == pytest.approx(-3.0)
    assert g.payoffs[1][0, 1] == pytest.approx(-3.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 3), min_size=4, max_size=4), st.integers(0, 2 ** 32 - 1))
def test_congestion_covariance_psd(sigmas, seed):
    rng = np.random.default_rng(seed)
    edges = tuple(Edge(f"e{i}", a=1.0, sigma=s) for i, s in enumerate(sigmas))
    names = [e.name for e in edges]
    paths = tuple(tuple(tuple(rng.choice(names, size=rng.integers(1, 4), replace=False))
                        for _ in range(rng.integers(1, 4))) for _ in range(2))
    _, cov = build_congestion_game(CongestionNetwork(edges=edges, paths=paths))
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() >= -1e-10


def test_network_round_trip():
    net = two_route_network()
    assert CongestionNetwork.from_dict(net.to_dict()) == net


def test_network_validation():
    with pytest.raises(GameError):
        CongestionNetwork(edges=(Edge("a"),), paths=(((("b",),),)))
    with pytest.raises(GameError):
        CongestionNetwork(edges=(Edge("a", sigma=-1.0),), paths=((("a",),),))
