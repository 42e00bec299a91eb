import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sandlab.lattice import (
    HeightConfig,
    IllegalTopplingError,
    SiteOutsideWindowError,
    ToppleField,
    Window,
    is_stable,
    neighbors,
    topple,
    toppling_matrix_entry,
    unstable_sites,
    verify_evolution,
)

from oracle import brute_stabilize_all_orders


def test_window_basics():
    w = Window((-2,), (2,))
    assert w.dim == 1
    assert w.shape == (5,)
    assert w.size == 5
    assert w.contains((0,)) and not w.contains((3,))
    assert w.index((-2,)) == (0,)
    assert w.site_at((4,)) == (2,)
    assert list(w.sites())[0] == (-2,)
    with pytest.raises(SiteOutsideWindowError):
        w.index((5,))


def test_window_centered_and_2d():
    w = Window.centered(3, 2)
    assert w.lower == (-3, -3) and w.upper == (3, 3)
    assert w.size == 49
    sites = list(w.sites())
    assert sites[0] == (-3, -3)
    assert sites[1] == (-3, -2)  # lexicographic order
    assert sites[-1] == (3, 3)


def test_toppling_matrix():
    assert toppling_matrix_entry(1, (0,), (0,)) == 2
    assert toppling_matrix_entry(1, (0,), (1,)) == -1
    assert toppling_matrix_entry(1, (0,), (2,)) == 0
    assert toppling_matrix_entry(2, (0, 0), (0, 0)) == 4
    assert toppling_matrix_entry(2, (0, 0), (0, 1)) == -1
    assert toppling_matrix_entry(2, (0, 0), (1, 1)) == 0


def test_neighbors():
    assert set(neighbors((0,))) == {(-1,), (1,)}
    assert set(neighbors((1, 2))) == {(0, 2), (2, 2), (1, 1), (1, 3)}


def test_stability_threshold():
    w = Window((0,), (2,))
    stable = HeightConfig(w, np.array([1, 1, 1]), {})
    assert is_stable(stable)
    assert not is_stable(HeightConfig(w, np.array([1, 2, 1]), {}))
    w2 = Window((0, 0), (1, 1))
    assert is_stable(HeightConfig(w2, np.full((2, 2), 3), {}))
    assert not is_stable(HeightConfig(w2, np.array([[4, 0], [0, 0]]), {}))


def test_topple_legal():
    cfg = HeightConfig.from_values(0, [0, 3, 0])
    out = topple(cfg, (1,))
    assert list(out.heights) == [1, 1, 1]
    assert out.ledger == {}


def test_topple_exports_to_ledger():
    cfg = HeightConfig.from_values(0, [2, 0])
    out = topple(cfg, (0,))
    assert list(out.heights) == [0, 1]
    assert out.ledger == {(-1,): 1}
    again = topple(HeightConfig.from_values(0, [2]), (0,))
    assert again.ledger == {(-1,): 1, (1,): 1}


def test_topple_rejects_stable_site():
    cfg = HeightConfig.from_values(0, [1, 1])
    with pytest.raises(IllegalTopplingError):
        topple(cfg, (0,))


def test_forced_topple_never_goes_negative():
    cfg = HeightConfig.from_values(0, [1, 1])
    with pytest.raises(IllegalTopplingError):
        topple(cfg, (0,), mode="forced")
    tall = HeightConfig.from_values(0, [2, 1])
    assert list(topple(tall, (0,), mode="forced").heights) == [0, 2]


def test_unstable_sites():
    cfg = HeightConfig.from_values(-1, [1, 2, 5])
    assert unstable_sites(cfg) == [(0,), (1,)]


def test_height_config_validation():
    w = Window((0,), (1,))
    with pytest.raises(ValueError):
        HeightConfig(w, np.array([-1, 0]), {})
    with pytest.raises(ValueError):
        HeightConfig(w, np.array([0, 0]), {(5,): 1})  # not adjacent
    # zero ledger entries are dropped
    cfg = HeightConfig(w, np.array([0, 0]), {(-1,): 0})
    assert cfg.ledger == {}


def test_total_grains_includes_ledger():
    cfg = HeightConfig.from_values(0, [1, 2], ledger={(-1,): 3})
    assert cfg.total_grains() == 6


def test_verify_evolution_accepts_true_history():
    cfg = HeightConfig.from_values(0, [3, 0, 2])
    final, topples, lo, ro = brute_stabilize_all_orders(cfg.heights)
    final_cfg = HeightConfig(
        cfg.window,
        np.array(final),
        {(-1,): lo, (3,): ro},
    )
    field = ToppleField(cfg.window, np.array(topples))
    assert verify_evolution(cfg, field, final_cfg)


def test_verify_evolution_rejects_wrong_counts():
    cfg = HeightConfig.from_values(0, [3, 0, 2])
    final, topples, lo, ro = brute_stabilize_all_orders(cfg.heights)
    final_cfg = HeightConfig(cfg.window, np.array(final), {(-1,): lo, (3,): ro})
    bad = np.array(topples)
    bad[0] += 1
    assert not verify_evolution(cfg, ToppleField(cfg.window, bad), final_cfg)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=5))
def test_single_topple_preserves_grains(heights):
    cfg = HeightConfig.from_values(0, heights)
    for site in unstable_sites(cfg):
        out = topple(cfg, site)
        assert out.total_grains() == cfg.total_grains()
