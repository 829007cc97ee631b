import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from absynth.errors import CapacityExceeded, OutOfDomain, RegionNotGridAligned
from absynth.geometry import Box, Partition, RegionSet, build_partition, grid_boxes, locate, refine


def thermal_regions(goal=(20.75, 21.25)):
    return RegionSet(regions=(("goal", (Box((goal[0],), (goal[1],)),)),), safe=(Box((19.0,), (22.0,)),))


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Box((1.0,), (0.0,))


def test_box_roundtrip_and_contains():
    b = Box((0.0, 1.0), (2.0, 3.0))
    assert Box.from_dict(b.to_dict()) == b
    assert b.contains(np.array([2.0, 3.0]))
    assert not b.contains(np.array([2.1, 3.0]))
    assert b.radius == 1.0


def test_thermal_grid_example():
    p = build_partition(thermal_regions(), Box((19.0,), (22.0,)), (12,))
    assert p.n_cells == 12
    np.testing.assert_allclose(p.widths, [0.25])
    assert p.eta == 0.125
    goal_cells = np.flatnonzero(p.label_mask & (1 << p.atoms.index("goal")))
    assert goal_cells.tolist() == [7, 8]


def test_single_cell_partition():
    p = build_partition(RegionSet((), (Box((0.0,), (1.0,)),)), Box((0.0,), (1.0,)), (1,))
    assert p.n_cells == 1
    np.testing.assert_allclose(p.representative(0), [0.5])
    assert p.eta == 0.5


def test_misaligned_region_raises():
    with pytest.raises(RegionNotGridAligned):
        build_partition(thermal_regions((20.8, 21.2)), Box((19.0,), (22.0,)), (12,))


def test_refine_halves_eta():
    p = build_partition(thermal_regions(), Box((19.0,), (22.0,)), (12,))
    q = refine(p, 2)
    assert q.n_cells == 24 and q.eta == p.eta / 2
    etas = [p.eta]
    for _ in range(4):
        p = refine(p, 2)
        etas.append(p.eta)
    assert all(a > b > 0 for a, b in zip(etas, etas[1:]))


def test_refine_rejects_factor_one_and_capacity():
    p = build_partition(thermal_regions(), Box((19.0,), (22.0,)), (12,))
    with pytest.raises(ValueError):
        refine(p, 1)
    with pytest.raises(CapacityExceeded):
        build_partition(RegionSet((), (Box((0.0, 0.0), (1.0, 1.0)),)), Box((0.0, 0.0), (1.0, 1.0)), (10**5, 10**5))


def test_locate_examples():
    p = build_partition(thermal_regions(), Box((19.0,), (22.0,)), (12,))
    assert locate(p, np.array([19.0])) == 0
    assert locate(p, np.array([19.25])) == 1  # a shared face belongs to the cell starting there
    assert locate(p, np.array([22.0])) == 11
    with pytest.raises(OutOfDomain):
        locate(p, np.array([25.0]))


def test_obstacles_are_open_and_unsafe():
    r = RegionSet((), (Box((0.0, 0.0), (1.0, 1.0)),), (Box((0.2, 0.2), (0.4, 0.4)),))
    assert not r.is_safe(np.array([0.3, 0.3]))
    assert r.is_safe(np.array([0.2, 0.3]))
    assert not r.is_safe(np.array([1.5, 0.5]))


def test_safe_atom_is_reserved():
    with pytest.raises(ValueError):
        RegionSet(regions=(("safe", (Box((0.0,), (1.0,)),)),), safe=())


def test_partition_dict_roundtrip():
    p = build_partition(thermal_regions(), Box((18.5,), (23.75,)), (21,))
    q = Partition.from_dict(p.to_dict())
    assert q.counts == p.counts and q.atoms == p.atoms
    np.testing.assert_array_equal(q.label_mask, p.label_mask)


def test_grid_boxes_cover_box():
    lo, hi = grid_boxes(Box((-1.0, 0.0), (1.0, 2.0)), (4, 2))
    assert np.isclose(np.prod(hi - lo, axis=1).sum(), 4.0)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(2, 3), st.data())
def test_refinement_keeps_alignment_and_nesting(counts, factor, data):
    dim = len(counts)
    dom = Box(tuple([0.0] * dim), tuple(float(c) for c in counts))
    # a region aligned to the unit grid
    lo = [data.draw(st.integers(0, c - 1)) for c in counts]
    hi = [data.draw(st.integers(l + 1, c)) for l, c in zip(lo, counts)]
    reg = RegionSet((("r", (Box(tuple(map(float, lo)), tuple(map(float, hi))),)),), (dom,))
    p = build_partition(reg, dom, counts)
    q = refine(p, factor)
    x = np.array([data.draw(st.floats(0, c, allow_nan=False)) for c in counts])
    # the fine cell containing x lies inside the coarse cell containing x
    flo, fhi = q.cell_bounds(np.array([q.locate(x)]))
    clo, chi = p.cell_bounds(np.array([p.locate(x)]))
    assert np.all(flo >= clo - 1e-12) and np.all(fhi <= chi + 1e-12)
    assert q.eta == pytest.approx(p.eta / factor)


@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=20))
def test_locate_returns_a_containing_cell(xs):
    p = build_partition(RegionSet((), (Box((-50.0,), (50.0,)),)), Box((-50.0,), (50.0,)), (37,))
    x = np.array(xs)[:, None]
    cells = p.locate(x)
    lo, hi = p.cell_bounds(cells)
    assert np.all(lo <= x) and np.all(x <= hi)
    # lower-face points go to the upper cell
    assert np.all((x < hi) | (cells[:, None] == p.n_cells - 1))
