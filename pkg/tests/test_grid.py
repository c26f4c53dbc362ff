import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schrodinger_bmo.errors import GeometryError, ResolutionError
from schrodinger_bmo.grid import (
    CarlesonBox,
    DyadicCube,
    Grid,
    GridFunction,
    carleson_box,
    cube_average,
    default_t_lattice,
    make_dyadic_tree,
    root_cube,
)


def test_grid_invariants():
    g = Grid(1, 8)
    assert g.h == 0.5
    assert g.size == 8
    with pytest.raises(GeometryError):
        Grid(4, 8)
    with pytest.raises(GeometryError):
        Grid(1, 12)  # not a power of two


def test_tree_counts_depth_zero_and_two():
    g = Grid(1, 16)
    assert make_dyadic_tree(root_cube(g), 0) == [root_cube(g)]
    assert len(make_dyadic_tree(root_cube(g), 2)) == 7


def test_tree_count_2d_against_enumeration_oracle():
    # oracle: enumerate (level, idx) pairs directly
    g = Grid(2, 16)
    tree = make_dyadic_tree(root_cube(g), 3)
    oracle = {(k, idx) for k in range(4) for idx in np.ndindex(2**k, 2**k)}
    assert len(tree) == 85
    assert {(c.level, tuple(c.idx)) for c in tree} == oracle


def test_tree_depth_exceeding_grid_raises():
    g = Grid(1, 8)
    with pytest.raises(ResolutionError):
        make_dyadic_tree(root_cube(g), 4)


def test_cube_average_constant_odd_indicator():
    g = Grid(1, 64)
    root = root_cube(g)
    c = GridFunction(g, np.full(g.size, 3.25))
    assert cube_average(c, root) == pytest.approx(3.25)
    odd = GridFunction(g, g.points[:, 0])
    assert cube_average(odd, root) == pytest.approx(0.0, abs=1e-14)
    ind = GridFunction(g, (g.points[:, 0] > 0).astype(float))
    assert cube_average(ind, root) == pytest.approx(0.5)


def test_cube_average_linear_and_monotone():
    g = Grid(1, 32)
    rng = np.random.default_rng(3)
    f = GridFunction(g, rng.normal(size=g.size))
    v = GridFunction(g, rng.normal(size=g.size))
    cube = root_cube(g).children()[0]
    lhs = cube_average(GridFunction(g, 2 * f.values + v.values), cube)
    assert lhs == pytest.approx(2 * cube_average(f, cube) + cube_average(v, cube))
    below = GridFunction(g, f.values - 1.0)
    assert cube_average(below, cube) <= cube_average(f, cube)


def test_siblings_tile_parent():
    g = Grid(2, 16)
    parent = root_cube(g).children()[2]
    kids = parent.children()
    cells = np.concatenate([k.cell_indices for k in kids])
    assert np.array_equal(np.sort(cells), np.sort(parent.cell_indices))
    assert sum(k.volume for k in kids) == pytest.approx(parent.volume)


def test_carleson_box_geometry():
    g = Grid(1, 8)
    root = root_cube(g)
    box = carleson_box(root)
    assert box.height == pytest.approx(4.0)
    assert box.volume == pytest.approx(16.0)
    child = root.children()[0]
    assert carleson_box(child).base.side == pytest.approx(2.0)
    assert carleson_box(child).height == pytest.approx(2.0)
    g2 = Grid(2, 8)
    unit = DyadicCube(g2, 2, (0, 0))  # side 1
    assert carleson_box(unit).volume == pytest.approx(1.0)


def test_box_contains_respects_closed_top():
    g = Grid(1, 8)
    box = carleson_box(root_cube(g))
    assert box.contains([0.0], 4.0)
    assert not box.contains([0.0], 4.0001)
    assert not box.contains([0.0], 0.0)


def test_children_boxes_and_top_slab_partition_parent_box():
    # volume bookkeeping for the half-open top-slab decomposition
    g = Grid(1, 16)
    root = root_cube(g)
    kids = root.children()
    slab_volume = root.volume * (root.side / 2)
    child_boxes = sum(carleson_box(k).volume for k in kids)
    assert child_boxes + slab_volume == pytest.approx(carleson_box(root).volume)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3))
def test_cube_cell_count_matches_volume(level, kid):
    g = Grid(1, 16)
    cube = root_cube(g)
    for _ in range(level):
        cube = cube.children()[kid % 2]
    assert cube.cell_indices.size == g.m // 2**cube.level
    assert cube.cell_indices.size * g.cell_volume() == pytest.approx(cube.volume)


def test_grid_function_validation():
    g = Grid(1, 8)
    with pytest.raises(GeometryError):
        GridFunction(g, np.ones(7))
    with pytest.raises(GeometryError):
        GridFunction(g, np.array([np.nan] * 8))


def test_default_t_lattice_spans_half_cell_to_four_halfwidths():
    g = Grid(1, 64)
    ts = default_t_lattice(g)
    assert ts[0] == pytest.approx(g.h / 2)
    assert ts[-1] == pytest.approx(4 * g.half_width)
    assert np.all(np.diff(np.log(ts)) > 0)
