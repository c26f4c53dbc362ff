"""Uniform tensor grids, grid functions, dyadic cubes and Carleson boxes.

The computational domain is the cube [-L, L]^n sampled at the centers of
m^n equal cells (m a power of two).  Dyadic cubes are subcubes of the root
[-L, L]^n obtained by repeated halving; their faces always lie on cell
boundaries, so cube averages are exact Riemann sums.  Flat indexing is
C-order with the last coordinate fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GeometryError, ResolutionError


def _is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [-L, L]^n.

    Parameters
    ----------
    n : spatial dimension, 1, 2 or 3.
    m : cells per side, a power of two.
    half_width : L; the root cube is [-L, L]^n (default 2.0).
    """

    n: int
    m: int
    half_width: float = 2.0

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise GeometryError(f"dimension must be 1, 2 or 3, got {self.n}")
        if not _is_power_of_two(self.m):
            raise GeometryError(f"points per side must be a power of two, got {self.m}")
        if self.half_width <= 0:
            raise GeometryError("half_width must be positive")

    @property
    def h(self) -> float:
        """Cell spacing 2L/m."""
        return 2.0 * self.half_width / self.m

    @property
    def size(self) -> int:
        return self.m**self.n

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.n

    @property
    def max_level(self) -> int:
        """Deepest dyadic level whose cubes still contain one full cell."""
        return int(round(math.log2(self.m)))

    @cached_property
    def axis(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        L, h = self.half_width, self.h
        return -L + (np.arange(self.m) + 0.5) * h

    @cached_property
    def points(self) -> np.ndarray:
        """All cell centers, shape (m^n, n), C-order (last coordinate fastest)."""
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=-1)

    def cell_volume(self) -> float:
        return self.h**self.n

    def axis_index(self, coord: float) -> int:
        """Index of the cell center nearest to a single coordinate."""
        i = int(np.floor((coord + self.half_width) / self.h))
        return min(max(i, 0), self.m - 1)

    def flat_index(self, point) -> int:
        """Flat index of the cell center nearest to an n-dimensional point."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = [self.axis_index(point[a]) for a in range(self.n)]
        return int(np.ravel_multi_index(idx, self.shape))

    def flat_indices(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor((pts + self.half_width) / self.h).astype(int)
        idx = np.clip(idx, 0, self.m - 1)
        return np.ravel_multi_index(tuple(idx[:, a] for a in range(self.n)), self.shape)


@dataclass(frozen=True)
class GridFunction:
    """Real-valued function sampled at cell centers; integrates with weight h^n."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise GeometryError(
                f"values must have length {self.grid.size}, got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise GeometryError("grid function values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        pts = grid.points
        return cls(grid, np.asarray([fn(p) for p in pts], dtype=float))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.size))

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume())

    def norm_l1(self) -> float:
        return float(np.abs(self.values).sum() * self.grid.cell_volume())

    def norm_l2(self) -> float:
        return float(np.sqrt((self.values**2).sum() * self.grid.cell_volume()))

    def norm_sup(self) -> float:
        return float(np.abs(self.values).max())

    def __add__(self, other):
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class DyadicCube:
    """Dyadic subcube of the root [-L, L]^n.

    At level k there are 2^(nk) cubes of sidelength 2L/2^k; idx is the
    per-axis integer position in [0, 2^k).  The top point z_Q = (x_Q, t_Q)
    has t_Q equal to the sidelength.
    """

    grid: Grid
    level: int
    idx: tuple

    def __post_init__(self):
        if self.level < 0:
            raise GeometryError("cube level must be >= 0")
        if len(self.idx) != self.grid.n:
            raise GeometryError("cube index must have one entry per axis")
        if any(i < 0 or i >= 2**self.level for i in self.idx):
            raise GeometryError(f"cube index {self.idx} out of range at level {self.level}")

    @property
    def side(self) -> float:
        return 2.0 * self.grid.half_width / 2**self.level

    @property
    def lower(self) -> np.ndarray:
        return -self.grid.half_width + np.asarray(self.idx, dtype=float) * self.side

    @property
    def center(self) -> np.ndarray:
        return self.lower + 0.5 * self.side

    @property
    def top_point(self) -> tuple:
        """z_Q = (x_Q, t_Q) with t_Q = sidelength."""
        return (tuple(self.center), self.side)

    @property
    def volume(self) -> float:
        return self.side**self.grid.n

    @property
    def key(self) -> tuple:
        return (self.level, self.idx)

    @property
    def cells_per_side(self) -> int:
        if 2**self.level > self.grid.m:
            raise ResolutionError(
                f"level {self.level} is finer than the grid (m={self.grid.m})"
            )
        return self.grid.m // 2**self.level

    def axis_cell_range(self, a: int) -> range:
        c = self.cells_per_side
        return range(self.idx[a] * c, (self.idx[a] + 1) * c)

    @cached_property
    def cell_indices(self) -> np.ndarray:
        """Flat indices of all cell centers inside the cube."""
        ranges = [np.asarray(self.axis_cell_range(a)) for a in range(self.grid.n)]
        mesh = np.meshgrid(*ranges, indexing="ij")
        return np.ravel_multi_index(tuple(c.ravel() for c in mesh), self.grid.shape)

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise GeometryError("root cube has no parent")
        return DyadicCube(self.grid, self.level - 1, tuple(i // 2 for i in self.idx))

    def children(self) -> list:
        if 2 ** (self.level + 1) > self.grid.m:
            raise ResolutionError("children would be finer than the grid")
        out = []
        for off in np.ndindex(*([2] * self.grid.n)):
            out.append(
                DyadicCube(
                    self.grid,
                    self.level + 1,
                    tuple(2 * i + o for i, o in zip(self.idx, off)),
                )
            )
        return out

    def contains_cube(self, other: "DyadicCube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all(o >> shift == i for i, o in zip(self.idx, other.idx))


def root_cube(grid: Grid) -> DyadicCube:
    return DyadicCube(grid, 0, (0,) * grid.n)


def make_dyadic_tree(root: DyadicCube, max_depth: int) -> list:
    """All descendants of ``root`` down to ``max_depth`` levels, breadth first."""
    if max_depth < 0:
        raise GeometryError("max_depth must be >= 0")
    if 2 ** (root.level + max_depth) > root.grid.m:
        raise ResolutionError(
            f"depth {max_depth} from level {root.level} exceeds grid resolution m={root.grid.m}"
        )
    out = [root]
    frontier = [root]
    for _ in range(max_depth):
        nxt = []
        for cube in frontier:
            nxt.extend(cube.children())
        out.extend(nxt)
        frontier = nxt
    return out


def cube_average(f: GridFunction, cube: DyadicCube) -> float:
    """Mean of f over the cell centers inside the cube (exact cell quadrature)."""
    if cube.grid is not f.grid and cube.grid != f.grid:
        raise GeometryError("cube and function live on different grids")
    cells = cube.cell_indices
    if cells.size == 0:
        raise GeometryError("cube contains no cell centers")
    return float(f.values[cells].mean())


@dataclass(frozen=True)
class CarlesonBox:
    """Box over a cube: {(x, t): x in Q, 0 < t <= side(Q)} (top face closed)."""

    base: DyadicCube

    @property
    def height(self) -> float:
        return self.base.side

    @property
    def volume(self) -> float:
        return self.base.volume * self.height

    def contains(self, x, t: float) -> bool:
        lo = self.base.lower
        hi = lo + self.base.side
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= lo) and np.all(x <= hi) and 0.0 < t <= self.height)


def carleson_box(cube: DyadicCube) -> CarlesonBox:
    return CarlesonBox(cube)


@dataclass(frozen=True)
class HalfSpacePoint:
    """Point (x, t) of the upper half-space, t > 0."""

    x: tuple
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise GeometryError("height t must be positive")


def default_t_lattice(grid: Grid, t_min=None, t_max=None, ratio=math.sqrt(2.0)) -> np.ndarray:
    """Geometric lattice of heights, powers of sqrt(2) from h/2 up to 4L."""
    lo = grid.h / 2 if t_min is None else t_min
    hi = 4 * grid.half_width if t_max is None else t_max
    count = int(math.floor(math.log(hi / lo) / math.log(ratio) + 1e-9)) + 1
    ts = lo * ratio ** np.arange(count)
    return ts[ts <= hi * (1 + 1e-12)]
