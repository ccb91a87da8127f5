import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Tuple, Union

from utils.errors import LatticeError

Coord = Tuple[int, ...]
Site = Union[Coord, int]


@dataclass(frozen=True)
class Box:
    """The cube [-n, n]^d with lexicographic site indexing.

    With ``origin_excluded`` the origin is removed, which is the geometry of
    the birth-death model. Sites are coordinate tuples; bit operations use
    the site index.
    """

    d: int
    n: int
    origin_excluded: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise LatticeError(f"dimension must be positive, got {self.d}")
        if self.n < 0:
            raise LatticeError(f"half-width must be non-negative, got {self.n}")
        if self.origin_excluded and self.n == 0:
            raise LatticeError("removing the origin from a one-site box leaves no sites")

    @property
    def origin(self) -> Coord:
        return (0,) * self.d

    @cached_property
    def sites(self) -> Tuple[Coord, ...]:
        span = range(-self.n, self.n + 1)
        cube = itertools.product(span, repeat=self.d)
        return tuple(s for s in cube if not (self.origin_excluded and not any(s)))

    @cached_property
    def _index(self) -> Dict[Coord, int]:
        return {s: i for i, s in enumerate(self.sites)}

    @property
    def size(self) -> int:
        return len(self.sites)

    def as_coord(self, site: Site) -> Coord:
        if isinstance(site, tuple):
            coord = tuple(int(x) for x in site)
        elif self.d == 1:
            coord = (int(site),)
        else:
            raise LatticeError(f"site {site!r} must be a {self.d}-tuple")
        if len(coord) != self.d:
            raise LatticeError(f"site {site!r} has dimension {len(coord)}, box has {self.d}")
        return coord

    def in_cube(self, site: Site) -> bool:
        return all(abs(x) <= self.n for x in self.as_coord(site))

    def contains(self, site: Site) -> bool:
        return self.as_coord(site) in self._index

    def index(self, site: Site) -> int:
        coord = self.as_coord(site)
        try:
            return self._index[coord]
        except KeyError:
            raise LatticeError(f"site {coord} is not in the box (d={self.d}, n={self.n})") from None

    def coord(self, index: int) -> Coord:
        if not 0 <= index < self.size:
            raise LatticeError(f"site index {index} out of range 0..{self.size - 1}")
        return self.sites[index]

    @staticmethod
    def lattice_neighbors(coord: Coord) -> List[Coord]:
        out = []
        for axis in range(len(coord)):
            for step in (-1, 1):
                nb = list(coord)
                nb[axis] += step
                out.append(tuple(nb))
        return out

    @cached_property
    def _neighbor_indices(self) -> Tuple[Tuple[int, ...], ...]:
        table = []
        for s in self.sites:
            nbs = [self._index[c] for c in self.lattice_neighbors(s) if c in self._index]
            table.append(tuple(sorted(nbs)))
        return tuple(table)

    def neighbor_indices(self, index: int) -> Tuple[int, ...]:
        return self._neighbor_indices[index]

    @cached_property
    def _outside(self) -> Tuple[int, ...]:
        # n(i) counts neighbors outside the cube; the removed origin is not "outside"
        return tuple(
            sum(1 for c in self.lattice_neighbors(s) if not self.in_cube(c)) for s in self.sites
        )

    def outside_count(self, index: int) -> int:
        return self._outside[index]

    @cached_property
    def boundary(self) -> Tuple[int, ...]:
        return tuple(i for i, m in enumerate(self._outside) if m > 0)

    @cached_property
    def bonds(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(
            (i, j) for i in range(self.size) for j in self._neighbor_indices[i] if i < j
        )

    @cached_property
    def origin_neighbors(self) -> Tuple[Coord, ...]:
        """N_0 in the cube, in lexicographic order."""
        return tuple(sorted(c for c in self.lattice_neighbors(self.origin) if self.in_cube(c)))

    @property
    def partner(self) -> Coord:
        """The fixed neighbor 0' = +e_1 of the origin."""
        return (1,) + (0,) * (self.d - 1)

    def full(self) -> "Box":
        return Box(self.d, self.n) if self.origin_excluded else self

    def indices(self, sites: Iterable[Site]) -> List[int]:
        return [self.index(s) for s in sites]


def neighbors(box: Box, site: Site) -> List[Coord]:
    """In-box neighbors of ``site`` in site-index order."""
    return [box.coord(j) for j in box.neighbor_indices(box.index(site))]
