from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Tuple

from lattice.geometry import Box, Coord, Site
from utils.errors import LatticeError


@dataclass(frozen=True)
class Config:
    """Packed occupancy: bit r holds the occupation of site r."""

    bits: int
    width: int

    def __post_init__(self):
        if self.width < 0:
            raise LatticeError(f"negative width {self.width}")
        if self.bits < 0 or self.bits >> self.width:
            raise LatticeError(f"bits {self.bits:#x} do not fit in width {self.width}")

    def __getitem__(self, index: int) -> int:
        return (self.bits >> index) & 1

    def count(self) -> int:
        return bin(self.bits).count("1")

    def occupied(self) -> List[int]:
        return [i for i in range(self.width) if (self.bits >> i) & 1]

    def text(self) -> str:
        return "".join("1" if (self.bits >> i) & 1 else "0" for i in range(self.width))

    def __str__(self) -> str:
        return self.text()

    @classmethod
    def from_text(cls, text: str) -> "Config":
        if any(ch not in "01" for ch in text):
            raise LatticeError(f"configuration text must be 0/1, got {text!r}")
        bits = sum(1 << i for i, ch in enumerate(text) if ch == "1")
        return cls(bits, len(text))

    @classmethod
    def from_sites(cls, box: Box, sites: Iterable[Site]) -> "Config":
        bits = 0
        for s in sites:
            bits |= 1 << box.index(s)
        return cls(bits, box.size)

    @classmethod
    def empty(cls, width: int) -> "Config":
        return cls(0, width)

    @classmethod
    def full(cls, width: int) -> "Config":
        return cls((1 << width) - 1, width)


def _check_site(c: Config, i: int) -> None:
    if not 0 <= i < c.width:
        raise LatticeError(f"site index {i} outside width {c.width}")


def exchange(c: Config, i: int, j: int) -> Config:
    """Swap the occupations of site indices ``i`` and ``j``."""
    _check_site(c, i)
    _check_site(c, j)
    if i == j:
        raise LatticeError("exchange needs two distinct sites")
    if ((c.bits >> i) ^ (c.bits >> j)) & 1:
        return Config(c.bits ^ ((1 << i) | (1 << j)), c.width)
    return c


def flip(c: Config, k: int) -> Config:
    _check_site(c, k)
    return Config(c.bits ^ (1 << k), c.width)


def leq(a: Config, b: Config) -> bool:
    """Coordinatewise order a ≼ b."""
    if a.width != b.width:
        raise LatticeError(f"cannot compare widths {a.width} and {b.width}")
    return a.bits & ~b.bits == 0


@dataclass(frozen=True)
class Pattern:
    """The increasing event {sum of occupations over ``sites`` >= threshold}."""

    box: Box
    sites: Tuple[Coord, ...]
    threshold: int

    def __post_init__(self):
        if self.threshold < 0:
            raise LatticeError(f"threshold must be non-negative, got {self.threshold}")
        coords = tuple(self.box.as_coord(s) for s in self.sites)
        for s in coords:
            if not self.box.contains(s):
                raise LatticeError(f"pattern site {s} is not in the box")
        object.__setattr__(self, "sites", coords)

    @classmethod
    def single_site(cls, box: Box) -> "Pattern":
        """A_1: a particle at the origin."""
        return cls(box, (box.origin,), 1)

    @classmethod
    def pair(cls, box: Box) -> "Pattern":
        """A_2: particles at the origin and at 0' = +e_1."""
        return cls(box, (box.origin, box.partner), 2)

    @cached_property
    def mask(self) -> int:
        m = 0
        for s in self.sites:
            m |= 1 << self.box.index(s)
        return m

    @cached_property
    def site_indices(self) -> Tuple[int, ...]:
        return tuple(self.box.index(s) for s in self.sites)

    def contains_bits(self, bits: int) -> bool:
        return bin(bits & self.mask).count("1") >= self.threshold


def in_pattern(p: Pattern, c: Config) -> bool:
    if c.width != p.box.size:
        raise LatticeError(f"configuration width {c.width} does not match box size {p.box.size}")
    return p.contains_bits(c.bits)
