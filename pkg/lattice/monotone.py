"""Up-sets of the Boolean cube, stored as truth tables.

An up-set of {0,1}^m is encoded as an integer with 2^m bits: bit x is set
when the configuration with bits x belongs to the set.
"""
from typing import Iterable, Iterator, List, Sequence, Union

from lattice.geometry import Box
from utils.errors import CapExceeded

MAX_ENUMERATION_SITES = 6


def _site_count(sites: Union[int, Box]) -> int:
    return sites.size if isinstance(sites, Box) else int(sites)


def _iter_upsets(m: int) -> Iterator[int]:
    if m == 0:
        yield from (0, 1)
        return
    lower = _upsets(m - 1)
    half = 1 << (m - 1)
    # points with the top variable unset form U0, set form U1; closure needs U0 ⊆ U1
    for u1 in lower:
        for u0 in lower:
            if u0 & ~u1 == 0:
                yield u0 | (u1 << half)


def _upsets(m: int) -> List[int]:
    return list(_iter_upsets(m))


def enumerate_monotone_functions(
    sites: Union[int, Box], max_sites: int = MAX_ENUMERATION_SITES
) -> Iterator[int]:
    """Yield every up-set of {0,1}^sites exactly once."""
    m = _site_count(sites)
    if m > max_sites:
        raise CapExceeded("monotone_enumeration_sites", max_sites, m)
    yield from _iter_upsets(m)


def is_upset(table: int, m: int) -> bool:
    """Filter used to cross-check the enumeration on small cubes."""
    for x in range(1 << m):
        if (table >> x) & 1:
            for i in range(m):
                if not (table >> (x | (1 << i))) & 1:
                    return False
    return True


def upset_members(table: int, m: int) -> List[int]:
    return [x for x in range(1 << m) if (table >> x) & 1]


def upset_closure(generators: Iterable[int], states: Sequence[int]) -> List[int]:
    """States of ``states`` lying above at least one generator."""
    gens = list(generators)
    return [s for s in states if any(g & ~s == 0 for g in gens)]
