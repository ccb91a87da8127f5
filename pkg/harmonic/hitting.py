from dataclasses import dataclass, field
from typing import Iterable, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import spsolve

from lattice.geometry import Box, Coord, Site
from utils.errors import ConvergenceError, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

DIRECT_SOLVE_LIMIT = 4096
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HittingProfile:
    """h(i) = P_i(walk reaches the targets before leaving the cube).

    ``values`` is indexed like ``box.sites``; the walk always lives on the
    full cube, also for origin-excluded model boxes.
    """

    box: Box
    targets: Tuple[Coord, ...]
    values: np.ndarray = field(repr=False)
    residual: float = 0.0
    method: str = "direct"

    def h(self, site: Site) -> float:
        if not self.box.in_cube(site):
            return 0.0
        return float(self.values[self.box.index(site)])

    def grid(self) -> np.ndarray:
        return self.values.reshape((2 * self.box.n + 1,) * self.box.d)

    def frame(self) -> pd.DataFrame:
        coords = np.array(self.box.sites, dtype=int).reshape(self.box.size, self.box.d)
        df = pd.DataFrame(coords, columns=[f"x{k + 1}" for k in range(self.box.d)])
        df["h"] = self.values
        return df


def _neighbor_sum(grid: np.ndarray) -> np.ndarray:
    """Sum over the 2d lattice neighbors with zero outside the cube."""
    padded = np.pad(grid, 1)
    total = np.zeros_like(grid)
    core = [slice(1, -1)] * grid.ndim
    for axis in range(grid.ndim):
        for start in (0, 2):
            window = list(core)
            window[axis] = slice(start, start + grid.shape[axis])
            total += padded[tuple(window)]
    return total


def harmonic_residual(grid: np.ndarray, target_mask: np.ndarray) -> float:
    d = grid.ndim
    defect = np.abs(_neighbor_sum(grid) - 2 * d * grid)
    free = ~target_mask
    return float(defect[free].max()) if free.any() else 0.0


def _direct(box: Box, target_mask: np.ndarray) -> np.ndarray:
    flat_targets = target_mask.ravel()
    free = np.flatnonzero(~flat_targets)
    if free.size == 0:
        return np.ones(target_mask.shape)
    position = -np.ones(box.size, dtype=int)
    position[free] = np.arange(free.size)

    rows, cols, vals = [], [], []
    rhs = np.zeros(free.size)
    for i, j in box.bonds:
        for a, b in ((i, j), (j, i)):
            if position[a] < 0:
                continue
            if flat_targets[b]:
                rhs[position[a]] += 1.0
            else:
                rows.append(position[a])
                cols.append(position[b])
                vals.append(-1.0)
    rows.extend(range(free.size))
    cols.extend(range(free.size))
    vals.extend([2.0 * box.d] * free.size)
    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(free.size, free.size))

    values = np.ones(box.size)
    values[free] = np.atleast_1d(spsolve(matrix.tocsc(), rhs))
    return values.reshape(target_mask.shape)


def _red_black_sor(box: Box, target_mask: np.ndarray, tol: float, max_sweeps: int) -> np.ndarray:
    d, n = box.d, box.n
    grid = target_mask.astype(float)
    parity = np.indices(grid.shape).sum(axis=0) % 2
    colors = [(parity == c) & ~target_mask for c in (0, 1)]
    omega = 2.0 / (1.0 + np.sin(np.pi / (2 * n + 2)))

    residual = np.inf
    for sweep in range(1, max_sweeps + 1):
        for color in colors:
            update = _neighbor_sum(grid) / (2 * d)
            grid[color] = (1 - omega) * grid[color] + omega * update[color]
        if sweep % 10 == 0:
            residual = harmonic_residual(grid, target_mask)
            if residual <= tol:
                logger.debug("SOR converged after %d sweeps (omega=%.4f)", sweep, omega)
                return grid
    raise ConvergenceError(f"hitting solve did not converge in {max_sweeps} sweeps", residual)


def solve_hitting(
    box: Box,
    targets: Iterable[Site],
    tol: float = RESIDUAL_TOL,
    direct_limit: int = DIRECT_SOLVE_LIMIT,
    max_sweeps: int = 200_000,
) -> HittingProfile:
    """Solve the discrete Dirichlet problem: 1 on targets, 0 outside the cube."""
    cube = box.full()
    coords = tuple(sorted({cube.as_coord(t) for t in targets}))
    if not coords:
        raise PreconditionError("solve_hitting needs at least one target site")
    for t in coords:
        if not cube.in_cube(t):
            raise PreconditionError(f"target {t} is outside the cube of half-width {cube.n}")

    shape = (2 * cube.n + 1,) * cube.d
    target_mask = np.zeros(cube.size, dtype=bool)
    target_mask[cube.indices(coords)] = True
    target_mask = target_mask.reshape(shape)

    if cube.size <= direct_limit:
        grid, method = _direct(cube, target_mask), "direct"
    else:
        grid, method = _red_black_sor(cube, target_mask, tol, max_sweeps), "sor"

    residual = harmonic_residual(grid, target_mask)
    if residual > tol:
        raise ConvergenceError("hitting profile residual above tolerance", residual)
    values = np.clip(grid.ravel(), 0.0, 1.0)
    logger.debug("hitting profile d=%d n=%d targets=%s via %s", cube.d, cube.n, coords, method)
    return HittingProfile(cube, coords, values, residual, method)
