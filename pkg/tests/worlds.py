"""Hand-built deterministic worlds shared across test modules."""

import numpy as np

from coneplan.worldmap import OccupancyGrid


def bordered_grid(side=8.0, resolution=0.1):
    """Empty square world wrapped in a one-cell wall ring."""
    n = int(round(side / resolution))
    cells = np.zeros((n, n), dtype=bool)
    cells[0, :] = cells[-1, :] = True
    cells[:, 0] = cells[:, -1] = True
    return OccupancyGrid(resolution, (-side / 2.0, -side / 2.0), cells)


def add_disc(grid, center, radius):
    xs, ys = grid.cell_centers()
    grid.cells[(xs - center[0]) ** 2 + (ys - center[1]) ** 2 <= radius**2] = True
    return grid


def corridor_world():
    """Bordered 8 m square with one central disc: two route homotopies."""
    return add_disc(bordered_grid(), (0.0, 0.0), 0.8)


def theta_world():
    """Bordered 8 m square with two discs: three passages between the ends."""
    grid = bordered_grid()
    add_disc(grid, (0.0, -1.4), 0.7)
    add_disc(grid, (0.0, 1.4), 0.7)
    return grid
