"""Multi-wall path-loss model with exponential fading, and synthetic corpus generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fingerprints import RawMeasurementRow

# Distances below this are clamped so the log term stays finite at an AP position.
MIN_DISTANCE_M = 0.1


@dataclass(frozen=True)
class PathLossParams:
    l0_db: float = 40.22
    gamma_pl: float = 1.64
    lc_db: float = 53.73
    lw_db: float = 4.51
    k_walls: int = 10
    lambda_exp: float = 0.5
    ptx_dbm: float = 20.0

    def __post_init__(self):
        if not self.gamma_pl > 0:
            raise ValueError(f"gamma_pl must be positive, got {self.gamma_pl}")
        if not self.lambda_exp > 0:
            raise ValueError(f"lambda_exp must be positive, got {self.lambda_exp}")
        if self.k_walls < 0 or int(self.k_walls) != self.k_walls:
            raise ValueError(f"k_walls must be a nonnegative integer, got {self.k_walls}")


@dataclass(frozen=True)
class Room:
    width: float
    height: float
    ap_positions: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"room must have positive area, got {self.width}x{self.height}")
        for x, y in self.ap_positions:
            if not (0 <= x <= self.width and 0 <= y <= self.height):
                raise ValueError(f"AP at ({x}, {y}) lies outside the room")

    @classmethod
    def with_corner_aps(cls, width: float, height: float) -> "Room":
        corners = ((0.0, 0.0), (width, 0.0), (width, height), (0.0, height))
        return cls(width, height, corners)

    @property
    def ap_ids(self) -> list[str]:
        return [f"AP{i + 1}" for i in range(len(self.ap_positions))]


@dataclass(frozen=True)
class Grid:
    points: np.ndarray  # (n, 2)
    spacing: float

    def __len__(self):
        return len(self.points)


def path_loss(d, p: PathLossParams):
    """Loss in dB at distance ``d`` meters; accepts scalars or arrays."""
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("distance must be finite")
    d = np.maximum(d, MIN_DISTANCE_M)
    loss = p.l0_db + 10.0 * p.gamma_pl * np.log10(d) + p.lc_db + p.k_walls * p.lw_db
    return float(loss) if loss.ndim == 0 else loss


def sample_rssi(tx, rx, p: PathLossParams, rng: np.random.Generator, size=None):
    """Draw RSSI (dBm) at ``rx`` from an AP at ``tx``.

    The fading term is Exp(lambda_exp) with mean ``1 / lambda_exp`` and is always
    subtracted, so no draw exceeds ``ptx_dbm - path_loss(d)``.
    """
    d = math.dist(tx, rx)
    fading = rng.exponential(1.0 / p.lambda_exp, size=size)
    return p.ptx_dbm - path_loss(d, p) - fading


def make_square_grid(room: Room, spacing: float) -> Grid:
    """Lattice at cell centers: a 20x10 room with 1 m cells yields 200 points."""
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    if spacing > min(room.width, room.height):
        raise ValueError(f"spacing {spacing} exceeds the smaller room side; grid would be empty")
    nx = int(math.floor(room.width / spacing + 1e-9))
    ny = int(math.floor(room.height / spacing + 1e-9))
    xs = (np.arange(nx) + 0.5) * spacing
    ys = (np.arange(ny) + 0.5) * spacing
    # row-major in y, so index = iy * nx + ix
    gx, gy = np.meshgrid(xs, ys)
    return Grid(np.column_stack([gx.ravel(), gy.ravel()]), float(spacing))


def _measure(room: Room, locations: np.ndarray, m_per_ap: int, p: PathLossParams, rng) -> list[RawMeasurementRow]:
    aps = np.asarray(room.ap_positions, dtype=float)
    ids = room.ap_ids
    rows = []
    for loc in locations:
        dists = np.linalg.norm(aps - loc, axis=1)
        clean = p.ptx_dbm - path_loss(dists, p)
        fading = rng.exponential(1.0 / p.lambda_exp, size=(len(aps), m_per_ap))
        rssi = clean[:, None] - fading
        rows.append(RawMeasurementRow(
            (float(loc[0]), float(loc[1])),
            {ap: [float(v) for v in rssi[i]] for i, ap in enumerate(ids)},
        ))
    return rows


def simulate_database(room: Room, grid: Grid, m_per_ap: int, p: PathLossParams,
                      rng: np.random.Generator) -> list[RawMeasurementRow]:
    """One row per grid point holding ``m_per_ap`` draws from every AP."""
    if m_per_ap < 1:
        raise ValueError("m_per_ap must be at least 1")
    if len(grid) == 0:
        raise ValueError("grid is empty")
    if not room.ap_positions:
        raise ValueError("room has no access points")
    return _measure(room, np.asarray(grid.points, dtype=float), m_per_ap, p, rng)


def random_locations(room: Room, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([rng.uniform(0.0, room.width, n), rng.uniform(0.0, room.height, n)])


def simulate_test_set(room: Room, n: int, m_per_ap: int, p: PathLossParams,
                      rng: np.random.Generator) -> list[RawMeasurementRow]:
    """``n`` uniformly placed test points measured like the training grid."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if m_per_ap < 1:
        raise ValueError("m_per_ap must be at least 1")
    return _measure(room, random_locations(room, n, rng), m_per_ap, p, rng)
