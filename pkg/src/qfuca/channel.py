"""Free-space line-of-sight channels between circular array layouts.

The physical channel holds per element-pair Friis gains.  Lifting replaces
element indices by logical slot indices, duplicating rows/columns of shared
elements; the lifted matrix of an aligned layout pair is block circulant at
the cell level and is idealized to a block-circulant matrix with circulant
blocks (BCCB), the structure the two-dimensional DFT diagonalizes exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import SizeGuardError
from .geometry import ArrayLayout

SPEED_OF_LIGHT = 299_792_458.0  # m/s

PROVENANCES = ("exact", "idealized_bccb", "estimated")


@dataclass(frozen=True)
class LinkConfig:
    """Carrier, geometry and power bookkeeping for one point-to-point link."""

    carrier_frequency: float
    link_distance: float
    total_power: float = 1.0
    noise_power: float = 1.0
    bandwidth: float = 1e6

    def __post_init__(self):
        for name in ("carrier_frequency", "link_distance", "total_power",
                     "noise_power", "bandwidth"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


def freespace_gain(distance, wavelength: float):
    """Complex free-space gain ``(lam / (4 pi d)) * exp(-2j pi d / lam)``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("distance must be positive and finite")
    if not (wavelength > 0 and math.isfinite(wavelength)):
        raise ValueError(f"wavelength must be positive and finite, got {wavelength!r}")
    gain = (wavelength / (4.0 * math.pi * d)) * np.exp(-2j * math.pi * d / wavelength)
    return gain if gain.ndim else complex(gain)


@dataclass(frozen=True, eq=False)
class PhysicalChannel:
    """Element-level gain matrix, shape (U_rx, U_tx)."""

    matrix: np.ndarray
    tx_layout: ArrayLayout
    rx_layout: ArrayLayout
    link: LinkConfig

    def __post_init__(self):
        self.matrix.setflags(write=False)


@dataclass(frozen=True, eq=False)
class LogicalChannel:
    """Channel over logical slots, row/column index = n * slots_per_cell + k."""

    matrix: np.ndarray
    num_cells: int
    slots_per_cell: int
    provenance: str

    def __post_init__(self):
        nk = self.num_cells * self.slots_per_cell
        if self.matrix.shape != (nk, nk):
            raise ValueError(f"logical matrix must be {nk}x{nk}, got {self.matrix.shape}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")
        self.matrix.setflags(write=False)

    @property
    def num_slots(self) -> int:
        return self.num_cells * self.slots_per_cell


def build_physical_channel(tx: ArrayLayout, rx: ArrayLayout, link: LinkConfig) -> PhysicalChannel:
    """Exact per-pair Friis gains with the receive array at the link distance.

    The receive layout keeps its own transverse coordinates (slot (n, k)
    faces slot (n, k) when no transform was applied) and is shifted along z
    by ``link.link_distance``.
    """
    if link.link_distance <= max(tx.spec.inter_radius, rx.spec.inter_radius):
        raise ValueError("link_distance must exceed the inter radius of both arrays")
    p_tx = np.asarray(tx.positions, dtype=float)
    p_rx = np.asarray(rx.positions, dtype=float) + np.array([0.0, 0.0, link.link_distance])
    dist = np.linalg.norm(p_rx[:, None, :] - p_tx[None, :, :], axis=-1)
    matrix = freespace_gain(dist, link.wavelength)
    return PhysicalChannel(matrix=matrix, tx_layout=tx, rx_layout=rx, link=link)


def lift_to_logical(phys: PhysicalChannel) -> LogicalChannel:
    """Re-index the physical channel by logical slots (provenance ``exact``)."""
    tx, rx = phys.tx_layout, phys.rx_layout
    if (tx.num_cells, tx.slots_per_cell) != (rx.num_cells, rx.slots_per_cell):
        raise ValueError("tx and rx layouts must have matching cell/slot counts")
    rmap = rx.slot_map.ravel()
    tmap = tx.slot_map.ravel()
    matrix = phys.matrix[np.ix_(rmap, tmap)].copy()
    return LogicalChannel(matrix=matrix, num_cells=tx.num_cells,
                          slots_per_cell=tx.slots_per_cell, provenance="exact")


def _bccb_project(matrix: np.ndarray, num_cells: int, slots_per_cell: int) -> np.ndarray:
    """BCCB completion anchored on the first matrix row."""
    n, k = num_cells, slots_per_cell
    base = matrix[0, :].reshape(n, k)
    rows = np.arange(n * k)
    rn, rk = rows // k, rows % k
    dn = (rn[None, :] - rn[:, None]) % n
    dk = (rk[None, :] - rk[:, None]) % k
    return base[dn, dk]


def idealize_bccb(logical: LogicalChannel) -> LogicalChannel:
    """Project a logical channel onto the nearest-anchor BCCB structure.

    Block m of the output is the circulant completion of the first row of
    input block (0, m); the blocks are then circulated over the cell index.
    """
    matrix = _bccb_project(logical.matrix, logical.num_cells, logical.slots_per_cell)
    return LogicalChannel(matrix=matrix, num_cells=logical.num_cells,
                          slots_per_cell=logical.slots_per_cell,
                          provenance="idealized_bccb")


def bccb_deviation(logical: LogicalChannel) -> float:
    """Relative Frobenius distance from the channel to its BCCB projection."""
    norm = np.linalg.norm(logical.matrix)
    if norm == 0:
        raise ValueError("bccb_deviation is undefined for the zero matrix")
    ideal = _bccb_project(logical.matrix, logical.num_cells, logical.slots_per_cell)
    return float(np.linalg.norm(logical.matrix - ideal) / norm)


def estimate_bccb_csi(pilot_response, num_cells: int, slots_per_cell: int) -> LogicalChannel:
    """Complete a BCCB channel from one impulse-pilot receive vector.

    ``pilot_response`` is the logical receive vector for a unit impulse on
    slot (0, 0), i.e. the first channel column; the BCCB index identities
    reconstruct the full matrix from it.  Exact for noiseless BCCB truth.
    """
    col = np.asarray(pilot_response, dtype=complex).ravel()
    n, k = num_cells, slots_per_cell
    if col.size != n * k:
        raise ValueError(f"pilot_response must have length {n * k}, got {col.size}")
    grid = col.reshape(n, k)
    rows = np.arange(n * k)
    rn, rk = rows // k, rows % k
    dn = (rn[:, None] - rn[None, :]) % n
    dk = (rk[:, None] - rk[None, :]) % k
    return LogicalChannel(matrix=grid[dn, dk], num_cells=n, slots_per_cell=k,
                          provenance="estimated")


def channel_rank(matrix: np.ndarray, rel_tol: float = 1e-10) -> int:
    """Rank with singular values below ``rel_tol * sigma_max`` counted as zero."""
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def write_channel_csv(matrix: np.ndarray, path) -> None:
    """Dump complex entries as (row, col, re, im); entries are unitless gains."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                v = matrix[i, j]
                writer.writerow([i, j, repr(float(v.real)), repr(float(v.imag))])
