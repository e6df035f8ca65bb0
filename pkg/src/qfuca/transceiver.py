"""Two-dimensional IDFT/DFT transceiver chain.

Symbols live on an (num_cells, slots_per_cell) grid.  Modulation is the
unitary 2D inverse DFT onto logical slots, the power combiner sums slot
amplitudes onto their shared physical elements, propagation applies the
physical channel plus circular complex Gaussian noise, the splitter copies
each element sample back to its slots, and demodulation applies the unitary
forward 2D DFT followed by per-stream division by the channel eigenvalue
(streams under the equalization gate are marked inactive and zeroed).

All operations accept leading batch dimensions; the grid axes are always the
trailing ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .analysis import EigenSpectrum, eigen_spectrum
from .channel import (LinkConfig, LogicalChannel, PhysicalChannel,
                      build_physical_channel, idealize_bccb, lift_to_logical)
from .geometry import ArrayLayout, RigidTransform, transform_layout

DEFAULT_EQ_TOLERANCE = 1e-8

NOISE_MODES = ("physical", "logical")
CHANNEL_MODELS = ("exact", "idealized", "identity")


@dataclass(frozen=True)
class NoiseConfig:
    """Noise injection point, power and seed for reproducible draws."""

    mode: str = "physical"
    noise_power: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"mode must be one of {NOISE_MODES}, got {self.mode!r}")
        if self.noise_power < 0 or not math.isfinite(self.noise_power):
            raise ValueError(f"noise_power must be nonnegative, got {self.noise_power!r}")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def complex_noise(rng: np.random.Generator, shape, power: float) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples with the given variance."""
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def modulate_2d(grid) -> np.ndarray:
    """Unitary 2D inverse DFT of a symbol grid, flattened to logical slots."""
    grid = np.asarray(grid, dtype=complex)
    n, k = grid.shape[-2:]
    x = np.fft.ifft2(grid, axes=(-2, -1)) * math.sqrt(n * k)
    return x.reshape(*grid.shape[:-2], n * k)


def forward_dft_2d(samples, num_cells: int, slots_per_cell: int) -> np.ndarray:
    """Unitary 2D forward DFT of flat logical samples, back to a grid."""
    r = np.asarray(samples, dtype=complex)
    grid = r.reshape(*r.shape[:-1], num_cells, slots_per_cell)
    return np.fft.fft2(grid, axes=(-2, -1)) / math.sqrt(num_cells * slots_per_cell)


def combine_matrix(layout: ArrayLayout) -> np.ndarray:
    """Indicator matrix summing slot amplitudes onto elements, shape (NK, U)."""
    nk = layout.spec.num_slots
    c = np.zeros((nk, layout.num_elements))
    c[np.arange(nk), layout.slot_map.ravel()] = 1.0
    return c


def combine_to_elements(x, layout: ArrayLayout, total_power: float) -> np.ndarray:
    """Power-combine logical amplitudes onto physical elements.

    The scale ``sqrt(total_power / num_slots)`` makes the expected radiated
    power of unit-variance symbol grids equal ``total_power`` regardless of
    how many slots share an element.
    """
    x = np.asarray(x, dtype=complex)
    nk = layout.spec.num_slots
    if x.shape[-1] != nk:
        raise ValueError(f"excitation must have {nk} slots, got {x.shape[-1]}")
    beta = math.sqrt(total_power / nk)
    return beta * (x @ combine_matrix(layout))


def propagate(tx, phys: PhysicalChannel, noise: NoiseConfig,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply the physical channel; add per-element noise in physical mode.

    Deterministic for a given ``noise.seed``; pass ``rng`` to draw from an
    external stream instead (used by batched Monte Carlo loops).
    """
    tx = np.asarray(tx, dtype=complex)
    u_tx = phys.matrix.shape[1]
    if tx.shape[-1] != u_tx:
        raise ValueError(f"transmit vector must have {u_tx} elements, got {tx.shape[-1]}")
    y = tx @ phys.matrix.T
    if noise.mode == "physical" and noise.noise_power > 0:
        gen = rng if rng is not None else noise.rng()
        y = y + complex_noise(gen, y.shape, noise.noise_power)
    return y


def split_to_logical(y, layout: ArrayLayout) -> np.ndarray:
    """Copy each element sample to all logical slots mapped onto it."""
    y = np.asarray(y, dtype=complex)
    if y.shape[-1] != layout.num_elements:
        raise ValueError(f"receive vector must have {layout.num_elements} elements, "
                         f"got {y.shape[-1]}")
    return y[..., layout.slot_map.ravel()]


def active_streams(spectrum: EigenSpectrum, eq_tolerance: float = DEFAULT_EQ_TOLERANCE) -> np.ndarray:
    """Boolean (num_cells, slots_per_cell) mask of equalizable streams."""
    mags = np.abs(spectrum.grid)
    peak = mags.max()
    if peak == 0:
        return np.zeros_like(mags, dtype=bool)
    return mags > eq_tolerance * peak


def demodulate_2d(r, spectrum: EigenSpectrum,
                  eq_tolerance: float = DEFAULT_EQ_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """Forward 2D DFT plus per-stream equalization against the spectrum.

    Returns the estimated symbol grid and the active-stream mask; inactive
    streams (eigenvalue magnitude below ``eq_tolerance`` times the peak) are
    zeroed instead of amplifying noise.
    """
    r = np.asarray(r, dtype=complex)
    n, k = spectrum.num_cells, spectrum.slots_per_cell
    if r.shape[-1] != n * k:
        raise ValueError(f"receive vector must have {n * k} slots, got {r.shape[-1]}")
    raw = forward_dft_2d(r, n, k)
    active = active_streams(spectrum, eq_tolerance)
    lam = np.where(active, spectrum.grid, 1.0)
    est = np.where(active, raw / lam, 0.0)
    return est, active


def write_frame_csv(samples, num_cells: int, slots_per_cell: int, path) -> None:
    """Debug dump of one logical frame as (cell, slot, re, im), unitless."""
    flat = np.asarray(samples, dtype=complex).ravel()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_index", "slot_index", "re", "im"])
        for i, v in enumerate(flat):
            writer.writerow([i // slots_per_cell, i % slots_per_cell,
                             repr(float(v.real)), repr(float(v.imag))])


# ---------------------------------------------------------------------------
# end-to-end chain


@dataclass(frozen=True, eq=False)
class TransceiverChain:
    """Precomputed end-to-end chain for one link and channel model.

    ``channel_model`` selects what the signal propagates through: the exact
    element-level channel, its BCCB idealization, or an all-unit-gain
    identity (calibration).  Demodulation always equalizes against the
    stored spectrum.  Received vectors are returned normalized by the power
    scale, so a noiseless idealized chain returns the transmitted grid.
    """

    tx_layout: ArrayLayout
    rx_layout: ArrayLayout
    link: LinkConfig
    channel_model: str
    physical: PhysicalChannel | None
    exact_logical: LogicalChannel | None
    idealized: LogicalChannel | None
    spectrum: EigenSpectrum
    eq_tolerance: float = DEFAULT_EQ_TOLERANCE

    @classmethod
    def build(cls, tx_layout: ArrayLayout, link: LinkConfig,
              rx_layout: ArrayLayout | None = None,
              rx_transform: RigidTransform | None = None,
              channel_model: str = "idealized",
              eq_tolerance: float = DEFAULT_EQ_TOLERANCE) -> "TransceiverChain":
        if channel_model not in CHANNEL_MODELS:
            raise ValueError(f"channel_model must be one of {CHANNEL_MODELS}, "
                             f"got {channel_model!r}")
        rx = rx_layout if rx_layout is not None else tx_layout
        if rx_transform is not None:
            rx = transform_layout(rx, rx_transform)
        n, k = tx_layout.num_cells, tx_layout.slots_per_cell
        if channel_model == "identity":
            ident = LogicalChannel(matrix=np.eye(n * k, dtype=complex), num_cells=n,
                                   slots_per_cell=k, provenance="idealized_bccb")
            physical, exact, ideal = None, None, ident
        else:
            physical = build_physical_channel(tx_layout, rx, link)
            exact = lift_to_logical(physical)
            ideal = idealize_bccb(exact)
        spectrum = eigen_spectrum(ideal)
        return cls(tx_layout=tx_layout, rx_layout=rx, link=link,
                   channel_model=channel_model, physical=physical,
                   exact_logical=exact, idealized=ideal, spectrum=spectrum,
                   eq_tolerance=eq_tolerance)

    @property
    def num_slots(self) -> int:
        return self.tx_layout.spec.num_slots

    @property
    def power_scale(self) -> float:
        return math.sqrt(self.link.total_power / self.num_slots)

    def active(self) -> np.ndarray:
        return active_streams(self.spectrum, self.eq_tolerance)

    def symbol_response(self) -> np.ndarray:
        """Matrix M with normalized receive model r = M s_flat + noise."""
        n, k = self.tx_layout.num_cells, self.tx_layout.slots_per_cell
        from .analysis import unitary_dft_matrix
        idft = unitary_dft_matrix(n, k).conj().T
        if self.channel_model == "identity":
            return idft
        logical = self.exact_logical if self.channel_model == "exact" else self.idealized
        return logical.matrix @ idft

    def transmit(self, grids, noise_mode: str = "logical", noise_power: float = 0.0,
                 rng: np.random.Generator | None = None) -> np.ndarray:
        """Run grids through the chain; returns normalized logical receive vectors."""
        if noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}, got {noise_mode!r}")
        x = modulate_2d(grids)
        beta = self.power_scale
        if self.channel_model == "identity":
            r = beta * x
        elif self.channel_model == "idealized":
            r = beta * (x @ self.idealized.matrix.T)
        else:
            tx_vec = combine_to_elements(x, self.tx_layout, self.link.total_power)
            y = tx_vec @ self.physical.matrix.T
            r = split_to_logical(y, self.rx_layout)
        if noise_power > 0:
            if rng is None:
                rng = np.random.default_rng(0)
            if noise_mode == "physical":
                u_rx = self.rx_layout.num_elements
                w = complex_noise(rng, (*r.shape[:-1], u_rx), noise_power)
                w = split_to_logical(w, self.rx_layout)
            else:
                w = complex_noise(rng, r.shape, noise_power)
            r = r + w
        return r / beta

    def receive(self, r) -> tuple[np.ndarray, np.ndarray]:
        """Demodulate normalized receive vectors to symbol-grid estimates."""
        return demodulate_2d(r, self.spectrum, self.eq_tolerance)
