"""Eigen-spectra, capacity, interference and complexity analysis.

A BCCB logical channel is diagonalized by the unitary two-dimensional DFT;
its eigenvalues are the unnormalized 2D DFT of the first matrix column,
indexed by the (cell, slot) frequency pair.  Everything downstream (capacity
curves, per-stream interference, detection cost accounting, layout search)
consumes that spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LogicalChannel
from .errors import InfeasibleGeometry, LayoutSpecError, SizeGuardError
from .geometry import LayoutSpec, build_layout, element_count

DENSE_EIGEN_LIMIT = 256
SIR_CAP_DB = 200.0


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    """Eigenvalues of a BCCB logical channel, flattened row-major over (n, k)."""

    values: np.ndarray
    num_cells: int
    slots_per_cell: int
    source: str  # "fft" | "dense"

    def __post_init__(self):
        nk = self.num_cells * self.slots_per_cell
        v = self.values
        if v.shape != (nk,):
            raise ValueError(f"spectrum must be a flat length-{nk} array, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectrum contains non-finite eigenvalues")
        v.setflags(write=False)

    @property
    def grid(self) -> np.ndarray:
        """Eigenvalues reshaped to (num_cells, slots_per_cell)."""
        return self.values.reshape(self.num_cells, self.slots_per_cell)


def eigen_spectrum(ch: LogicalChannel) -> EigenSpectrum:
    """Eigenvalues via 2D DFT of the first column (BCCB channels only)."""
    if ch.provenance == "exact":
        raise ValueError(
            "eigen_spectrum needs a BCCB channel; idealize the exact channel first")
    col = ch.matrix[:, 0].reshape(ch.num_cells, ch.slots_per_cell)
    values = np.fft.fft2(col).ravel()
    return EigenSpectrum(values=values, num_cells=ch.num_cells,
                         slots_per_cell=ch.slots_per_cell, source="fft")


def eigen_spectrum_dense(ch: LogicalChannel) -> EigenSpectrum:
    """Eigenvalues by a dense general solver (verification oracle).

    Ordering follows the solver, not the (n, k) frequency indexing; compare
    against the fft spectrum as multisets.
    """
    if ch.num_slots > DENSE_EIGEN_LIMIT:
        raise SizeGuardError(
            f"dense eigendecomposition limited to {DENSE_EIGEN_LIMIT} slots, "
            f"got {ch.num_slots}")
    values = np.linalg.eigvals(ch.matrix)
    return EigenSpectrum(values=values, num_cells=ch.num_cells,
                         slots_per_cell=ch.slots_per_cell, source="dense")


def effective_rank(spectrum: EigenSpectrum, rel_tol: float = 1e-10) -> int:
    """Count of eigenvalues above ``rel_tol`` times the largest magnitude."""
    if not 0 < rel_tol < 1:
        raise ValueError(f"rel_tol must be in (0, 1), got {rel_tol!r}")
    mags = np.abs(spectrum.values)
    if mags.size == 0:
        raise ValueError("empty spectrum")
    peak = mags.max()
    if peak == 0:
        return 0
    return int(np.sum(mags > rel_tol * peak))


def unitary_dft_matrix(num_cells: int, slots_per_cell: int) -> np.ndarray:
    """Unitary 2D forward DFT over row-major flattened (n, k) vectors."""
    fn = np.exp(-2j * np.pi * np.outer(np.arange(num_cells), np.arange(num_cells)) / num_cells)
    fk = np.exp(-2j * np.pi * np.outer(np.arange(slots_per_cell), np.arange(slots_per_cell)) / slots_per_cell)
    return np.kron(fn, fk) / math.sqrt(num_cells * slots_per_cell)


# ---------------------------------------------------------------------------
# capacity


@dataclass(frozen=True, eq=False)
class CapacityCurve:
    """Spectral efficiency versus per-receive-element SNR for both policies."""

    snr_db: np.ndarray
    efficiency_equal_power: np.ndarray  # bits/s/Hz
    efficiency_water_filling: np.ndarray  # bits/s/Hz
    throughput: np.ndarray  # bits/s, bandwidth times the selected policy
    policy: str
    bandwidth: float
    meta: dict


def water_filling_allocation(gains: np.ndarray, total_power: float) -> np.ndarray:
    """Optimal power split maximizing sum log2(1 + p_i g_i) at fixed total."""
    gains = np.asarray(gains, dtype=float)
    alloc = np.zeros_like(gains)
    positive = gains > 0
    if total_power <= 0 or not np.any(positive):
        return alloc
    g = np.sort(gains[positive])[::-1]
    inv = 1.0 / g
    for active in range(len(g), 0, -1):
        level = (total_power + inv[:active].sum()) / active
        if level > inv[active - 1]:
            break
    p = np.maximum(0.0, level - 1.0 / gains[positive])
    alloc[positive] = p
    return alloc


def capacity_curve(spectrum: EigenSpectrum, snr_db, policy: str = "equal_power",
                   bandwidth: float = 1e6, meta: dict | None = None) -> CapacityCurve:
    """Shannon spectral efficiency over the eigen-spectrum.

    Equal power splits the SNR budget uniformly over all ``num_slots``
    streams; water filling allocates it optimally over the nonzero gains.
    """
    if policy not in ("equal_power", "water_filling"):
        raise ValueError(f"policy must be equal_power or water_filling, got {policy!r}")
    snr_db = np.atleast_1d(np.asarray(snr_db, dtype=float))
    gains = np.abs(spectrum.values) ** 2
    nk = gains.size
    rho = 10.0 ** (snr_db / 10.0)

    eff_ep = np.log2(1.0 + np.outer(rho, gains) / nk).sum(axis=1)
    eff_wf = np.empty_like(eff_ep)
    for i, p in enumerate(rho):
        alloc = water_filling_allocation(gains, p)
        eff_wf[i] = float(np.log2(1.0 + alloc * gains).sum())

    selected = eff_ep if policy == "equal_power" else eff_wf
    return CapacityCurve(snr_db=snr_db, efficiency_equal_power=eff_ep,
                         efficiency_water_filling=eff_wf,
                         throughput=bandwidth * selected, policy=policy,
                         bandwidth=bandwidth, meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# per-stream interference


@dataclass(frozen=True, eq=False)
class SirReport:
    """Per-stream signal-to-interference ratios after the DFT combiner."""

    sir_db: np.ndarray  # flat, row-major over (n, k), capped at +-SIR_CAP_DB
    mean_sir_db: float
    num_cells: int
    slots_per_cell: int


def stream_sir(ch: LogicalChannel) -> SirReport:
    """SIR of each stream of the effective matrix F H F^H (any provenance)."""
    f = unitary_dft_matrix(ch.num_cells, ch.slots_per_cell)
    g = f @ ch.matrix @ f.conj().T
    power = np.abs(g) ** 2
    signal = np.diag(power).copy()
    interference = power.sum(axis=1) - signal
    with np.errstate(divide="ignore", invalid="ignore"):
        sir_db = 10.0 * np.log10(signal / interference)
    sir_db = np.where(interference == 0, SIR_CAP_DB, sir_db)
    sir_db = np.clip(np.nan_to_num(sir_db, nan=SIR_CAP_DB, posinf=SIR_CAP_DB,
                                   neginf=-SIR_CAP_DB), -SIR_CAP_DB, SIR_CAP_DB)
    return SirReport(sir_db=sir_db, mean_sir_db=float(sir_db.mean()),
                     num_cells=ch.num_cells, slots_per_cell=ch.slots_per_cell)


# ---------------------------------------------------------------------------
# detection complexity

ARCHITECTURES = ("qfuca", "uca", "ula")


@dataclass(frozen=True)
class ComplexityReport:
    """Exact integer operation counts for maximum-likelihood detection."""

    architecture: str
    additions: int
    multiplications: int

    @property
    def log10_additions(self) -> float:
        return math.log10(self.additions)

    @property
    def log10_multiplications(self) -> float:
        return math.log10(self.multiplications)


def complexity_table(num_cells: int, slots_per_cell: int, alphabet_size: int,
                     architecture: str) -> ComplexityReport:
    """Closed-form complex addition/multiplication counts.

    The circular-array architectures detect per stream after the 2D FFT; the
    linear-array reference enumerates all ``alphabet_size ** num_streams``
    hypotheses.  The log2 terms require the stream count to be a power of
    two so the counts stay exact integers.
    """
    if architecture not in ARCHITECTURES:
        raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {architecture!r}")
    n, k, v = num_cells, slots_per_cell, alphabet_size
    if n < 1 or k < 1:
        raise ValueError("num_cells and slots_per_cell must be positive")
    if v < 2:
        raise ValueError(f"alphabet_size must be at least 2, got {v!r}")
    nk = n * k
    if nk < 2 or nk & (nk - 1):
        raise ValueError(
            f"num_cells * slots_per_cell must be a power of two for the log2 "
            f"terms to be integral, got {nk}")
    log2_nk = nk.bit_length() - 1
    if architecture in ("qfuca", "uca"):
        additions = nk * log2_nk + nk * v
        multiplications = (nk // 2) * log2_nk + nk * (v + 1)
    else:
        additions = n * n * k * k * v ** nk
        multiplications = n * n * k * k + nk * v ** nk
    return ComplexityReport(architecture=architecture, additions=additions,
                            multiplications=multiplications)


def complexity_comparison(num_cells: int, slots_per_cell: int, alphabet_size: int) -> dict:
    """All three architectures plus the linear-over-circular cost ratios."""
    reports = {arch: complexity_table(num_cells, slots_per_cell, alphabet_size, arch)
               for arch in ARCHITECTURES}
    qf, ula = reports["qfuca"], reports["ula"]
    addition_ratio = ula.additions / qf.additions
    multiplication_ratio = ula.multiplications / qf.multiplications
    notes = [
        f"linear/circular addition ratio {addition_ratio:.3e}",
        f"linear/circular multiplication ratio {multiplication_ratio:.3e}",
    ]
    if (num_cells, slots_per_cell, alphabet_size) == (4, 8, 8):
        notes.append(
            "flag: the multiplication ratio implied by the closed forms is "
            f"{multiplication_ratio:.3e}; the widely quoted 1.89e27 for this "
            "configuration does not follow from them (the addition ratio "
            "1.95e29 does)")
    return {
        "reports": reports,
        "addition_ratio": addition_ratio,
        "multiplication_ratio": multiplication_ratio,
        "notes": notes,
    }


# ---------------------------------------------------------------------------
# layout search


@dataclass(frozen=True)
class SearchCandidate:
    case_id: int
    num_cells: int
    slots_per_cell: int
    chain_cells: int | None
    element_count: int
    stream_count: int


@dataclass(frozen=True)
class LayoutSearchResult:
    best: SearchCandidate | None
    candidates: tuple[SearchCandidate, ...]


def search_max_streams(element_budget: int, allowed_cases=(1, 2, 3, 4, 5),
                       n_range: tuple[int, int] = (1, 8),
                       k_range: tuple[int, int] = (3, 12),
                       inter_radius: float = 1.0) -> LayoutSearchResult:
    """Exhaustive search for the most streams within an element budget.

    Only geometrically buildable layouts count; the count formulas alone
    admit unconstructible parameter combinations.  The winner maximizes the
    stream count, with ties broken by fewer elements, then fewer cells.
    """
    if element_budget < 3:
        raise ValueError(f"element_budget must be at least 3, got {element_budget!r}")
    candidates = []
    for case_id in sorted(allowed_cases):
        for n in range(n_range[0], n_range[1] + 1):
            for k in range(k_range[0], k_range[1] + 1):
                chains = range(2, n) if case_id == 4 else (None,)
                for m in chains:
                    try:
                        spec = LayoutSpec(case_id=case_id, num_cells=n,
                                          slots_per_cell=k, chain_cells=m,
                                          inter_radius=inter_radius)
                        if element_count(spec) > element_budget:
                            continue
                        layout = build_layout(spec)
                    except (LayoutSpecError, InfeasibleGeometry):
                        continue
                    candidates.append(SearchCandidate(
                        case_id=case_id, num_cells=n, slots_per_cell=k,
                        chain_cells=m, element_count=layout.num_elements,
                        stream_count=spec.num_slots))
    best = None
    if candidates:
        best = min(candidates, key=lambda c: (-c.stream_count, c.element_count,
                                              c.num_cells, c.case_id, c.slots_per_cell))
    return LayoutSearchResult(best=best, candidates=tuple(candidates))
