"""Symbol detection and bit-error-rate Monte Carlo over the full chain.

Constellations are unit-energy phase-shift keying with Gray-coded bit
labels.  Detection schemes: independent per-stream nearest-point decisions
after diagonal equalization, zero forcing through the pseudo-inverse of the
symbol response, and an exhaustive joint maximum-likelihood oracle guarded
to tiny hypothesis counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .channel import LinkConfig, LogicalChannel
from .errors import SizeGuardError
from .geometry import LayoutSpec, build_layout
from .transceiver import (DEFAULT_EQ_TOLERANCE, CHANNEL_MODELS, NOISE_MODES,
                          TransceiverChain, modulate_2d)

JOINT_ML_HYPOTHESIS_LIMIT = 1 << 16
_TRIALS_PER_BLOCK = 1 << 14  # RNG substream granularity of the BER loop

DETECTION_SCHEMES = ("symbolwise_ml", "zero_forcing", "joint_ml")


@dataclass(frozen=True)
class Constellation:
    """Unit-energy PSK alphabet ``exp(2j pi v / order)``."""

    order: int

    def __post_init__(self):
        if not isinstance(self.order, int) or self.order < 2:
            raise ValueError(f"order must be an integer >= 2, got {self.order!r}")

    @property
    def points(self) -> np.ndarray:
        return np.exp(2j * np.pi * np.arange(self.order) / self.order)

    @property
    def bits_per_symbol(self) -> int:
        if self.order & (self.order - 1):
            raise ValueError(f"bit mapping needs a power-of-two order, got {self.order}")
        return self.order.bit_length() - 1

    @property
    def gray_codes(self) -> np.ndarray:
        v = np.arange(self.order)
        return v ^ (v >> 1)


def nearest_symbol_indices(values, constellation: Constellation) -> np.ndarray:
    """Index of the closest constellation point; ties go to the lowest index."""
    values = np.asarray(values, dtype=complex)
    dist = np.abs(values[..., None] - constellation.points)
    return np.argmin(dist, axis=-1)


def detect_symbolwise(grid_estimate, constellation: Constellation,
                      active=None) -> np.ndarray:
    """Per-stream nearest-point decisions; inactive streams decide to zero."""
    idx = nearest_symbol_indices(grid_estimate, constellation)
    decided = constellation.points[idx]
    if active is not None:
        decided = np.where(active, decided, 0.0)
    return decided


def detect_joint_ml(ch: LogicalChannel, r, constellation: Constellation) -> np.ndarray:
    """Exhaustive joint maximum-likelihood decision over all symbol grids.

    Minimizes ``|r - H modulate(s)|`` over every hypothesis grid; ties go to
    the lexicographically smallest grid.  ``r`` is a normalized logical
    receive vector (no power scale).
    """
    n, k = ch.num_cells, ch.slots_per_cell
    v = constellation.order
    n_hyp = v ** (n * k)
    if n_hyp > JOINT_ML_HYPOTHESIS_LIMIT:
        raise SizeGuardError(
            f"joint ML needs {n_hyp} hypotheses, limit is {JOINT_ML_HYPOTHESIS_LIMIT}")
    idx_grids = np.array(list(product(range(v), repeat=n * k)), dtype=np.int64)
    hypotheses = constellation.points[idx_grids].reshape(n_hyp, n, k)
    predicted = modulate_2d(hypotheses) @ ch.matrix.T
    r = np.asarray(r, dtype=complex).reshape(n * k)
    cost = np.sum(np.abs(r - predicted) ** 2, axis=-1)
    best = int(np.argmin(cost))
    return constellation.points[idx_grids[best]].reshape(n, k)


@dataclass(frozen=True)
class BerScenario:
    """Everything one BER run needs, including the seed."""

    layout_spec: LayoutSpec
    link: LinkConfig
    constellation_order: int = 4
    noise_mode: str = "physical"
    channel_model: str = "idealized"
    snr_db: tuple = (0.0, 5.0, 10.0)
    trials: int = 1000
    seed: int = 0
    scheme: str = "symbolwise_ml"
    eq_tolerance: float = DEFAULT_EQ_TOLERANCE

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials!r}")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
        if self.channel_model not in CHANNEL_MODELS:
            raise ValueError(f"channel_model must be one of {CHANNEL_MODELS}")
        if self.scheme not in DETECTION_SCHEMES:
            raise ValueError(f"scheme must be one of {DETECTION_SCHEMES}")
        Constellation(self.constellation_order).bits_per_symbol
        if self.scheme == "joint_ml":
            nk = self.layout_spec.num_slots
            if self.constellation_order ** nk > JOINT_ML_HYPOTHESIS_LIMIT:
                raise SizeGuardError(
                    f"joint ML scheme infeasible: {self.constellation_order}^{nk} "
                    f"hypotheses exceed {JOINT_ML_HYPOTHESIS_LIMIT}")


@dataclass(frozen=True, eq=False)
class BerCurve:
    """Bit-error counts per SNR point with binomial confidence half-widths."""

    scenario: BerScenario
    snr_db: np.ndarray
    bit_errors: np.ndarray
    bits_sent: np.ndarray
    active_stream_count: int

    @property
    def ber(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.bits_sent > 0,
                            self.bit_errors / np.maximum(self.bits_sent, 1), np.nan)

    @property
    def ci95_halfwidth(self) -> np.ndarray:
        p = self.ber
        with np.errstate(invalid="ignore"):
            return 1.96 * np.sqrt(p * (1.0 - p) / np.maximum(self.bits_sent, 1))


def _decide_indices(chain: TransceiverChain, r, scheme: str,
                    constellation: Constellation, active: np.ndarray,
                    zf_pinv: np.ndarray | None) -> np.ndarray:
    n, k = chain.tx_layout.num_cells, chain.tx_layout.slots_per_cell
    if scheme == "symbolwise_ml":
        est, _ = chain.receive(r)
        return nearest_symbol_indices(est, constellation)
    if scheme == "zero_forcing":
        est = (r @ zf_pinv.T).reshape(*r.shape[:-1], n, k)
        return nearest_symbol_indices(est, constellation)
    decided = np.empty((*r.shape[:-1], n, k), dtype=np.int64)
    logical = chain.idealized if chain.channel_model != "exact" else chain.exact_logical
    for i in range(r.shape[0]):
        grid = detect_joint_ml(logical, r[i], constellation)
        decided[i] = nearest_symbol_indices(grid, constellation)
    return decided


def run_ber(scenario: BerScenario) -> BerCurve:
    """Monte Carlo BER of the full chain, deterministic for a given seed.

    Trials are processed in fixed-size blocks whose noise streams are keyed
    by (seed, snr index, block index), so results do not depend on how the
    blocks are scheduled.  Inactive streams carry no symbols and contribute
    no bits.
    """
    chain = TransceiverChain.build(build_layout(scenario.layout_spec), scenario.link,
                                   channel_model=scenario.channel_model,
                                   eq_tolerance=scenario.eq_tolerance)
    const = Constellation(scenario.constellation_order)
    active = chain.active()
    n_active = int(active.sum())
    bits_per_symbol = const.bits_per_symbol
    gray = const.gray_codes
    popcount = np.array([bin(x).count("1") for x in range(const.order)])

    zf_pinv = None
    if scenario.scheme == "zero_forcing":
        zf_pinv = np.linalg.pinv(chain.symbol_response())

    snr_db = np.asarray(scenario.snr_db, dtype=float)
    errors = np.zeros(len(snr_db), dtype=np.int64)
    bits = np.zeros(len(snr_db), dtype=np.int64)

    if n_active > 0:
        n, k = chain.tx_layout.num_cells, chain.tx_layout.slots_per_cell
        for p_idx, snr in enumerate(snr_db):
            rho = 10.0 ** (snr / 10.0)
            noise_power = scenario.link.total_power / rho if np.isfinite(rho) else 0.0
            done = 0
            block = 0
            while done < scenario.trials:
                size = min(_TRIALS_PER_BLOCK, scenario.trials - done)
                rng = np.random.default_rng(
                    np.random.SeedSequence([scenario.seed, p_idx, block]))
                tx_idx = rng.integers(0, const.order, size=(size, n, k))
                tx_idx[:, ~active] = 0
                grids = const.points[tx_idx] * active
                r = chain.transmit(grids, noise_mode=scenario.noise_mode,
                                   noise_power=noise_power, rng=rng)
                rx_idx = _decide_indices(chain, r, scenario.scheme, const,
                                         active, zf_pinv)
                diff = gray[tx_idx[:, active]] ^ gray[rx_idx[:, active]]
                errors[p_idx] += int(popcount[diff].sum())
                bits[p_idx] += size * n_active * bits_per_symbol
                done += size
                block += 1

    return BerCurve(scenario=scenario, snr_db=snr_db, bit_errors=errors,
                    bits_sent=bits, active_stream_count=n_active)
