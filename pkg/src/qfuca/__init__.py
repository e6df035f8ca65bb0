"""Quasi-fractal circular array LOS MIMO simulation toolkit."""

__version__ = "0.1.0"

from .errors import ConfigError, InfeasibleGeometry, LayoutSpecError, SizeGuardError
from .geometry import (ArrayLayout, LayoutSpec, RigidTransform, ValidationReport,
                       build_layout, element_count, transform_layout,
                       validate_layout)
from .channel import (SPEED_OF_LIGHT, LinkConfig, LogicalChannel, PhysicalChannel,
                      bccb_deviation, build_physical_channel, channel_rank,
                      estimate_bccb_csi, freespace_gain, idealize_bccb,
                      lift_to_logical)
from .analysis import (CapacityCurve, ComplexityReport, EigenSpectrum,
                       LayoutSearchResult, SirReport, capacity_curve,
                       complexity_comparison, complexity_table, effective_rank,
                       eigen_spectrum, eigen_spectrum_dense, search_max_streams,
                       stream_sir, unitary_dft_matrix, water_filling_allocation)
from .transceiver import (NoiseConfig, TransceiverChain, active_streams,
                          combine_to_elements, demodulate_2d, modulate_2d,
                          propagate, split_to_logical)
from .detection import (BerCurve, BerScenario, Constellation, detect_joint_ml,
                        detect_symbolwise, nearest_symbol_indices, run_ber)

__all__ = [
    "ArrayLayout", "BerCurve", "BerScenario", "CapacityCurve",
    "ComplexityReport", "ConfigError", "Constellation", "EigenSpectrum",
    "InfeasibleGeometry", "LayoutSearchResult", "LayoutSpec",
    "LayoutSpecError", "LinkConfig", "LogicalChannel", "NoiseConfig",
    "PhysicalChannel", "RigidTransform", "SPEED_OF_LIGHT", "SirReport",
    "SizeGuardError", "TransceiverChain", "ValidationReport",
    "active_streams", "bccb_deviation", "build_layout",
    "build_physical_channel", "capacity_curve", "channel_rank",
    "combine_to_elements", "complexity_comparison", "complexity_table",
    "demodulate_2d", "detect_joint_ml", "detect_symbolwise", "effective_rank",
    "eigen_spectrum", "eigen_spectrum_dense", "element_count",
    "estimate_bccb_csi", "freespace_gain", "idealize_bccb", "lift_to_logical",
    "modulate_2d", "nearest_symbol_indices", "propagate", "run_ber",
    "search_max_streams", "split_to_logical", "stream_sir", "transform_layout",
    "unitary_dft_matrix", "validate_layout", "water_filling_allocation",
]
