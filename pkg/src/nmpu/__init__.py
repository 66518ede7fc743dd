"""Bit-accurate model of an 8-bit near-memory processing unit (NMPU) for
analog in-memory computing tiles, with design-space exploration, ADC
calibration, a crossbar simulator and an analytical performance model."""

from .datapath import (
    BatchNorm,
    FirstStageMethod,
    NmpuConfig,
    NmpuOutput,
    RealParams,
    SecondStageMethod,
    fold_bn,
    nmpu_process,
    nmpu_process_array,
    nmpu_reference,
    quantize_config,
    quantize_params,
)
from .dse import ALL_ARCHITECTURES, Architecture, explore, gen_stimulus
from .errors import NmpuError
from .fixedpoint import FixedFormat, FixedValue, Qs, Qu

__version__ = "0.1.0"

__all__ = [
    "ALL_ARCHITECTURES", "Architecture", "BatchNorm", "FirstStageMethod", "FixedFormat",
    "FixedValue", "NmpuConfig", "NmpuError", "NmpuOutput", "Qs", "Qu", "RealParams",
    "SecondStageMethod", "explore", "fold_bn", "gen_stimulus", "nmpu_process",
    "nmpu_process_array", "nmpu_reference", "quantize_config", "quantize_params",
]
