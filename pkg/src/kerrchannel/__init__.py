"""Zero-dispersion Kerr fiber channel: simulation, detection and capacity."""

__version__ = "0.1.0"

from kerrchannel.channel import (
    ChannelParams,
    ComplexSignal,
    PowerRangeDiagnostics,
    SymbolSequence,
    TimeGrid,
    average_power,
    validate_power_range,
)
from kerrchannel.pulses import (
    EnvelopeMoments,
    PulseEnvelope,
    SlotLayout,
    check_overlap,
    envelope_moment,
    envelope_moments,
    envelope_xi,
    synthesize_signal,
)
from kerrchannel.detection import (
    RecoveredSymbols,
    project_coefficients,
    remove_nonlinear_phase,
)

__all__ = [
    "ChannelParams",
    "ComplexSignal",
    "EnvelopeMoments",
    "PowerRangeDiagnostics",
    "PulseEnvelope",
    "RecoveredSymbols",
    "SlotLayout",
    "SymbolSequence",
    "TimeGrid",
    "average_power",
    "check_overlap",
    "envelope_moment",
    "envelope_moments",
    "envelope_xi",
    "project_coefficients",
    "remove_nonlinear_phase",
    "synthesize_signal",
    "validate_power_range",
]
