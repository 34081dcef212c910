"""Receiver: nonlinear phase removal followed by projection on slot envelopes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from kerrchannel.channel import ChannelParams, ComplexSignal
from kerrchannel.errors import LayoutError
from kerrchannel.pulses import MIN_SAMPLES_PER_SLOT, PulseEnvelope, SlotLayout, basis_matrix


@dataclass(frozen=True)
class RecoveredSymbols:
    coefficients: np.ndarray
    spacing_delta: float
    labels: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return self.coefficients.shape[-1]


def remove_nonlinear_phase(output, params: ChannelParams):
    """X~(t_j) = psi(L, t_j) exp(-i gamma L |psi(L, t_j)|^2); moduli are untouched."""
    y = output.samples if isinstance(output, ComplexSignal) else np.asarray(output, dtype=complex)
    x = y * np.exp(-1j * params.gamma_L * (y.real**2 + y.imag**2))
    return output.with_samples(x) if isinstance(output, ComplexSignal) else x


def project_rows(recovered: np.ndarray, basis: np.ndarray, delta: float, slot_T0: float) -> np.ndarray:
    """Riemann-sum projection (delta/T0) sum_j f(t_j - c_k) X~_j for each row."""
    return (delta / slot_T0) * (np.asarray(recovered) @ basis.T)


def project_coefficients(
    recovered: ComplexSignal,
    envelope: PulseEnvelope,
    layout: SlotLayout,
    min_samples_per_slot: int = MIN_SAMPLES_PER_SLOT,
) -> RecoveredSymbols:
    """Estimate the slot coefficients from the phase-corrected field.

    The sum runs over every grid sample; compact envelopes vanish outside
    their own slot, so for them it reduces to the slot's samples.
    """
    if abs(layout.slot_T0 - envelope.slot_T0) > 1e-12 * envelope.slot_T0:
        raise LayoutError("layout and envelope disagree on the slot duration")
    F = basis_matrix(envelope, recovered.grid, layout, min_samples_per_slot)
    delta = recovered.grid.spacing_delta
    c = project_rows(recovered.samples, F, delta, envelope.slot_T0)
    return RecoveredSymbols(coefficients=c, spacing_delta=delta, labels=layout.labels)
