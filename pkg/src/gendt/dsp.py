"""Causal Butterworth low-pass filtering and integer-stride decimation.

Biquad coefficients come from the bilinear transform with cutoff pre-warping;
the cascade runs with zero initial conditions. All functions are stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import EmptyInput, GendtError
from .ptog import MeasurementSeries


class DspError(GendtError):
    pass


class InvalidCutoff(DspError):
    """Cutoff at or above the Nyquist frequency."""


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float
    sample_rate_hz: float
    order: int = 4
    zero_phase: bool = False

    def __post_init__(self) -> None:
        if self.order < 1:
            raise DspError(f"filter order must be >= 1, got {self.order}")
        if self.sample_rate_hz <= 0:
            raise DspError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if not 0 < self.cutoff_hz < self.sample_rate_hz / 2:
            raise InvalidCutoff(
                f"cutoff {self.cutoff_hz} Hz must lie in (0, {self.sample_rate_hz / 2}) Hz"
            )


@dataclass(frozen=True)
class DownsampleSpec:
    factor: int = 1

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise DspError(f"downsample factor must be >= 1, got {self.factor}")


def butter_sections(spec: FilterSpec) -> list[tuple[float, float, float, float, float]]:
    """Second-order sections (b0, b1, b2, a1, a2) for a unity-DC-gain low-pass.

    Conjugate analog pole pairs map to biquads; an odd order contributes one
    extra first-order section (b2 = a2 = 0).
    """
    n = spec.order
    k = math.tan(math.pi * spec.cutoff_hz / spec.sample_rate_hz)
    k2 = k * k
    sections = []
    for i in range(n // 2):
        # quadratic factor s^2 + 2 sin(theta) s + 1 of the normalized prototype
        c = 2.0 * math.sin(math.pi * (2 * i + 1) / (2 * n))
        a0 = 1.0 + c * k + k2
        sections.append(
            (k2 / a0, 2.0 * k2 / a0, k2 / a0, 2.0 * (k2 - 1.0) / a0, (1.0 - c * k + k2) / a0)
        )
    if n % 2:
        a0 = k + 1.0
        sections.append((k / a0, k / a0, 0.0, (k - 1.0) / a0, 0.0))
    return sections


def _run_cascade(x: list[float], sections) -> list[float]:
    y = x
    for b0, b1, b2, a1, a2 in sections:
        z1 = 0.0
        z2 = 0.0
        out = [0.0] * len(y)
        for i, v in enumerate(y):
            w = b0 * v + z1
            z1 = b1 * v - a1 * w + z2
            z2 = b2 * v - a2 * w
            out[i] = w
        y = out
    return y


def lowpass(x: Sequence[float], spec: FilterSpec) -> list[float]:
    """Apply the Butterworth cascade; output length equals input length.

    Causal single pass by default. With spec.zero_phase the cascade runs
    forward and backward (offline replay only), doubling the effective order
    and cancelling phase lag.
    """
    if len(x) == 0:
        raise EmptyInput("lowpass requires at least one sample")
    sections = butter_sections(spec)
    y = _run_cascade([float(v) for v in x], sections)
    if spec.zero_phase:
        y.reverse()
        y = _run_cascade(y, sections)
        y.reverse()
    return y


def downsample(x: Sequence[float], spec: DownsampleSpec) -> list[float]:
    """Keep every spec.factor-th sample starting at index 0."""
    if len(x) == 0:
        raise EmptyInput("downsample requires at least one sample")
    return [float(v) for v in x[:: spec.factor]]


def preprocess(series: MeasurementSeries, f: FilterSpec, dspec: DownsampleSpec) -> list[float]:
    """Low-pass then decimate one measurement series (order is fixed)."""
    if f.sample_rate_hz != series.sample_rate_hz:
        raise DspError(
            f"filter designed for {f.sample_rate_hz} Hz but series is {series.sample_rate_hz} Hz"
        )
    return downsample(lowpass(series.samples, f), dspec)


def resolve_downsample_factor(
    sample_rate_hz: float,
    factor: Optional[int] = None,
    target_rate_hz: Optional[float] = None,
) -> int:
    """Resolve a decimation factor from either an explicit factor or a target rate.

    Exactly one of the two must be given; a target rate maps to
    max(1, round(sample_rate / target_rate)).
    """
    if (factor is None) == (target_rate_hz is None):
        raise DspError("specify exactly one of factor or target_rate_hz")
    if factor is not None:
        if factor < 1:
            raise DspError(f"downsample factor must be >= 1, got {factor}")
        return int(factor)
    if target_rate_hz <= 0:
        raise DspError(f"target_rate_hz must be > 0, got {target_rate_hz}")
    return max(1, round(sample_rate_hz / target_rate_hz))
