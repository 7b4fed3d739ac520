"""Numeric series <-> comma-separated decimal strings, and prompt assembly.

The encoder produces the wire text embedded in the forecast prompt; the
decoder parses untrusted model output and never raises on bad input, it
returns a structured DecodeFailure instead.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional, Sequence, Union

from .errors import GendtError

log = logging.getLogger(__name__)

PLACEHOLDER = "<ENCODED TOKENIZED STRING>"

DEFAULT_PROMPT_TEMPLATE = (
    "You are a helpful assistant who performs time series predictions. "
    "The user will provide a sequence, and you will predict the remaining sequence. "
    "The sequence is represented by decimal strings separated by commas. "
    "Please continue the following sequence without producing any additional text. "
    "Do not say anything like 'the next terms in the sequence are', "
    "just return the numbers. Sequence: <ENCODED TOKENIZED STRING>."
)

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_RESERVED_SEPARATOR_CHARS = set("0123456789+-.")
_OVERFLOW_LIMIT = 1e9


class CodecError(GendtError):
    pass


class NonFiniteValue(CodecError):
    pass


class Overflow(CodecError):
    """Scaled magnitude too large for fixed-point formatting."""


class MissingPlaceholder(CodecError):
    pass


@dataclass(frozen=True)
class EncodingSpec:
    """Fixed-precision wire format: value/scale rendered with `decimals` digits."""

    decimals: int = 2
    separator: str = ","
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.decimals <= 10:
            raise CodecError(f"decimals must be in [0, 10], got {self.decimals}")
        if not self.separator:
            raise CodecError("separator must be non-empty")
        if any(ch in _RESERVED_SEPARATOR_CHARS for ch in self.separator):
            raise CodecError(f"separator {self.separator!r} collides with numeric characters")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise CodecError(f"scale must be a positive finite real, got {self.scale}")


@dataclass(frozen=True)
class SensorString:
    text: str
    count: int


@dataclass(frozen=True)
class DecodeFailure:
    """Attempt-level parse failure; a value, never an exception.

    reason "short": fewer values than expected, position = parsed count.
    reason "malformed": unparseable token, position = token index.
    reason "backend": transport-level failure carried through the ensemble.
    """

    reason: str
    position: int
    message: str = ""


def _quantum(decimals: int) -> Decimal:
    return Decimal(1).scaleb(-decimals)


def _format_value(value: float, spec: EncodingSpec) -> str:
    if not math.isfinite(value):
        raise NonFiniteValue(f"cannot encode non-finite value {value!r}")
    scaled = value / spec.scale
    if not math.isfinite(scaled) or abs(scaled) >= _OVERFLOW_LIMIT:
        raise Overflow(f"scaled magnitude {scaled!r} exceeds {_OVERFLOW_LIMIT:g}")
    # Decimal(float) is the exact binary value; HALF_UP rounds ties away from zero.
    return format(Decimal(scaled).quantize(_quantum(spec.decimals), rounding=ROUND_HALF_UP), "f")


def encode(values: Sequence[float], spec: EncodingSpec) -> SensorString:
    """Render values at fixed precision, joined by the separator."""
    parts = [_format_value(v, spec) for v in values]
    return SensorString(text=spec.separator.join(parts), count=len(parts))


def quantize(values: Sequence[float], spec: EncodingSpec) -> list[float]:
    """Round values to what they become after an encode/decode round trip."""
    return [float(_format_value(v, spec)) * spec.scale for v in values]


def _trim_trailing_junk(token: str) -> str:
    m = _NUMBER_RE.match(token)
    if m is None:
        return token
    if m.end() != len(token):
        log.debug("trimmed trailing junk %r from final token", token[m.end():])
    return token[: m.end()]


def decode(
    text: str, spec: EncodingSpec, expected_len: int
) -> Union[list[float], DecodeFailure]:
    """Parse model output into at most `expected_len` values.

    Total over arbitrary strings. Leading prose before the first number is
    stripped (models sometimes preface output despite instructions); trailing
    junk is trimmed from the final token only. More values than expected are
    truncated; fewer yield DecodeFailure("short", parsed_count); any bad token
    in between yields DecodeFailure("malformed", token_index).
    """
    first = _NUMBER_RE.search(text)
    if first is None:
        if not text.strip():
            return DecodeFailure("short", 0, "empty output")
        return DecodeFailure("malformed", 0, "no numeric tokens")
    if first.start() > 0:
        log.debug("stripped %d chars of leading prose before first number", first.start())

    tokens = text[first.start():].split(spec.separator)
    values: list[float] = []
    for i, token in enumerate(tokens):
        token = token.strip()
        if i == len(tokens) - 1:
            token = _trim_trailing_junk(token)
            if not token:
                break  # trailing separator
        if not token:
            return DecodeFailure("malformed", i, "empty token")
        try:
            v = float(token)
        except ValueError:
            return DecodeFailure("malformed", i, f"unparseable token {token!r}")
        if not math.isfinite(v):
            return DecodeFailure("malformed", i, f"non-finite token {token!r}")
        values.append(v * spec.scale)
        if len(values) == expected_len:
            break
    if len(values) < expected_len:
        return DecodeFailure("short", len(values))
    return values


def build_prompt(
    window_string: Union[SensorString, str], template: Optional[str] = None
) -> str:
    """Substitute the encoded sequence into the prompt template (exactly once)."""
    text = window_string.text if isinstance(window_string, SensorString) else window_string
    tpl = DEFAULT_PROMPT_TEMPLATE if template is None else template
    occurrences = tpl.count(PLACEHOLDER)
    if occurrences == 0:
        raise MissingPlaceholder(f"template does not contain {PLACEHOLDER!r}")
    if occurrences > 1:
        raise MissingPlaceholder(f"template must contain {PLACEHOLDER!r} exactly once")
    return tpl.replace(PLACEHOLDER, text)
