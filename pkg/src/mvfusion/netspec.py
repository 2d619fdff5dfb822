"""Parameter counts and receptive fields of stacked convolutions.

Counts are weights only (no biases): a stack of ``d`` layers of ``k x k``
filters with ``K`` input and output channels has ``d * k^2 * K^2`` weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ConfigError


@dataclass(frozen=True)
class ConvStackSpec:
    filter_size: int
    depth: int = 1
    channels: int = 64
    stride: int = 1

    def __post_init__(self):
        if self.filter_size < 1 or self.filter_size % 2 == 0:
            raise ConfigError(f"filter size must be a positive odd integer, got {self.filter_size}")
        if self.depth < 1 or self.channels < 1 or self.stride < 1:
            raise ConfigError("depth, channels and stride must be positive")

    @property
    def coefficient(self) -> int:
        """Multiplier of K^2 in the weight count."""
        return self.depth * self.filter_size**2

    def symbolic(self) -> str:
        return f"{self.coefficient}K^2"

    def label(self) -> str:
        k = self.filter_size
        return f"{self.depth} x {k}x{k}"


def stack_params(s: ConvStackSpec) -> int:
    return s.depth * s.filter_size**2 * s.channels**2


def params_ratio(a: ConvStackSpec, b: ConvStackSpec) -> float:
    """How many times more weights ``b`` needs than ``a``."""
    return stack_params(b) / stack_params(a)


def params_ratio_exact(a: ConvStackSpec, b: ConvStackSpec) -> Fraction:
    return Fraction(stack_params(b), stack_params(a))


def effective_receptive_field(filters: Iterable[tuple[int, int]]) -> int:
    filters = list(filters)
    if not filters:
        raise ConfigError("receptive field needs at least one layer")
    field, jump = 1, 1
    for k, stride in filters:
        if k < 1 or stride < 1:
            raise ConfigError(f"bad layer (k={k}, stride={stride})")
        field += (k - 1) * jump
        jump *= stride
    return field


def stack_receptive_field(s: ConvStackSpec) -> int:
    return effective_receptive_field([(s.filter_size, s.stride)] * s.depth)


def width_schedule(start: int, pools: int, cap: int) -> list[int]:
    """Channel widths doubling after each of ``pools`` pooling layers, saturating at ``cap``."""
    if start < 1 or cap < start or pools < 0:
        raise ConfigError(f"need start >= 1, cap >= start, pools >= 0 (got {start}, {cap}, {pools})")
    widths = [start]
    for _ in range(pools):
        widths.append(min(widths[-1] * 2, cap))
    return widths


PRESETS = {
    "three-3x3-vs-7x7": [ConvStackSpec(3, 3, 64), ConvStackSpec(7, 1, 64)],
    "two-3x3-vs-5x5": [ConvStackSpec(3, 2, 64), ConvStackSpec(5, 1, 64)],
}


def parse_stack(text: str, channels: int = 64) -> ConvStackSpec:
    """Parse ``"DxK"`` or ``"DxK@C"`` (depth x filter, optional channels), e.g. ``3x3@64``."""
    body, _, chan = text.strip().partition("@")
    try:
        depth, k = (int(v) for v in body.lower().split("x"))
        return ConvStackSpec(k, depth, int(chan) if chan else channels)
    except ValueError:
        raise ConfigError(f"cannot parse stack spec {text!r}; expected e.g. 3x3 or 3x3@64") from None


def table(specs: Sequence[ConvStackSpec]) -> list[dict]:
    """One row per spec; ratios are taken against the first spec."""
    if not specs:
        raise ConfigError("no stack specs given")
    base = specs[0]
    rows = []
    for s in specs:
        exact = params_ratio_exact(base, s)
        rows.append(
            {
                "stack": s.label(),
                "channels": s.channels,
                "symbolic": s.symbolic(),
                "params": stack_params(s),
                "receptive_field": stack_receptive_field(s),
                "ratio_vs_first": float(exact),
                "ratio_exact": f"{exact.numerator}/{exact.denominator}",
                "percent_more": round(100 * (float(exact) - 1)),
            }
        )
    return rows
