"""Variant architecture descriptors and their parameter / MAC accounting.

Variants are MobileNetV2 derivatives that differ in input resolution, width
factor and the size of the last pointwise convolution. Nothing here executes
a network; the descriptors only carry enough structure to count weights and
multiply-accumulates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .exceptions import InvalidArgumentError

__all__ = [
    "Family",
    "LayerKind",
    "LayerSpec",
    "VariantSpec",
    "ModelAudit",
    "RESOLUTIONS",
    "WIDTH_FACTORS",
    "BOTTLENECK_SCHEDULE",
    "round_filters",
    "head_width",
    "build_variant",
    "build_baseline",
    "audit",
    "catalog_table",
]


class Family(str, Enum):
    STANDARD = "standard"
    IMAGENET = "imagenet"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, Family):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgumentError(
                f"unknown family {value!r}; expected one of "
                f"{[f.value for f in cls]}"
            ) from None


class LayerKind(str, Enum):
    INITIAL_CONV = "initial_conv"
    BOTTLENECK = "bottleneck"
    POINTWISE_CONV = "pointwise_conv"
    GLOBAL_MAX_POOL = "global_max_pool"
    HEAD_CONV = "head_conv"


# Input resolution per variant index 1..7.
RESOLUTIONS = (96, 128, 160, 192, 224, 256, 320)

WIDTH_FACTORS = {Family.STANDARD: 0.35, Family.IMAGENET: 0.5}

# (expansion t, base filters f, repeats n, stride of first repeat)
BOTTLENECK_SCHEDULE = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)

INITIAL_FILTERS = 32
BASELINE_LAST_FILTERS = 1280


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    out_filters: int = 0
    expansion_t: int = 1
    repeats_n: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.kind is not LayerKind.GLOBAL_MAX_POOL and self.out_filters <= 0:
            raise InvalidArgumentError(f"{self.kind.value}: out_filters must be > 0")
        if self.repeats_n < 1:
            raise InvalidArgumentError("repeats_n must be >= 1")
        if self.stride not in (1, 2):
            raise InvalidArgumentError(f"stride must be 1 or 2, got {self.stride}")
        if self.expansion_t < 1:
            raise InvalidArgumentError("expansion_t must be >= 1")
        if self.kind is not LayerKind.BOTTLENECK and self.expansion_t != 1:
            raise InvalidArgumentError("expansion_t only applies to bottleneck layers")


@dataclass(frozen=True)
class VariantSpec:
    """Architecture descriptor of one variant.

    ``index_i`` is 1..7 for generated variants and 0 for the full-width
    MobileNetV2 baseline returned by :func:`build_baseline`.
    """

    index_i: int
    family: Family
    input_resolution_rho: int
    width_factor_d: float
    head_width_j: int
    num_classes_C: int
    layers: tuple[LayerSpec, ...]

    @property
    def variant_id(self) -> int:
        return self.index_i

    @property
    def name(self) -> str:
        if self.index_i == 0:
            return "MobileNetV2"
        prefix = "V" if self.family is Family.STANDARD else "Vim"
        return f"{prefix}{self.index_i}"

    @property
    def last_pointwise_filters(self) -> int:
        for layer in reversed(self.layers):
            if layer.kind is LayerKind.POINTWISE_CONV:
                return layer.out_filters
        raise InvalidArgumentError("variant has no pointwise conv layer")


@dataclass(frozen=True)
class ModelAudit:
    param_count: int
    mac_count: int


def round_filters(filters: float, width_factor: float, divisor: int = 8) -> int:
    """Scale a filter count by ``width_factor`` and round to a multiple of ``divisor``.

    Follows the usual MobileNet rule: round to the nearest multiple, never go
    below ``divisor``, and bump up one step if rounding lost more than 10%.
    """
    scaled = filters * width_factor
    rounded = max(divisor, int(scaled + divisor / 2) // divisor * divisor)
    if rounded < 0.9 * scaled:
        rounded += divisor
    return rounded


def head_width(index_i: int, family: Family | str) -> int:
    family = Family.parse(family)
    if family is Family.STANDARD:
        return 3 + index_i
    return min(7 + 2 * index_i, 20)


def _check_index(index_i: int) -> None:
    if not isinstance(index_i, (int,)) or isinstance(index_i, bool) or not 1 <= index_i <= 7:
        raise InvalidArgumentError(
            f"variant index must be an integer in 1..7, got {index_i!r}"
        )


def _check_classes(num_classes: int) -> None:
    if int(num_classes) != num_classes or num_classes < 2:
        raise InvalidArgumentError(f"num_classes must be an integer >= 2, got {num_classes!r}")


def _layers(width: float, last_filters: int, num_classes: int) -> tuple[LayerSpec, ...]:
    layers = [LayerSpec(LayerKind.INITIAL_CONV, round_filters(INITIAL_FILTERS, width), stride=2)]
    for t, f, n, s in BOTTLENECK_SCHEDULE:
        layers.append(
            LayerSpec(LayerKind.BOTTLENECK, round_filters(f, width), expansion_t=t, repeats_n=n, stride=s)
        )
    layers.append(LayerSpec(LayerKind.POINTWISE_CONV, last_filters))
    layers.append(LayerSpec(LayerKind.GLOBAL_MAX_POOL))
    layers.append(LayerSpec(LayerKind.HEAD_CONV, int(num_classes)))
    return tuple(layers)


def build_variant(
    index_i: int,
    family: Family | str = Family.STANDARD,
    num_classes: int = 101,
    width_factor: float | None = None,
) -> VariantSpec:
    """Build the descriptor of variant ``index_i`` of ``family``.

    ``width_factor`` overrides the family default; it exists for width
    scaling studies and is not needed for the catalogued variants.
    """
    _check_index(index_i)
    _check_classes(num_classes)
    family = Family.parse(family)
    width = WIDTH_FACTORS[family] if width_factor is None else float(width_factor)
    if width <= 0:
        raise InvalidArgumentError("width_factor must be positive")
    j = head_width(index_i, family)
    return VariantSpec(
        index_i=index_i,
        family=family,
        input_resolution_rho=RESOLUTIONS[index_i - 1],
        width_factor_d=width,
        head_width_j=j,
        num_classes_C=int(num_classes),
        layers=_layers(width, 64 * j, num_classes),
    )


def build_baseline(num_classes: int = 1000, resolution: int = 224, width_factor: float = 1.0) -> VariantSpec:
    """MobileNetV2 reference model (1280-filter last conv, 1x1-conv classifier)."""
    _check_classes(num_classes)
    last = BASELINE_LAST_FILTERS if width_factor <= 1.0 else round_filters(BASELINE_LAST_FILTERS, width_factor)
    return VariantSpec(
        index_i=0,
        family=Family.STANDARD,
        input_resolution_rho=int(resolution),
        width_factor_d=float(width_factor),
        head_width_j=last // 64,
        num_classes_C=int(num_classes),
        layers=_layers(width_factor, last, num_classes),
    )


def _conv_cost(spatial: int, k: int, c_in: int, c_out: int, *, groups: int = 1, bn: bool = True, bias: bool = False):
    weights = k * k * (c_in // groups) * c_out
    params = weights + (2 * c_out if bn else 0) + (c_out if bias else 0)
    return params, spatial * spatial * weights


def audit(spec: VariantSpec) -> ModelAudit:
    """Count trainable parameters and multiply-accumulates of one forward pass.

    Batch-norm contributes a scale and a shift per channel; only the head
    convolution carries a bias. Spatial sizes use "same" padding, so each
    stride-2 layer maps ``s`` to ``ceil(s / 2)``.
    """
    params = macs = 0
    spatial = spec.input_resolution_rho
    channels = 3

    def add(cost):
        nonlocal params, macs
        params += cost[0]
        macs += cost[1]

    for layer in spec.layers:
        if layer.kind is LayerKind.INITIAL_CONV:
            spatial = math.ceil(spatial / layer.stride)
            add(_conv_cost(spatial, 3, channels, layer.out_filters))
            channels = layer.out_filters
        elif layer.kind is LayerKind.BOTTLENECK:
            for r in range(layer.repeats_n):
                stride = layer.stride if r == 0 else 1
                hidden = channels * layer.expansion_t
                if layer.expansion_t != 1:
                    add(_conv_cost(spatial, 1, channels, hidden))
                spatial = math.ceil(spatial / stride)
                add(_conv_cost(spatial, 3, hidden, hidden, groups=hidden))
                add(_conv_cost(spatial, 1, hidden, layer.out_filters))
                channels = layer.out_filters
        elif layer.kind is LayerKind.POINTWISE_CONV:
            add(_conv_cost(spatial, 1, channels, layer.out_filters))
            channels = layer.out_filters
        elif layer.kind is LayerKind.GLOBAL_MAX_POOL:
            spatial = 1
        elif layer.kind is LayerKind.HEAD_CONV:
            add(_conv_cost(spatial, 1, channels, layer.out_filters, bn=False, bias=True))
            channels = layer.out_filters
    return ModelAudit(param_count=params, mac_count=macs)


def catalog_table(family: Family | str = Family.STANDARD, num_classes: int = 101) -> list[tuple[VariantSpec, ModelAudit]]:
    rows = []
    for i in range(1, len(RESOLUTIONS) + 1):
        spec = build_variant(i, family, num_classes)
        rows.append((spec, audit(spec)))
    return rows
