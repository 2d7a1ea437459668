"""Top-k compression of prediction vectors and its little-endian wire encoding.

Message layout::

    variant_id:u8  k:u8  C:u16  body

``k`` is stored modulo 256 (a stored 0 means 256). The body depends on
``(k, C)`` only:

* ``k == 1``: the lone class index (u8 when ``C <= 256``, else u16).
* sparse: ``k`` repetitions of ``(index, value:f32)``, highest score first.
* dense, when the sparse body would exceed ``4 * C`` bytes: ``C`` f32 values
  with every non-kept class set to ``-inf``.

The body length always equals :func:`h`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_int, check_k, check_scores
from .exceptions import CorruptPayloadError, InvalidArgumentError, ProtocolError
from .predictors import PredictionVector

__all__ = [
    "FP_SIZE",
    "HEADER_SIZE",
    "CompressedPrediction",
    "ScatteredPredictions",
    "index_width",
    "h",
    "payload_size",
    "is_dense",
    "compress_topk",
    "topk_indices",
    "scatter_topk",
    "decompress_scatter",
    "encode",
    "decode",
    "TopKCompressor",
]

FP_SIZE = 4
_HEADER = struct.Struct("<BBH")
HEADER_SIZE = _HEADER.size


def index_width(num_classes: int) -> int:
    return 1 if num_classes <= 256 else 2


def h(k: int, num_classes: int, fp_size: int = FP_SIZE) -> int:
    """Byte size of a compressed prediction body.

    ``min(k * (fp_size + w), fp_size * C)`` for ``k > 1`` and ``w`` for
    ``k == 1``, where ``w`` is the index width (1 byte up to 256 classes).
    """
    k = check_int(k, "k", min_value=1)
    num_classes = check_int(num_classes, "num_classes", min_value=2)
    fp_size = check_int(fp_size, "fp_size", min_value=1)
    w = index_width(num_classes)
    if k == 1:
        return w
    return min(k * (fp_size + w), fp_size * num_classes)


payload_size = h


def is_dense(k: int, num_classes: int) -> bool:
    return k > 1 and k * (FP_SIZE + index_width(num_classes)) > FP_SIZE * num_classes


@dataclass(frozen=True)
class CompressedPrediction:
    """The ``k`` highest-scoring ``(index, value)`` pairs of one prediction.

    Values are non-increasing, equal values list the lower index first, and
    ``values`` is ``None`` when ``k == 1``.
    """

    variant_id: int
    k: int
    num_classes: int
    indices: tuple[int, ...]
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        check_int(self.num_classes, "num_classes", min_value=2)
        check_k(self.k, self.num_classes)
        check_int(self.variant_id, "variant_id", min_value=0)
        if len(self.indices) != self.k:
            raise InvalidArgumentError(f"expected {self.k} indices, got {len(self.indices)}")
        if len(set(self.indices)) != self.k:
            raise InvalidArgumentError("indices must be distinct")
        if any(not 0 <= i < self.num_classes for i in self.indices):
            raise InvalidArgumentError(f"indices must lie in [0, {self.num_classes})")
        if self.k == 1:
            if self.values is not None:
                raise InvalidArgumentError("k=1 predictions carry no values")
            return
        if self.values is None or len(self.values) != self.k:
            raise InvalidArgumentError(f"expected {self.k} values")
        for v in self.values:
            if not (v >= 0 and v != float("inf")):
                raise InvalidArgumentError("values must be finite and non-negative")
        for a, b, ia, ib in zip(self.values, self.values[1:], self.indices, self.indices[1:]):
            if a < b or (a == b and ia > ib):
                raise InvalidArgumentError("pairs must be ordered by value desc, then index asc")

    def to_dense(self) -> np.ndarray:
        row = np.zeros(self.num_classes, dtype=np.float64)
        if self.k == 1:
            row[self.indices[0]] = 1.0
        else:
            row[list(self.indices)] = self.values
        return row


def topk_indices(X, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries along the last axis, ties to the lower index."""
    X = np.asarray(X)
    return np.argsort(-X, axis=-1, kind="stable")[..., :k]


def compress_topk(v: PredictionVector, k: int) -> CompressedPrediction:
    scores = np.asarray(v.scores, dtype=np.float32)
    C = scores.shape[0]
    k = check_k(k, C)
    order = topk_indices(scores, k)
    indices = tuple(int(i) for i in order)
    values = None if k == 1 else tuple(float(scores[i]) for i in order)
    return CompressedPrediction(int(v.variant_id), k, C, indices, values)


def scatter_topk(X, k: int, *, return_mask: bool = False):
    """Vectorised compress-then-scatter over the last axis.

    Kept entries keep their value (``k >= 2``) or become 1.0 (``k == 1``);
    everything else is zero.
    """
    X = check_scores(X)
    k = check_k(k, X.shape[-1])
    order = topk_indices(X, k)
    mask = np.zeros(X.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    if k == 1:
        out = mask.astype(np.float64)
    else:
        out = np.where(mask, X.astype(np.float64), 0.0)
    return (out, mask) if return_mask else out


@dataclass(frozen=True, eq=False)
class ScatteredPredictions:
    """Dense ``(V, C)`` reconstruction; absent rows are NaN and flagged in ``present``."""

    values: np.ndarray
    present: np.ndarray
    kept: np.ndarray
    variant_ids: tuple[int, ...]

    @property
    def present_ids(self) -> tuple[int, ...]:
        return tuple(v for v, p in zip(self.variant_ids, self.present) if p)


def decompress_scatter(
    preds: Iterable[CompressedPrediction],
    num_variants: int,
    num_classes: int,
    variant_ids: Sequence[int] | None = None,
) -> ScatteredPredictions:
    """Scatter compressed predictions into a ``(V, C)`` tensor.

    ``variant_ids`` gives the variant served by each row; by default row
    ``r`` holds variant ``r + 1``.
    """
    num_variants = check_int(num_variants, "num_variants", min_value=1)
    num_classes = check_int(num_classes, "num_classes", min_value=2)
    if variant_ids is None:
        variant_ids = tuple(range(1, num_variants + 1))
    variant_ids = tuple(int(v) for v in variant_ids)
    if len(variant_ids) != num_variants or len(set(variant_ids)) != num_variants:
        raise InvalidArgumentError("variant_ids must list num_variants distinct ids")
    row_of = {v: r for r, v in enumerate(variant_ids)}

    values = np.full((num_variants, num_classes), np.nan)
    present = np.zeros(num_variants, dtype=bool)
    kept = np.zeros((num_variants, num_classes), dtype=bool)
    for pred in preds:
        row = row_of.get(pred.variant_id)
        if row is None:
            raise ProtocolError(f"prediction from unconfigured variant {pred.variant_id}")
        if present[row]:
            raise ProtocolError(f"duplicate prediction for variant {pred.variant_id}")
        if pred.num_classes != num_classes or any(i >= num_classes for i in pred.indices):
            raise CorruptPayloadError(
                f"variant {pred.variant_id}: class index out of range for C={num_classes}"
            )
        values[row] = pred.to_dense()
        kept[row, list(pred.indices)] = True
        present[row] = True
    return ScatteredPredictions(values, present, kept, variant_ids)


def encode(pred: CompressedPrediction) -> bytes:
    C, k = pred.num_classes, pred.k
    if pred.variant_id > 0xFF:
        raise InvalidArgumentError("variant_id does not fit in one byte")
    if k > 256:
        raise InvalidArgumentError("k > 256 cannot be encoded")
    if C > 0xFFFF:
        raise InvalidArgumentError("num_classes does not fit in u16")
    head = _HEADER.pack(pred.variant_id, k & 0xFF, C)
    idx = "B" if index_width(C) == 1 else "H"
    if k == 1:
        return head + struct.pack("<" + idx, pred.indices[0])
    if is_dense(k, C):
        dense = np.full(C, -np.inf, dtype="<f4")
        dense[list(pred.indices)] = pred.values
        return head + dense.tobytes()
    fmt = "<" + (idx + "f") * k
    flat = [x for pair in zip(pred.indices, pred.values) for x in pair]
    return head + struct.pack(fmt, *flat)


def decode(data: bytes) -> CompressedPrediction:
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise CorruptPayloadError(f"message of {len(data)} bytes is shorter than the {HEADER_SIZE}-byte header")
    variant_id, k, C = _HEADER.unpack_from(data)
    k = k or 256
    if C < 2 or k > C:
        raise CorruptPayloadError(f"invalid header fields k={k}, C={C}")
    body = data[HEADER_SIZE:]
    if len(body) != h(k, C):
        raise CorruptPayloadError(f"body is {len(body)} bytes, expected {h(k, C)} for k={k}, C={C}")
    idx = "B" if index_width(C) == 1 else "H"
    if k == 1:
        (index,) = struct.unpack("<" + idx, body)
        indices, values = (index,), None
    elif is_dense(k, C):
        dense = np.frombuffer(body, dtype="<f4")
        finite = np.flatnonzero(dense != -np.inf)
        if len(finite) != k:
            raise CorruptPayloadError(f"dense body marks {len(finite)} kept classes, expected {k}")
        order = topk_indices(dense, k)
        indices = tuple(int(i) for i in order)
        values = tuple(float(dense[i]) for i in order)
    else:
        flat = struct.unpack("<" + (idx + "f") * k, body)
        indices, values = tuple(flat[0::2]), tuple(flat[1::2])
    if any(i >= C for i in indices):
        raise CorruptPayloadError(f"class index out of range for C={C}")
    try:
        return CompressedPrediction(variant_id, k, C, indices, values)
    except InvalidArgumentError as exc:
        raise CorruptPayloadError(str(exc)) from None


class TopKCompressor(TransformerMixin, BaseEstimator):
    """Stateless transformer that keeps the ``k`` largest scores of each row.

    Accepts ``(n, C)`` or ``(n, V, C)`` score arrays and returns the scattered
    reconstruction the master would see; ``k=None`` disables compression.
    """

    def __init__(self, k: int | None = 2):
        self.k = k

    def fit(self, X, y=None):
        X = check_scores(X, ndim=(2, 3))
        if self.k is not None:
            check_k(self.k, X.shape[-1])
        self.n_classes_ = X.shape[-1]
        return self

    def transform(self, X):
        X = check_scores(X, ndim=(2, 3))
        if self.k is None:
            return X.astype(np.float64)
        return scatter_topk(X, self.k)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
