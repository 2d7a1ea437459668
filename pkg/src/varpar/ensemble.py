"""Scale-and-aggregate combination of variant predictions.

The master turns every received row into a distribution with softmax,
multiplies it by a capacity factor built from the variant's input
resolution and width factor, sums the rows and applies a final softmax.
There are no trainable parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_int, check_is_fitted, check_scores
from .exceptions import InvalidArgumentError, InvalidContextError, NoResultError

__all__ = [
    "softmax",
    "ScalingContext",
    "scale",
    "scale_factor",
    "EnsembleResult",
    "aggregate",
    "combine",
    "top_m_hit",
    "top_m_hits",
    "VariantEnsemble",
]


def softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class ScalingContext:
    """Resolutions and width factors of the configured variants, plus ``alpha``."""

    resolutions: frozenset[float]
    width_factors: frozenset[float]
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "resolutions", frozenset(float(r) for r in self.resolutions))
        object.__setattr__(self, "width_factors", frozenset(float(d) for d in self.width_factors))
        if not self.resolutions or not self.width_factors:
            raise InvalidContextError("scaling context needs at least one resolution and width factor")
        if min(self.resolutions) <= 0 or min(self.width_factors) <= 0:
            raise InvalidContextError("resolutions and width factors must be positive")

    @classmethod
    def from_variants(cls, specs: Iterable, alpha: float = 1.0) -> "ScalingContext":
        specs = list(specs)
        return cls(
            frozenset(s.input_resolution_rho for s in specs),
            frozenset(s.width_factor_d for s in specs),
            alpha,
        )

    def factor(self, rho: float, d: float) -> float:
        return scale_factor(rho, d, self)


def scale_factor(rho: float, d: float, ctx: ScalingContext) -> float:
    if float(rho) not in ctx.resolutions or float(d) not in ctx.width_factors:
        raise InvalidContextError(f"(rho={rho}, d={d}) is not part of the scaling context")
    return (rho / max(ctx.resolutions)) * (d / min(ctx.width_factors)) ** ctx.alpha


def scale(row, rho_i: float, d_i: float, ctx: ScalingContext) -> np.ndarray:
    return np.asarray(row, dtype=np.float64) * scale_factor(rho_i, d_i, ctx)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    combined: np.ndarray
    contributing_variant_ids: tuple[int, ...]
    top1: int


def combine(P, factors, present=None, kept=None) -> np.ndarray:
    """Batched aggregation core on ``(..., V, C)`` scores.

    ``factors`` has shape ``(V,)`` or ``(..., V)``; rows with
    ``present == False`` are ignored. When ``kept`` is given, classes outside
    it are masked to ``-inf`` before the per-row softmax.
    """
    P = np.asarray(P, dtype=np.float64)
    factors = np.asarray(factors, dtype=np.float64)
    if present is None:
        present = np.ones(P.shape[:-1], dtype=bool)
    present = np.broadcast_to(np.asarray(present, dtype=bool), P.shape[:-1])
    if not present.any(axis=-1).all():
        raise NoResultError("aggregation needs at least one present row")
    Z = np.where(present[..., None], P, 0.0)
    if kept is not None:
        kept = np.asarray(kept, dtype=bool) | ~present[..., None]
        Z = np.where(kept, Z, -np.inf)
    rows = softmax(Z) * factors[..., None]
    rows = np.where(present[..., None], rows, 0.0)
    return softmax(rows.sum(axis=-2))


def aggregate(rows, rhos: Sequence[float], widths: Sequence[float], ctx: ScalingContext,
              variant_ids: Sequence[int] | None = None, kept=None) -> EnsembleResult:
    """Combine the present rows of a scattered tensor into one prediction.

    ``rows`` is ``(n, C)`` with one row per responding variant and
    ``rhos``/``widths`` give each row's resolution and width factor.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[0] == 0:
        raise NoResultError("no prediction rows to aggregate")
    check_scores(rows, ndim=2, name="rows")
    if len(rhos) != rows.shape[0] or len(widths) != rows.shape[0]:
        raise InvalidArgumentError("rhos and widths must give one entry per row")
    factors = [scale_factor(r, d, ctx) for r, d in zip(rhos, widths)]
    combined = combine(rows[None], np.array(factors)[None], kept=None if kept is None else np.asarray(kept)[None])[0]
    ids = tuple(range(rows.shape[0])) if variant_ids is None else tuple(int(v) for v in variant_ids)
    return EnsembleResult(combined, ids, int(np.argmax(combined)))


def _scores_of(result) -> np.ndarray:
    if isinstance(result, EnsembleResult):
        return result.combined
    if hasattr(result, "scores"):
        return np.asarray(result.scores)
    return np.asarray(result)


def top_m_hit(result, true_class: int, m: int) -> bool:
    """True iff ``true_class`` is among the ``m`` highest scores (ties to lower index)."""
    scores = _scores_of(result)
    m = check_int(m, "m", min_value=1, max_value=scores.shape[-1])
    order = np.argsort(-scores, kind="stable")[:m]
    return bool(int(true_class) in order.tolist())


def top_m_hits(P, y, m: int) -> np.ndarray:
    P = np.asarray(P)
    m = check_int(m, "m", min_value=1, max_value=P.shape[-1])
    order = np.argsort(-P, axis=-1, kind="stable")[..., :m]
    return (order == np.asarray(y)[:, None]).any(axis=-1)


class VariantEnsemble(ClassifierMixin, BaseEstimator):
    """Fixed (non-trainable) combiner over ``(n_samples, V, C)`` score tensors.

    Parameters
    ----------
    resolutions, width_factors : sequence of float
        Input resolution and width factor of each of the ``V`` variants, in
        row order. They define the scaling context.
    alpha : float
        Exponent applied to the width-factor ratio.
    mask_untransmitted : bool
        Mask zero-filled (untransmitted) classes to ``-inf`` before the
        per-row softmax instead of letting them flatten the distribution.
    """

    def __init__(self, resolutions=(224,), width_factors=(0.35,), alpha=1.0, mask_untransmitted=False):
        self.resolutions = resolutions
        self.width_factors = width_factors
        self.alpha = alpha
        self.mask_untransmitted = mask_untransmitted

    def fit(self, X, y=None):
        """Validate shapes and freeze the scaling context; nothing is learned."""
        X = check_scores(X, ndim=3)
        if len(self.resolutions) != X.shape[1] or len(self.width_factors) != X.shape[1]:
            raise InvalidArgumentError(
                f"X has {X.shape[1]} variant rows but {len(self.resolutions)} resolutions "
                f"and {len(self.width_factors)} width factors were configured"
            )
        self.context_ = ScalingContext(frozenset(self.resolutions), frozenset(self.width_factors), self.alpha)
        self.factors_ = np.array(
            [scale_factor(r, d, self.context_) for r, d in zip(self.resolutions, self.width_factors)]
        )
        self.n_variants_ = X.shape[1]
        self.n_classes_ = X.shape[2]
        self.classes_ = np.arange(self.n_classes_)
        return self

    def predict_proba(self, X, present=None):
        check_is_fitted(self, "context_")
        X = check_scores(X, ndim=3)
        if X.shape[1:] != (self.n_variants_, self.n_classes_):
            raise InvalidArgumentError(f"expected (n, {self.n_variants_}, {self.n_classes_}), got {X.shape}")
        kept = (X != 0) if self.mask_untransmitted else None
        return combine(X, self.factors_, present, kept)

    def predict(self, X, present=None):
        return np.argmax(self.predict_proba(X, present), axis=-1)

    def top_m_score(self, X, y, m: int, present=None) -> float:
        return float(top_m_hits(self.predict_proba(X, present), y, m).mean())
