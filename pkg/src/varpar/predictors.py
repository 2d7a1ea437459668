"""Predictors that stand in for trained variants.

Two implementations share the :class:`Predictor` protocol:

* :class:`SyntheticPredictor` draws score vectors whose long-run top-1
  accuracy matches a target, with erroneous predictions made less confident
  and frequently ranking the true class second.
* :class:`FixturePredictor` replays stored score rows from a text file.

Every emitted vector is float32, non-negative and sums to one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .exceptions import (
    FixtureFormatError,
    InvalidArgumentError,
    InvalidCalibrationError,
    MissingFixtureError,
)

__all__ = [
    "PredictionVector",
    "LabeledSample",
    "CalibrationProfile",
    "Predictor",
    "SyntheticPredictor",
    "FixturePredictor",
    "normalize",
    "predict",
    "calibrate",
    "load_fixture",
    "write_fixture",
    "make_samples",
]

# Separates the shared (cross-variant) stream from per-variant streams.
_SHARED_STREAM = 0x5348


@dataclass(frozen=True, eq=False)
class PredictionVector:
    variant_id: int
    scores: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.scores.shape[0])

    def argmax(self) -> int:
        return int(np.argmax(self.scores))


@dataclass(frozen=True)
class LabeledSample:
    sample_id: int
    true_class: int

    def __post_init__(self):
        if self.sample_id < 0:
            raise InvalidArgumentError("sample_id must be non-negative")
        if self.true_class < 0:
            raise InvalidArgumentError("true_class must be non-negative")


@dataclass(frozen=True)
class CalibrationProfile:
    """Parameters of a synthetic predictor.

    ``concentration`` is the total Dirichlet mass spread over all classes for
    correct predictions (smaller means sharper); errors use
    ``concentration * error_spread``. With probability ``runner_up`` an
    erroneous prediction ranks the true class second. ``correlation`` is the
    probability that the correct/incorrect coin is drawn from a stream shared
    by every variant with the same ``seed``; 0 gives independent errors.
    """

    variant_id: int
    target_top1: float
    concentration: float = 1.5
    seed: int = 0
    error_spread: float = 4.0
    runner_up: float = 0.7
    correlation: float = 0.0


@runtime_checkable
class Predictor(Protocol):
    variant_id: int
    num_classes: int

    def predict(self, sample: LabeledSample) -> PredictionVector: ...


def normalize(scores) -> np.ndarray:
    """Return ``scores / sum(scores)`` as float32; rejects negative or all-zero rows."""
    v = np.asarray(scores, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgumentError("scores must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise InvalidArgumentError("scores must be finite and non-negative")
    total = v.sum()
    if total <= 0:
        raise InvalidArgumentError("scores must not be all zero")
    return (v / total).astype(np.float32)


def _check_sample(sample: LabeledSample, num_classes: int) -> None:
    if not 0 <= sample.true_class < num_classes:
        raise InvalidArgumentError(
            f"true_class {sample.true_class} out of range for {num_classes} classes"
        )


class SyntheticPredictor:
    """Accuracy-calibrated random predictor.

    Output depends only on ``(seed, variant_id, sample_id, true_class)``, so
    the same sample always yields a bitwise-identical vector regardless of
    call order or batching.
    """

    def __init__(self, profile: CalibrationProfile, num_classes: int):
        num_classes = int(num_classes)
        if num_classes < 2:
            raise InvalidCalibrationError("num_classes must be >= 2")
        p = profile.target_top1
        if not (1.0 / num_classes < p <= 1.0):
            raise InvalidCalibrationError(
                f"target_top1={p} must lie in (1/C, 1] = ({1.0 / num_classes:.6g}, 1]"
            )
        if profile.concentration <= 0 or profile.error_spread <= 0:
            raise InvalidCalibrationError("concentration and error_spread must be positive")
        if not 0.0 <= profile.runner_up <= 1.0:
            raise InvalidCalibrationError("runner_up must be a probability")
        if not 0.0 <= profile.correlation <= 1.0:
            raise InvalidCalibrationError("correlation must be a probability")
        if profile.seed < 0 or profile.variant_id < 0:
            raise InvalidCalibrationError("seed and variant_id must be non-negative")
        self.profile = profile
        self.num_classes = num_classes
        self.variant_id = profile.variant_id

    def __repr__(self):
        return f"SyntheticPredictor({self.profile!r}, num_classes={self.num_classes})"

    def _scores(self, sample_id: int, true_class: int) -> np.ndarray:
        prof = self.profile
        C = self.num_classes
        rng = np.random.default_rng([prof.seed, prof.variant_id, sample_id])
        u_private, coin = rng.random(2)
        u = u_private
        if prof.correlation > 0 and coin < prof.correlation:
            u = np.random.default_rng([prof.seed, _SHARED_STREAM, sample_id]).random()
        correct = u < prof.target_top1

        mass = prof.concentration if correct else prof.concentration * prof.error_spread
        ranked = np.sort(rng.dirichlet(np.full(C, mass / C)))[::-1]
        others = rng.permutation(np.delete(np.arange(C), true_class))
        if correct:
            order = np.concatenate(([true_class], others))
        else:
            rest = list(others[1:])
            if C == 2 or rng.random() < prof.runner_up:
                slot = 0
            else:
                slot = int(rng.integers(1, C - 1))
            rest.insert(slot, true_class)
            order = np.array([others[0], *rest])
        scores = np.empty(C, dtype=np.float64)
        scores[order] = ranked
        return normalize(scores)

    def predict(self, sample: LabeledSample) -> PredictionVector:
        _check_sample(sample, self.num_classes)
        return PredictionVector(self.variant_id, self._scores(sample.sample_id, sample.true_class))

    def predict_batch(self, samples: Sequence[LabeledSample]) -> np.ndarray:
        out = np.empty((len(samples), self.num_classes), dtype=np.float32)
        for row, sample in enumerate(samples):
            _check_sample(sample, self.num_classes)
            out[row] = self._scores(sample.sample_id, sample.true_class)
        return out


class FixturePredictor:
    """Serves stored score rows keyed by sample id (the row number)."""

    def __init__(self, rows, variant_id: int = 0):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] < 2:
            raise FixtureFormatError("fixture rows must form a 2-D table with at least 2 columns")
        self._rows = np.stack([normalize(r) for r in rows]) if len(rows) else rows.astype(np.float32)
        self.num_classes = int(rows.shape[1])
        self.variant_id = int(variant_id)

    def __len__(self):
        return len(self._rows)

    def predict(self, sample: LabeledSample) -> PredictionVector:
        if not 0 <= sample.sample_id < len(self._rows):
            raise MissingFixtureError(
                f"no fixture row for sample_id {sample.sample_id} ({len(self._rows)} rows stored)"
            )
        return PredictionVector(self.variant_id, self._rows[sample.sample_id].copy())

    def predict_batch(self, samples: Sequence[LabeledSample]) -> np.ndarray:
        return np.stack([self.predict(s).scores for s in samples])


def predict(predictor: Predictor, sample: LabeledSample) -> PredictionVector:
    return predictor.predict(sample)


def calibrate(profile: CalibrationProfile, num_classes: int) -> SyntheticPredictor:
    return SyntheticPredictor(profile, num_classes)


def load_fixture(path: str | os.PathLike, num_classes: int, variant_id: int = 0) -> FixturePredictor:
    """Read a fixture file: a ``C=<int>`` header, then one whitespace-separated row per sample."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip().startswith("C="):
            raise FixtureFormatError("expected header 'C=<int>'", line=1)
        try:
            declared = int(header.strip()[2:])
        except ValueError:
            raise FixtureFormatError(f"bad class count in header {header.strip()!r}", line=1) from None
        if declared != num_classes:
            raise FixtureFormatError(f"header declares C={declared}, expected {num_classes}", line=1)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != num_classes:
                raise FixtureFormatError(
                    f"row has {len(fields)} values, expected {num_classes}", line=lineno
                )
            try:
                row = [float(x) for x in fields]
            except ValueError as exc:
                raise FixtureFormatError(str(exc), line=lineno) from None
            if any(x < 0 or x != x for x in row) or sum(row) <= 0:
                raise FixtureFormatError("scores must be non-negative and not all zero", line=lineno)
            rows.append(row)
    if not rows:
        return FixturePredictor(np.empty((0, num_classes)), variant_id)
    return FixturePredictor(np.array(rows), variant_id)


def write_fixture(path: str | os.PathLike, rows) -> None:
    rows = np.asarray(rows, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"C={rows.shape[1]}\n")
        for row in rows:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def make_samples(num_samples: int, num_classes: int, seed: int = 0) -> list[LabeledSample]:
    """Deterministic labelled samples with uniformly drawn true classes."""
    labels = np.random.default_rng([seed, num_classes]).integers(0, num_classes, size=num_samples)
    return [LabeledSample(i, int(c)) for i, c in enumerate(labels)]
