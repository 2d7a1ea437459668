"""Variant parallelism: lightweight model variants, a Top-k prediction codec,
scale-and-aggregate ensembling and a fault-tolerant master/worker runtime."""

from .codec import (
    CompressedPrediction,
    TopKCompressor,
    compress_topk,
    decode,
    decompress_scatter,
    encode,
    h,
)
from .ensemble import EnsembleResult, ScalingContext, VariantEnsemble, aggregate, scale, softmax, top_m_hit
from .exceptions import (
    CorruptPayloadError,
    FixtureFormatError,
    InvalidArgumentError,
    InvalidCalibrationError,
    InvalidContextError,
    MissingFixtureError,
    NoResultError,
    ProtocolError,
    VPError,
)
from .predictors import (
    CalibrationProfile,
    FixturePredictor,
    LabeledSample,
    PredictionVector,
    SyntheticPredictor,
    calibrate,
    load_fixture,
    predict,
)
from .variants import Family, ModelAudit, VariantSpec, audit, build_baseline, build_variant, catalog_table

__version__ = "0.1.0"
