"""Prompt-based image forgery detection harness for vision-language models."""

from .domain import (
    BinaryVerdict,
    CellFinding,
    FactorAssessment,
    FactorKind,
    ForgeryDomain,
    GroundTruth,
    HolisticVerdict,
    LikertScore,
    RegionVerdict,
    Sample,
    canonical_factors,
)
from .errors import (
    CacheError,
    ConfigError,
    DegenerateRocError,
    ManifestError,
    OverlayError,
    ReportError,
    RevealError,
    TransportError,
)
from .gateway import BackendConfig, MockOracleConfig, ModelGateway, ModelResponse, complete
from .metrics import ConfusionCounts, RocCurve, classification_metrics, roc_curve, tampering_score
from .overlay import OverlayStyle, RasterImage, cell_bounds, overlay_grid, overlay_png
from .parser import Failed, ParseError, ParseErrorKind, Parsed, detect_refusal, parse, render_verdict
from .prompts import PromptSpec, PromptStrategy, build_prompt
from .report import render_report
from .runner import EvalRecord, RunConfig, load_manifest, run

__version__ = "0.1.0"

__all__ = [
    "BackendConfig", "BinaryVerdict", "CacheError", "CellFinding", "ConfigError", "ConfusionCounts",
    "DegenerateRocError", "EvalRecord", "FactorAssessment", "FactorKind", "Failed", "ForgeryDomain",
    "GroundTruth", "HolisticVerdict", "LikertScore", "ManifestError", "MockOracleConfig", "ModelGateway",
    "ModelResponse", "OverlayError", "OverlayStyle", "ParseError", "ParseErrorKind", "Parsed", "PromptSpec",
    "PromptStrategy", "RasterImage", "RegionVerdict", "ReportError", "RevealError", "RocCurve", "RunConfig",
    "Sample", "TransportError", "build_prompt", "canonical_factors", "cell_bounds", "classification_metrics",
    "complete", "detect_refusal", "load_manifest", "overlay_grid", "overlay_png", "parse", "render_report", "render_verdict",
    "roc_curve", "run", "tampering_score",
]
