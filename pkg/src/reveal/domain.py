"""Core vocabulary: samples, labels, forensic factors and verdicts.

All types are frozen dataclasses or string enums, so they can be shared
freely between worker threads. Every type round-trips through
``to_dict``/``from_dict`` using the lowercase snake-case enum names that also
appear in manifests, result records and reports.

Grid cells are numbered 1-9 row-major from the top-left::

    1 2 3
    4 5 6
    7 8 9

The overlay, the region-wise prompt and the parser all rely on this order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Union

GRID_CELLS = tuple(range(1, 10))


class ForgeryDomain(str, Enum):
    PHOTOSHOP = "photoshop"
    DEEPFAKE = "deepfake"
    AIGC_EDITING = "aigc_editing"


class GroundTruth(str, Enum):
    """Binary label. Predictions reuse this type so confusion counting is uniform."""

    AUTHENTIC = "authentic"
    TAMPERED = "tampered"


class FactorKind(str, Enum):
    LIGHTING_SHADOW = "lighting_shadow"
    REFLECTIONS_TRANSPARENCY = "reflections_transparency"
    PERSPECTIVE_GEOMETRY = "perspective_geometry"
    REPETITION_PATTERNS = "repetition_patterns"
    EDGE_BOUNDARY = "edge_boundary"
    CONTEXTUAL_SEMANTIC = "contextual_semantic"
    ANOMALY_ARTIFACT = "anomaly_artifact"
    HUMAN_OBJECT_REALISM = "human_object_realism"

    @property
    def title(self) -> str:
        return FACTOR_TITLES[self]


FACTOR_TITLES = {
    FactorKind.LIGHTING_SHADOW: "Lighting / Shadow",
    FactorKind.REFLECTIONS_TRANSPARENCY: "Reflections / Transparency",
    FactorKind.PERSPECTIVE_GEOMETRY: "Perspective / Geometry",
    FactorKind.REPETITION_PATTERNS: "Repetition / Patterns",
    FactorKind.EDGE_BOUNDARY: "Edge / Boundary",
    FactorKind.CONTEXTUAL_SEMANTIC: "Contextual / Semantic consistency",
    FactorKind.ANOMALY_ARTIFACT: "Anomaly / Artifact detection",
    FactorKind.HUMAN_OBJECT_REALISM: "Human / Object realism",
}

_CANONICAL_FACTORS = tuple(FactorKind)


def canonical_factors() -> list[FactorKind]:
    """The eight forensic factors in their fixed order."""
    return list(_CANONICAL_FACTORS)


def _single_line(text: str) -> str:
    # Free text is stored whitespace-collapsed so it renders onto one layout line.
    return " ".join(str(text).split())


class LikertScore(int):
    """Ordinal 1-5 rating, 1 = authentic evidence, 5 = strong tampering evidence."""

    def __new__(cls, value: int) -> LikertScore:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"Likert score must be an int, got {value!r}")
        if not 1 <= value <= 5:
            raise ValueError(f"Likert score must be in 1..5, got {value}")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"LikertScore({int(self)})"


@dataclass(frozen=True)
class FactorAssessment:
    factor: FactorKind
    score: LikertScore
    justification: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "factor", FactorKind(self.factor))
        object.__setattr__(self, "score", LikertScore(self.score))
        text = _single_line(self.justification)
        if not text:
            raise ValueError(f"empty justification for factor {self.factor.value}")
        object.__setattr__(self, "justification", text)

    def to_dict(self) -> dict[str, Any]:
        return {"factor": self.factor.value, "score": int(self.score), "justification": self.justification}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> FactorAssessment:
        return cls(FactorKind(data["factor"]), LikertScore(data["score"]), data["justification"])


@dataclass(frozen=True)
class HolisticVerdict:
    """Eight factor assessments, stored in canonical factor order."""

    assessments: tuple[FactorAssessment, ...]
    global_label: GroundTruth
    major_reasoning: str = ""

    def __post_init__(self) -> None:
        items = tuple(self.assessments)
        seen: dict[FactorKind, FactorAssessment] = {}
        for item in items:
            if item.factor in seen:
                raise ValueError(f"duplicate factor: {item.factor.value}")
            seen[item.factor] = item
        missing = [f.value for f in _CANONICAL_FACTORS if f not in seen]
        if missing:
            raise ValueError(f"missing factors: {', '.join(missing)}")
        object.__setattr__(self, "assessments", tuple(seen[f] for f in _CANONICAL_FACTORS))
        object.__setattr__(self, "global_label", GroundTruth(self.global_label))
        object.__setattr__(self, "major_reasoning", _single_line(self.major_reasoning))

    def scores(self) -> tuple[int, ...]:
        return tuple(int(a.score) for a in self.assessments)

    def score_for(self, factor: FactorKind) -> int:
        return int(next(a.score for a in self.assessments if a.factor == factor))

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "holistic",
            "assessments": [a.to_dict() for a in self.assessments],
            "global_label": self.global_label.value,
            "major_reasoning": self.major_reasoning,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> HolisticVerdict:
        return cls(
            tuple(FactorAssessment.from_dict(a) for a in data["assessments"]),
            GroundTruth(data["global_label"]),
            data.get("major_reasoning", ""),
        )


@dataclass(frozen=True)
class CellFinding:
    cell_index: int
    anomalous: bool
    note: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.cell_index, bool) or not isinstance(self.cell_index, int):
            raise TypeError(f"cell index must be an int, got {self.cell_index!r}")
        if self.cell_index not in GRID_CELLS:
            raise ValueError(f"cell index must be in 1..9, got {self.cell_index}")
        object.__setattr__(self, "anomalous", bool(self.anomalous))
        object.__setattr__(self, "note", _single_line(self.note))

    def to_dict(self) -> dict[str, Any]:
        return {"cell_index": self.cell_index, "anomalous": self.anomalous, "note": self.note}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CellFinding:
        return cls(int(data["cell_index"]), bool(data["anomalous"]), data.get("note", ""))


@dataclass(frozen=True)
class RegionVerdict:
    holistic_cue_found: bool
    cell_findings: tuple[CellFinding, ...] = ()
    global_label: GroundTruth = GroundTruth.AUTHENTIC
    explanation: str = ""

    def __post_init__(self) -> None:
        findings = tuple(sorted(self.cell_findings, key=lambda c: c.cell_index))
        indices = [c.cell_index for c in findings]
        if len(set(indices)) != len(indices):
            raise ValueError(f"more than one finding for a cell: {indices}")
        label = GroundTruth(self.global_label)
        cue = bool(self.holistic_cue_found)
        if not cue and label is GroundTruth.TAMPERED and not any(c.anomalous for c in findings):
            raise ValueError("tampered without a holistic cue requires at least one anomalous cell")
        object.__setattr__(self, "holistic_cue_found", cue)
        object.__setattr__(self, "cell_findings", findings)
        object.__setattr__(self, "global_label", label)
        object.__setattr__(self, "explanation", _single_line(self.explanation))

    def anomalous_cells(self) -> list[int]:
        return [c.cell_index for c in self.cell_findings if c.anomalous]

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "region",
            "holistic_cue_found": self.holistic_cue_found,
            "cell_findings": [c.to_dict() for c in self.cell_findings],
            "global_label": self.global_label.value,
            "explanation": self.explanation,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RegionVerdict:
        return cls(
            bool(data["holistic_cue_found"]),
            tuple(CellFinding.from_dict(c) for c in data.get("cell_findings", [])),
            GroundTruth(data["global_label"]),
            data.get("explanation", ""),
        )


@dataclass(frozen=True)
class BinaryVerdict:
    global_label: GroundTruth
    raw_answer: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "global_label", GroundTruth(self.global_label))
        object.__setattr__(self, "raw_answer", _single_line(self.raw_answer))

    def to_dict(self) -> dict[str, Any]:
        return {"type": "binary", "global_label": self.global_label.value, "raw_answer": self.raw_answer}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BinaryVerdict:
        return cls(GroundTruth(data["global_label"]), data.get("raw_answer", ""))


Verdict = Union[BinaryVerdict, HolisticVerdict, RegionVerdict]

_VERDICT_TYPES: dict[str, type] = {
    "binary": BinaryVerdict,
    "holistic": HolisticVerdict,
    "region": RegionVerdict,
}


def verdict_from_dict(data: dict[str, Any]) -> Verdict:
    try:
        cls = _VERDICT_TYPES[data["type"]]
    except KeyError as exc:
        raise ValueError(f"unknown verdict type: {data.get('type')!r}") from exc
    return cls.from_dict(data)


@dataclass(frozen=True)
class Sample:
    id: str
    image_path: Path
    ground_truth: GroundTruth
    domain: ForgeryDomain
    dataset: str = field(default="")

    def __post_init__(self) -> None:
        object.__setattr__(self, "image_path", Path(self.image_path))
        object.__setattr__(self, "ground_truth", GroundTruth(self.ground_truth))
        object.__setattr__(self, "domain", ForgeryDomain(self.domain))

    def to_dict(self) -> dict[str, Any]:
        # Field names follow the manifest format.
        return {
            "id": self.id,
            "image_path": str(self.image_path),
            "label": self.ground_truth.value,
            "domain": self.domain.value,
            "dataset": self.dataset,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Sample:
        return cls(
            str(data["id"]),
            Path(data["image_path"]),
            GroundTruth(data["label"]),
            ForgeryDomain(data["domain"]),
            str(data["dataset"]),
        )
