"""Rendering of the three prompt strategies into ``PromptSpec`` values.

Prompt wording lives in ``templates/*.txt``. Templates use ``{{name}}``
markers, limited to ``factor_list`` and ``schema_instructions``. The
template version is a digest over every template file, so it changes
whenever any wording changes.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources

from .domain import canonical_factors


class PromptStrategy(str, Enum):
    BASELINE = "baseline"
    HOLISTIC = "holistic"
    REGION_WISE = "region_wise"


SCHEMA_FOR_STRATEGY = {
    PromptStrategy.BASELINE: "binary_v1",
    PromptStrategy.HOLISTIC: "holistic_v1",
    PromptStrategy.REGION_WISE: "region_v1",
}

_TEMPLATE_FILES = {
    PromptStrategy.BASELINE: "baseline.txt",
    PromptStrategy.HOLISTIC: "holistic.txt",
    PromptStrategy.REGION_WISE: "region_wise.txt",
}
_PLACEHOLDER = re.compile(r"\{\{\s*(\w+)\s*\}\}")
_ALLOWED_PLACEHOLDERS = {"factor_list", "schema_instructions"}


@dataclass(frozen=True)
class PromptSpec:
    strategy: PromptStrategy
    system_text: str
    user_text: str
    image_payload: bytes
    schema_id: str
    template_version: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", PromptStrategy(self.strategy))
        expected = SCHEMA_FOR_STRATEGY[self.strategy]
        if self.schema_id != expected:
            raise ValueError(f"strategy {self.strategy.value} requires schema {expected}, got {self.schema_id}")

    def __repr__(self) -> str:
        return (
            f"PromptSpec(strategy={self.strategy.value!r}, schema_id={self.schema_id!r}, "
            f"template_version={self.template_version!r}, image_payload=<{len(self.image_payload)} bytes>)"
        )


@lru_cache(maxsize=None)
def _read_template(name: str) -> str:
    return resources.files("reveal").joinpath("templates", name).read_text(encoding="utf-8")


def _template_names() -> list[str]:
    root = resources.files("reveal").joinpath("templates")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".txt"))


@lru_cache(maxsize=None)
def template_version() -> str:
    digest = hashlib.sha256()
    for name in _template_names():
        digest.update(name.encode())
        digest.update(b"\0")
        digest.update(_read_template(name).encode("utf-8"))
        digest.update(b"\0")
    return f"reveal-{digest.hexdigest()[:12]}"


def factor_list_text() -> str:
    return "\n".join(
        f"{i}. {factor.value} ({factor.title})" for i, factor in enumerate(canonical_factors(), start=1)
    )


def render_template(text: str, values: dict[str, str]) -> str:
    def substitute(match: re.Match[str]) -> str:
        key = match.group(1)
        if key not in _ALLOWED_PLACEHOLDERS:
            raise KeyError(f"unsupported template placeholder: {key}")
        return values[key]

    return _PLACEHOLDER.sub(substitute, text)


def _build(strategy: PromptStrategy, image: bytes) -> PromptSpec:
    if not image:
        raise ValueError("image payload must be non-empty")
    schema_id = SCHEMA_FOR_STRATEGY[strategy]
    values = {
        "factor_list": factor_list_text(),
        "schema_instructions": _read_template(f"schema_{schema_id}.txt").strip(),
    }
    user_text = render_template(_read_template(_TEMPLATE_FILES[strategy]), values).strip()
    return PromptSpec(
        strategy=strategy,
        system_text=_read_template("system.txt").strip(),
        user_text=user_text,
        image_payload=bytes(image),
        schema_id=schema_id,
        template_version=template_version(),
    )


def build_baseline(image: bytes) -> PromptSpec:
    """Plain real-or-fake question over the original image."""
    return _build(PromptStrategy.BASELINE, image)


def build_holistic(image: bytes) -> PromptSpec:
    """Eight-factor Likert checklist over the original image."""
    return _build(PromptStrategy.HOLISTIC, image)


def build_region_wise(overlaid_image: bytes) -> PromptSpec:
    """Grid-cell prompt; the payload must already carry the labelled grid (see ``overlay_png``)."""
    return _build(PromptStrategy.REGION_WISE, overlaid_image)


BUILDERS = {
    PromptStrategy.BASELINE: build_baseline,
    PromptStrategy.HOLISTIC: build_holistic,
    PromptStrategy.REGION_WISE: build_region_wise,
}


def build_prompt(strategy: PromptStrategy | str, image: bytes) -> PromptSpec:
    return BUILDERS[PromptStrategy(strategy)](image)
