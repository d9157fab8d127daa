import re

import pytest

from reveal import prompts
from reveal.domain import canonical_factors
from reveal.parser import PARSERS
from reveal.prompts import (
    SCHEMA_FOR_STRATEGY,
    PromptStrategy,
    build_baseline,
    build_holistic,
    build_prompt,
    build_region_wise,
    render_template,
    template_version,
)

IMAGE = b"\x89PNG\r\n\x1a\nnot-really-a-png"
OTHER = b"\xff\xd8\xff\xe0 a different payload"


def test_baseline_question_and_schema():
    spec = build_baseline(IMAGE)
    assert "Is this image real or fake?" in spec.user_text
    assert "REAL" in spec.user_text and "FAKE" in spec.user_text
    assert spec.schema_id == "binary_v1"
    assert spec.image_payload == IMAGE


def test_holistic_lists_every_factor_in_order():
    text = build_holistic(IMAGE).user_text
    positions = [text.index(f.value) for f in canonical_factors()]
    assert positions == sorted(positions)
    assert re.search(r"\b1\b", text) and re.search(r"\b5\b", text)
    assert "AUTHENTIC" in text and "TAMPERED" in text


def test_region_wise_numbering_and_order_of_work():
    text = build_region_wise(IMAGE).user_text
    for cell in range(1, 10):
        assert re.search(rf"\b{cell}\b", text)
    assert "only if no holistic cues are found" in text
    assert text.index("holistic assessment") < text.index("Analyze each grid cell")


@pytest.mark.parametrize("strategy", list(PromptStrategy))
def test_build_is_deterministic(strategy):
    assert build_prompt(strategy, IMAGE) == build_prompt(strategy, IMAGE)


@pytest.mark.parametrize("strategy", list(PromptStrategy))
def test_text_does_not_depend_on_image(strategy):
    a, b = build_prompt(strategy, IMAGE), build_prompt(strategy, OTHER)
    assert (a.system_text, a.user_text, a.template_version) == (b.system_text, b.user_text, b.template_version)
    assert a.image_payload != b.image_payload


@pytest.mark.parametrize("strategy", list(PromptStrategy))
def test_empty_image_rejected(strategy):
    with pytest.raises(ValueError):
        build_prompt(strategy, b"")


def test_schema_follows_strategy():
    assert {s.value: SCHEMA_FOR_STRATEGY[s] for s in PromptStrategy} == {
        "baseline": "binary_v1",
        "holistic": "holistic_v1",
        "region_wise": "region_v1",
    }
    for strategy in PromptStrategy:
        assert build_prompt(strategy, IMAGE).schema_id == SCHEMA_FOR_STRATEGY[strategy]


def test_every_schema_has_a_parser():
    assert set(SCHEMA_FOR_STRATEGY.values()) <= set(PARSERS)


def test_system_text_pins_role():
    assert "forensic image analyst" in build_baseline(IMAGE).system_text


def test_no_unrendered_placeholders():
    for strategy in PromptStrategy:
        assert "{{" not in build_prompt(strategy, IMAGE).user_text


def test_only_known_placeholders():
    with pytest.raises(KeyError):
        render_template("{{image_path}}", {})
    assert render_template("a {{ factor_list }} b", {"factor_list": "X"}) == "a X b"


def test_template_version_tracks_template_text(monkeypatch):
    original = prompts._read_template
    current = template_version()
    assert template_version.__wrapped__() == current
    monkeypatch.setattr(prompts, "_read_template", lambda name: original(name) + ("!" if name == "holistic.txt" else ""))
    assert template_version.__wrapped__() != current


def test_repr_hides_payload():
    assert "bytes>" in repr(build_baseline(IMAGE))
