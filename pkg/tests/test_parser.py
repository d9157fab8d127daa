import random
import string

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from reveal.domain import BinaryVerdict, GroundTruth, HolisticVerdict, RegionVerdict
from reveal.parser import (
    REPAIR_FOLD,
    REPAIR_NORMALIZE,
    SCHEMA_IDS,
    Failed,
    Parsed,
    ParseErrorKind,
    detect_refusal,
    outcome_to_dict,
    parse,
    render_verdict,
)

from .helpers import FIXTURES, binary_verdicts, holistic_verdicts, region_verdicts

CORPUS = FIXTURES / "parser_corpus"
SCHEMA_OF = {HolisticVerdict: "holistic_v1", RegionVerdict: "region_v1", BinaryVerdict: "binary_v1"}


def read_expected(path):
    fields = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    return fields


def corpus_cases():
    for schema in SCHEMA_IDS:
        for inp in sorted((CORPUS / schema).glob("*.input.txt")):
            name = inp.name.removesuffix(".input.txt")
            yield pytest.param(schema, inp, inp.with_name(f"{name}.expected.txt"), id=f"{schema}/{name}")


def check_case(schema, input_path, expected_path):
    text = input_path.read_bytes().decode("utf-8")
    expected = read_expected(expected_path)
    outcome = parse(text, schema)
    if expected["status"] == "failed":
        assert isinstance(outcome, Failed), outcome
        assert outcome.error.kind.value == expected["kind"], outcome.error
        return
    assert isinstance(outcome, Parsed), outcome
    verdict = outcome.verdict
    assert verdict.global_label.value == expected["label"]
    repairs = [] if expected["repairs"] == "none" else [r.strip() for r in expected["repairs"].split(",")]
    assert list(outcome.repairs_applied) == repairs
    if "scores" in expected:
        assert list(verdict.scores()) == [int(s) for s in expected["scores"].split()]
    if "cue" in expected:
        assert verdict.holistic_cue_found is (expected["cue"] == "yes")
    if "anomalous" in expected:
        cells = [] if expected["anomalous"] == "none" else [int(c) for c in expected["anomalous"].split()]
        assert verdict.anomalous_cells() == cells


@pytest.mark.parametrize("schema, input_path, expected_path", list(corpus_cases()))
def test_corpus(schema, input_path, expected_path):
    check_case(schema, input_path, expected_path)


def test_corpus_size():
    for schema in SCHEMA_IDS:
        malformed = list((CORPUS / schema).glob("bad_*.input.txt"))
        assert len(malformed) >= 20, schema


def test_canonical_fixture_scores():
    text = (CORPUS / "holistic_v1" / "ok_canonical.input.txt").read_text(encoding="utf-8")
    outcome = parse(text, "holistic_v1")
    assert outcome.ok and outcome.repairs_applied == ()
    assert outcome.verdict.scores() == (2, 1, 1, 4, 5, 1, 2, 1)
    assert outcome.verdict.global_label is GroundTruth.TAMPERED
    assert outcome.verdict.major_reasoning.startswith("The edge boundary")


def test_bare_fake_folds_to_tampered():
    outcome = parse("FAKE", "binary_v1")
    assert outcome.ok
    assert outcome.verdict.global_label is GroundTruth.TAMPERED
    assert REPAIR_FOLD in outcome.repairs_applied


@pytest.mark.parametrize(
    "text, expected",
    [
        ("I'm unable to analyze this image.", True),
        ("TAMPERED - I cannot see shadows consistent with the light source", False),
        ("", False),
        ("As an AI, I can't judge this. Score: 4", False),
        ("The image looks authentic.", False),
    ],
)
def test_detect_refusal(text, expected):
    assert detect_refusal(text) is expected


def test_unknown_schema_raises():
    with pytest.raises(ValueError):
        parse("ANSWER: REAL", "nope_v9")


def test_strict_mode_skips_repairs():
    outcome = parse("FAKE", "binary_v1", repair=False)
    assert isinstance(outcome, Failed)


def test_outcome_dict():
    assert outcome_to_dict(parse("", "binary_v1")) == {
        "status": "failed",
        "error": {"kind": "empty_response", "detail": "response is empty"},
    }


verdicts = st.one_of(holistic_verdicts(), region_verdicts(), binary_verdicts)


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(verdicts)
def test_render_parse_round_trip(verdict):
    outcome = parse(render_verdict(verdict), SCHEMA_OF[type(verdict)])
    assert isinstance(outcome, Parsed), outcome
    assert outcome.repairs_applied == ()
    assert outcome.verdict == verdict


@settings(max_examples=300, deadline=None)
@given(verdicts, st.booleans())
def test_zero_repair_parses_agree_with_repairs_on(verdict, noise):
    text = render_verdict(verdict)
    if noise:
        text = "Sure, here it is.\n" + text + "\nThanks."
    schema = SCHEMA_OF[type(verdict)]
    strict = parse(text, schema, repair=False)
    if isinstance(strict, Parsed):
        assert parse(text, schema) == strict


@settings(max_examples=500, deadline=None)
@given(st.text(max_size=400), st.sampled_from(SCHEMA_IDS))
def test_parse_is_total(text, schema):
    outcome = parse(text, schema)
    assert isinstance(outcome, (Parsed, Failed))
    if isinstance(outcome, Failed):
        assert isinstance(outcome.error.kind, ParseErrorKind)


_VOCAB = [
    "FACTOR:", "SCORE:", "WHY:", "LABEL:", "CELL:", "ANOMALOUS:", "HOLISTIC_CUE:", "ANSWER:", "|", "```",
    "```reveal", "REAL", "FAKE", "TAMPERED", "authentic", "lighting_shadow", "edge", "cell", "yes", "no",
    "I cannot", "four", "7", "3", "-1", "\n", " ", "**", "1.", ":", "/5",
]


def random_strings(n, seed):
    rng = random.Random(seed)
    for _ in range(n):
        if rng.random() < 0.5:
            yield "".join(rng.choice(_VOCAB) for _ in range(rng.randint(0, 40)))
        else:
            yield "".join(rng.choice(string.printable) for _ in range(rng.randint(0, 200)))


def test_fuzz_structured_noise():
    for i, text in enumerate(random_strings(3000, seed=5)):
        outcome = parse(text, SCHEMA_IDS[i % 3])
        assert isinstance(outcome, (Parsed, Failed))


def test_normalize_tag_recorded_for_loose_layout():
    outcome = parse("answer: fake", "binary_v1")
    assert outcome.ok and REPAIR_NORMALIZE in outcome.repairs_applied
