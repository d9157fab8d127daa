"""Turn raw model text into typed verdicts.

Each schema has a canonical line layout, usually inside a ```reveal fence::

    FACTOR: lighting_shadow | SCORE: 2 | WHY: Shadows agree with the sun.
    LABEL: TAMPERED
    REASONING: Edge halos around the pasted car.

``parse`` tries the exact layout first. When that fails it applies repair
passes in a fixed order, re-checking after each one:

1. ``normalize_format``: case, whitespace, markdown decoration, loose keys.
2. ``fold_label_synonyms``: REAL/GENUINE -> AUTHENTIC, FAKE/FORGED/... -> TAMPERED.
3. ``lenient_extraction``: factor/score, cell and label cues pulled out of prose,
   including scores written as words.
4. refusal detection, which turns a refusal into ``refusal_detected``.

Scores outside 1..5, duplicate factors and bad cell numbers are final. No
pass may clamp or drop them.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

from .domain import (
    GRID_CELLS,
    BinaryVerdict,
    CellFinding,
    FactorAssessment,
    FactorKind,
    GroundTruth,
    HolisticVerdict,
    LikertScore,
    RegionVerdict,
    Verdict,
    canonical_factors,
)

SCHEMA_IDS = ("binary_v1", "holistic_v1", "region_v1")

REPAIR_NORMALIZE = "normalize_format"
REPAIR_FOLD = "fold_label_synonyms"
REPAIR_LENIENT = "lenient_extraction"


class ParseErrorKind(str, Enum):
    MISSING_FACTOR = "missing_factor"
    DUPLICATE_FACTOR = "duplicate_factor"
    SCORE_OUT_OF_RANGE = "score_out_of_range"
    NO_GLOBAL_LABEL = "no_global_label"
    BAD_CELL_INDEX = "bad_cell_index"
    EMPTY_RESPONSE = "empty_response"
    REFUSAL_DETECTED = "refusal_detected"
    UNRECOGNIZED_LAYOUT = "unrecognized_layout"


# Repairs may not override these.
_HARD_KINDS = {
    ParseErrorKind.DUPLICATE_FACTOR,
    ParseErrorKind.SCORE_OUT_OF_RANGE,
    ParseErrorKind.BAD_CELL_INDEX,
}


@dataclass(frozen=True)
class ParseError:
    kind: ParseErrorKind
    detail: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind.value, "detail": self.detail}


@dataclass(frozen=True)
class Parsed:
    verdict: Verdict
    repairs_applied: tuple[str, ...] = ()
    ok = True


@dataclass(frozen=True)
class Failed:
    error: ParseError
    ok = False


ParseOutcome = Union[Parsed, Failed]


class _Reject(Exception):
    def __init__(self, kind: ParseErrorKind, detail: str = ""):
        super().__init__(detail)
        self.error = ParseError(kind, detail)

    @property
    def hard(self) -> bool:
        return self.error.kind in _HARD_KINDS


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

LABEL_SYNONYMS = {
    "real": GroundTruth.AUTHENTIC,
    "authentic": GroundTruth.AUTHENTIC,
    "genuine": GroundTruth.AUTHENTIC,
    "fake": GroundTruth.TAMPERED,
    "tampered": GroundTruth.TAMPERED,
    "manipulated": GroundTruth.TAMPERED,
    "forged": GroundTruth.TAMPERED,
}
_LABEL_WORD = re.compile(r"\b(" + "|".join(LABEL_SYNONYMS) + r")\b", re.IGNORECASE)
# "real or fake" and similar echoes of the question are not answers.
_LABEL_ECHO = re.compile(
    r"\b(?:" + "|".join(LABEL_SYNONYMS) + r")\s*(?:or|/|vs\.?|versus)\s*(?:"
    + "|".join(LABEL_SYNONYMS) + r")\b",
    re.IGNORECASE,
)
# "...whether this image was manipulated" restates the question.
_LABEL_QUESTION = re.compile(r"\b(?:whether|if)\b[^.;!?\n]*", re.IGNORECASE)


def _scrub_questions(text: str) -> str:
    return _LABEL_QUESTION.sub(" ", _LABEL_ECHO.sub(" ", text))


_LABEL_KEY_PHRASE = re.compile(
    r"\b(?:final\s+|global\s+|overall\s+)?(?:label|verdict|answer|classification|conclusion|assessment)"
    r"\s*(?:is|:|=|-|–)?\s*[*_`\"']*\s*(" + "|".join(LABEL_SYNONYMS) + r")\b",
    re.IGNORECASE,
)

NUMBER_WORDS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
_NUM = r"(?:-?\d+(?:\.\d+)?|" + "|".join(NUMBER_WORDS) + r")"

_FACTOR_KEYWORDS = {
    FactorKind.LIGHTING_SHADOW: ("lighting", "light", "shadow", "shadows", "illumination"),
    FactorKind.REFLECTIONS_TRANSPARENCY: ("reflection", "reflections", "transparency", "transparencies"),
    FactorKind.PERSPECTIVE_GEOMETRY: ("perspective", "geometry", "geometric"),
    FactorKind.REPETITION_PATTERNS: ("repetition", "repetitions", "pattern", "patterns", "repeated"),
    FactorKind.EDGE_BOUNDARY: ("edge", "edges", "boundary", "boundaries"),
    FactorKind.CONTEXTUAL_SEMANTIC: ("contextual", "context", "semantic", "semantics"),
    FactorKind.ANOMALY_ARTIFACT: ("anomaly", "anomalies", "artifact", "artifacts", "artefact", "artefacts"),
    FactorKind.HUMAN_OBJECT_REALISM: ("human", "object", "realism"),
}
_KEYWORD_TO_FACTOR = {kw: f for f, kws in _FACTOR_KEYWORDS.items() for kw in kws}
_FACTOR_MENTION = re.compile(
    r"\b(" + "|".join(f.value for f in FactorKind) + "|"
    + "|".join(sorted(_KEYWORD_TO_FACTOR, key=len, reverse=True)) + r")\b",
    re.IGNORECASE,
)

_REFUSAL_PATTERNS = [
    re.compile(p, re.IGNORECASE)
    for p in (
        r"\bI\s+cannot\b",
        r"\bI\s+can['’]?t\b",
        r"\bI['’]?m\s+(?:unable|not\s+able)\s+to\b",
        r"\bI\s+am\s+(?:unable|not\s+able)\s+to\b",
        r"\bas\s+an\s+AI\b",
        r"\bI\s+(?:won['’]?t|will\s+not)\b",
        r"\bI['’]?m\s+sorry\b",
        r"\bcannot\s+(?:assist|help)\b",
    )
]
_SCORE_EVIDENCE = re.compile(r"\b[1-5]\s*(?:/|out\s+of)\s*5\b|\bscore\s*[:=]?\s*\d|\bSCORE:", re.IGNORECASE)


def resolve_factor(name: str) -> FactorKind | None:
    """Map a loosely written factor name ("Edges/Boundaries") to its kind."""
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    try:
        return FactorKind(slug)
    except ValueError:
        pass
    for word in slug.split("_"):
        if word in _KEYWORD_TO_FACTOR:
            return _KEYWORD_TO_FACTOR[word]
    return None


def fold_label(token: str) -> GroundTruth | None:
    """Map a label phrase to a class; None when absent or contradictory."""
    found = {LABEL_SYNONYMS[w.lower()] for w in _LABEL_WORD.findall(_LABEL_ECHO.sub(" ", token))}
    return found.pop() if len(found) == 1 else None


def _number(token: str) -> float | None:
    token = token.strip().lower()
    if token in NUMBER_WORDS:
        return float(NUMBER_WORDS[token])
    try:
        return float(token)
    except ValueError:
        return None


def _likert(token: str, factor: FactorKind, *, allow_words: bool) -> LikertScore:
    token = token.strip()
    if not allow_words and not re.fullmatch(r"-?\d+(?:\.\d+)?", token):
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, f"non-numeric score {token!r} for {factor.value}")
    value = _number(token)
    if value is None:
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, f"unreadable score {token!r} for {factor.value}")
    if value != int(value) or not 1 <= value <= 5:
        raise _Reject(ParseErrorKind.SCORE_OUT_OF_RANGE, f"score {token} for {factor.value} is not an integer in 1..5")
    return LikertScore(int(value))


def _cell_index(token: str) -> int:
    token = token.strip()
    if re.fullmatch(r"-?\d+\.\d+", token):
        raise _Reject(ParseErrorKind.BAD_CELL_INDEX, f"cell {token} is not a whole number")
    if not re.fullmatch(r"-?\d+", token):
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, f"non-numeric cell index {token!r}")
    value = int(token)
    if value not in GRID_CELLS:
        raise _Reject(ParseErrorKind.BAD_CELL_INDEX, f"cell {value} is outside 1..9")
    return value


# ---------------------------------------------------------------------------
# Canonical layout
# ---------------------------------------------------------------------------

FENCE_TAG = "reveal"
_FENCE_OPEN = re.compile(r"^\s*```\s*([\w-]*)\s*$")
_FENCE_CLOSE = re.compile(r"^\s*```\s*$")


def _fenced_blocks(text: str) -> list[tuple[str, list[str]]]:
    blocks: list[tuple[str, list[str]]] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        m = _FENCE_OPEN.match(lines[i])
        if m:
            for j in range(i + 1, len(lines)):
                if _FENCE_CLOSE.match(lines[j]):
                    blocks.append((m.group(1).lower(), lines[i + 1:j]))
                    i = j
                    break
        i += 1
    return blocks


def _content_lines(text: str) -> list[str]:
    """Lines of the response block: the ```reveal fence if any, else the first fence, else all."""
    blocks = _fenced_blocks(text)
    for tag, lines in blocks:
        if tag == FENCE_TAG:
            return lines
    if blocks:
        return blocks[0][1]
    return text.splitlines()


def _fence(lines: list[str]) -> str:
    return "\n".join([f"```{FENCE_TAG}", *lines, "```"])


def _kv(key: str, value: str) -> str:
    return f"{key}: {value}".rstrip()


_LABEL_TOKEN = {GroundTruth.AUTHENTIC: "AUTHENTIC", GroundTruth.TAMPERED: "TAMPERED"}
_BINARY_TOKEN = {GroundTruth.AUTHENTIC: "REAL", GroundTruth.TAMPERED: "FAKE"}
_TOKEN_LABEL = {v: k for k, v in _LABEL_TOKEN.items()}
_BINARY_LABEL = {v: k for k, v in _BINARY_TOKEN.items()}


def render_binary(verdict: BinaryVerdict) -> str:
    return _fence([_kv("ANSWER", _BINARY_TOKEN[verdict.global_label])])


def render_holistic(verdict: HolisticVerdict) -> str:
    lines = [
        f"FACTOR: {a.factor.value} | SCORE: {int(a.score)} | WHY: {a.justification}"
        for a in verdict.assessments
    ]
    lines.append(_kv("LABEL", _LABEL_TOKEN[verdict.global_label]))
    lines.append(_kv("REASONING", verdict.major_reasoning))
    return _fence(lines)


def render_region(verdict: RegionVerdict) -> str:
    lines = [_kv("HOLISTIC_CUE", "YES" if verdict.holistic_cue_found else "NO")]
    lines += [
        _kv(f"CELL: {c.cell_index} | ANOMALOUS: {'YES' if c.anomalous else 'NO'} | NOTE", c.note)
        for c in verdict.cell_findings
    ]
    lines.append(_kv("LABEL", _LABEL_TOKEN[verdict.global_label]))
    lines.append(_kv("EXPLANATION", verdict.explanation))
    return _fence(lines)


def render_verdict(verdict: Verdict) -> str:
    """Render a verdict in its schema's canonical layout."""
    if isinstance(verdict, HolisticVerdict):
        return render_holistic(verdict)
    if isinstance(verdict, RegionVerdict):
        return render_region(verdict)
    if isinstance(verdict, BinaryVerdict):
        return render_binary(verdict)
    raise TypeError(f"not a verdict: {verdict!r}")


# ---------------------------------------------------------------------------
# Strict readers (exact canonical lines)
# ---------------------------------------------------------------------------

_S_ANSWER = re.compile(r"^ANSWER: (\S.*)$")
_S_FACTOR = re.compile(r"^FACTOR: (\S+) \| SCORE: (\S+) \| WHY:(?: (.*))?$")
_S_LABEL = re.compile(r"^LABEL: (\S.*)$")
_S_REASONING = re.compile(r"^REASONING:(?: (.*))?$")
_S_CUE = re.compile(r"^HOLISTIC_CUE: (YES|NO)$")
_S_CELL = re.compile(r"^CELL: (\S+) \| ANOMALOUS: (YES|NO) \| NOTE:(?: (.*))?$")
_S_EXPLANATION = re.compile(r"^EXPLANATION:(?: (.*))?$")


def _unexpected(line: str) -> _Reject:
    snippet = line if len(line) <= 60 else line[:57] + "..."
    return _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, f"unexpected line: {snippet!r}")


def _single(what: str, value: object) -> None:
    if value is not None:
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, f"more than one {what} line")


def _strict_label(token: str) -> GroundTruth:
    if token not in _TOKEN_LABEL:
        raise _Reject(ParseErrorKind.NO_GLOBAL_LABEL, f"label {token!r} is not AUTHENTIC or TAMPERED")
    return _TOKEN_LABEL[token]


def _strict_binary(lines: list[str]) -> BinaryVerdict:
    answer = None
    for line in lines:
        if not line.strip():
            continue
        m = _S_ANSWER.match(line)
        if not m:
            raise _unexpected(line)
        _single("ANSWER", answer)
        answer = m.group(1)
    if answer is None:
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, "no ANSWER line")
    if answer not in _BINARY_LABEL:
        raise _Reject(ParseErrorKind.NO_GLOBAL_LABEL, f"answer {answer!r} is not REAL or FAKE")
    return BinaryVerdict(_BINARY_LABEL[answer], answer)


def _strict_holistic(lines: list[str], *, allow_words: bool = False) -> HolisticVerdict:
    found: dict[FactorKind, FactorAssessment] = {}
    label_token = reasoning = None
    for line in lines:
        if not line.strip():
            continue
        if m := _S_FACTOR.match(line):
            try:
                factor = FactorKind(m.group(1))
            except ValueError:
                raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, f"unknown factor {m.group(1)!r}") from None
            score = _likert(m.group(2), factor, allow_words=allow_words)
            if factor in found:
                raise _Reject(ParseErrorKind.DUPLICATE_FACTOR, f"{factor.value} appears more than once")
            why = (m.group(3) or "").strip()
            if not why:
                raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, f"empty justification for {factor.value}")
            found[factor] = FactorAssessment(factor, score, why)
        elif m := _S_LABEL.match(line):
            _single("LABEL", label_token)
            label_token = m.group(1)
        elif m := _S_REASONING.match(line):
            _single("REASONING", reasoning)
            reasoning = m.group(1) or ""
        else:
            raise _unexpected(line)
    if not found and label_token is None:
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, "no FACTOR or LABEL lines")
    missing = [f.value for f in canonical_factors() if f not in found]
    if missing:
        raise _Reject(ParseErrorKind.MISSING_FACTOR, "missing: " + ", ".join(missing))
    if label_token is None:
        raise _Reject(ParseErrorKind.NO_GLOBAL_LABEL, "no LABEL line")
    return HolisticVerdict(tuple(found.values()), _strict_label(label_token), reasoning or "")


def _strict_region(lines: list[str]) -> RegionVerdict:
    cue = label_token = explanation = None
    cells: dict[int, CellFinding] = {}
    for line in lines:
        if not line.strip():
            continue
        if m := _S_CUE.match(line):
            _single("HOLISTIC_CUE", cue)
            cue = m.group(1) == "YES"
        elif m := _S_CELL.match(line):
            idx = _cell_index(m.group(1))
            if idx in cells:
                raise _Reject(ParseErrorKind.BAD_CELL_INDEX, f"cell {idx} reported more than once")
            cells[idx] = CellFinding(idx, m.group(2) == "YES", m.group(3) or "")
        elif m := _S_LABEL.match(line):
            _single("LABEL", label_token)
            label_token = m.group(1)
        elif m := _S_EXPLANATION.match(line):
            _single("EXPLANATION", explanation)
            explanation = m.group(1) or ""
        else:
            raise _unexpected(line)
    if cue is None and not cells and label_token is None:
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, "no HOLISTIC_CUE, CELL or LABEL lines")
    if label_token is None:
        raise _Reject(ParseErrorKind.NO_GLOBAL_LABEL, "no LABEL line")
    label = _strict_label(label_token)
    if cue is None:
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, "no HOLISTIC_CUE line")
    return _region_verdict(cue, cells, label, explanation or "")


def _region_verdict(cue: bool, cells: dict[int, CellFinding], label: GroundTruth, explanation: str) -> RegionVerdict:
    if not cue and label is GroundTruth.TAMPERED and not any(c.anomalous for c in cells.values()):
        raise _Reject(
            ParseErrorKind.UNRECOGNIZED_LAYOUT,
            "TAMPERED without a holistic cue or any anomalous cell",
        )
    return RegionVerdict(cue, tuple(cells.values()), label, explanation)


# ---------------------------------------------------------------------------
# Pass 1: normalize format
# ---------------------------------------------------------------------------

_DECORATION = re.compile(r"^(?:[-*•>]+|\d+[.)])\s+")
_EMPHASIS = re.compile(r"(\*\*|__|`)")
_SEP = r"\s*[|;,]\s*"

_N_FACTOR = re.compile(
    r"^factor\s*[:=]\s*(?P<name>[^|;,]+?)" + _SEP + r"score\s*[:=]\s*(?P<score>[^|;,]+?)"
    + _SEP + r"(?:why|justification|reason)\s*[:=]?\s*(?P<why>.*)$",
    re.IGNORECASE,
)
_N_LABEL = re.compile(
    r"^(?:final\s+|global\s+|overall\s+)?(?:label|verdict|classification|conclusion)\s*[:=]\s*(?P<v>.*)$",
    re.IGNORECASE,
)
_N_ANSWER = re.compile(r"^(?:final\s+)?answer\s*[:=]\s*(?P<v>.*)$", re.IGNORECASE)
_N_REASONING = re.compile(r"^(?:major\s+)?(?:reasoning|reason|rationale)\s*[:=]\s*(?P<v>.*)$", re.IGNORECASE)
_N_CUE = re.compile(
    r"^holistic[\s_-]*cues?(?:[\s_-]*found)?\s*[:=]\s*(?P<v>yes|no|true|false)\b[\s.]*$", re.IGNORECASE
)
_N_CELL = re.compile(
    r"^cell\s*(?:#|no\.?)?\s*[:=]?\s*(?P<idx>[^|;,\s]+)" + _SEP
    + r"anomal(?:ous|y)\s*[:=]\s*(?P<a>yes|no|true|false)" + _SEP
    + r"(?:note|notes|why|reason)\s*[:=]?\s*(?P<note>.*)$",
    re.IGNORECASE,
)
_N_EXPLANATION = re.compile(r"^(?:explanation|summary)\s*[:=]\s*(?P<v>.*)$", re.IGNORECASE)


def _clean_line(line: str) -> str:
    line = _DECORATION.sub("", line.strip())
    line = _EMPHASIS.sub("", line)
    return " ".join(line.split())


def _clean_value(value: str) -> str:
    # "TAMPERED. The halo is decisive." keeps only the label sentence
    value = re.split(r"(?<=\w)[.;!](?:\s|$)|\s[-–—]\s", value.strip(), maxsplit=1)[0]
    return value.strip().strip(".!\"'").strip().upper()


def _yes(value: str) -> str:
    return "YES" if value.strip().lower() in ("yes", "true") else "NO"


def _normalize_line(line: str, schema_id: str) -> str | None:
    """Canonical form of a loosely formatted layout line, or None if it is prose."""
    if schema_id == "binary_v1":
        if m := _N_ANSWER.match(line) or _N_LABEL.match(line):
            return _kv("ANSWER", _clean_value(m.group("v")))
        return None
    if m := _N_LABEL.match(line):
        return _kv("LABEL", _clean_value(m.group("v")))
    if schema_id == "holistic_v1":
        if m := _N_FACTOR.match(line):
            factor = resolve_factor(m.group("name"))
            name = factor.value if factor else m.group("name").strip().lower()
            score = re.sub(r"\s*(?:/|out\s+of)\s*5$", "", m.group("score").strip(), flags=re.IGNORECASE)
            return f"FACTOR: {name} | SCORE: {score.lower()} | WHY: {m.group('why').strip()}".rstrip()
        if m := _N_REASONING.match(line):
            return _kv("REASONING", m.group("v").strip())
        return None
    if m := _N_CUE.match(line):
        return _kv("HOLISTIC_CUE", _yes(m.group("v")))
    if m := _N_CELL.match(line):
        return _kv(f"CELL: {m.group('idx')} | ANOMALOUS: {_yes(m.group('a'))} | NOTE", m.group("note").strip())
    if m := _N_EXPLANATION.match(line):
        return _kv("EXPLANATION", m.group("v").strip())
    return None


def normalize_format(text: str, schema_id: str) -> list[str]:
    """Rewrite loosely formatted layout lines canonically and drop surrounding prose."""
    out: list[str] = []
    for raw in _content_lines(text):
        line = _clean_line(raw)
        if not line:
            continue
        canonical = _normalize_line(line, schema_id)
        if canonical is not None and canonical not in out[-1:]:
            out.append(canonical)
    return out


# ---------------------------------------------------------------------------
# Pass 2: fold label synonyms
# ---------------------------------------------------------------------------


def fold_label_synonyms(lines: list[str], schema_id: str, text: str = "") -> tuple[list[str], str | None]:
    """Fold label values to canonical tokens.

    Also returns the answer word as written, for ``BinaryVerdict.raw_answer``.
    ``text`` is the raw response, used to catch bare one-word binary replies.
    """
    key, tokens = ("ANSWER", _BINARY_TOKEN) if schema_id == "binary_v1" else ("LABEL", _LABEL_TOKEN)
    out: list[str] = []
    original = None
    for line in lines:
        if line.startswith(f"{key}: "):
            value = line[len(key) + 2:]
            label = fold_label(value)
            if label is not None:
                words = _LABEL_WORD.findall(_LABEL_ECHO.sub(" ", value))
                original = words[0].upper() if words else value
                line = f"{key}: {tokens[label]}"
        out.append(line)
    if schema_id == "binary_v1" and not any(l.startswith("ANSWER: ") for l in out):
        # a bare one-word reply such as "Fake."
        bare = [_clean_line(l) for l in _strip_fences(text).splitlines() if l.strip()]
        if len(bare) == 1:
            word = bare[0].strip(".!\"' ").upper()
            if word.lower() in LABEL_SYNONYMS:
                original = word
                out = [f"ANSWER: {_BINARY_TOKEN[LABEL_SYNONYMS[word.lower()]]}"]
    return out, original


def _strip_fences(text: str) -> str:
    return "\n".join(l for l in text.splitlines() if not (_FENCE_OPEN.match(l) or _FENCE_CLOSE.match(l)))


# ---------------------------------------------------------------------------
# Pass 3: lenient extraction from prose
# ---------------------------------------------------------------------------

_SCORE_AFTER_MENTION = [
    re.compile(r"\b(?:score|rating|likert)\s*(?:of|is|=|:)?\s*(?P<v>" + _NUM + r")\b", re.IGNORECASE),
    re.compile(r"(?<![\w.])(?P<v>" + _NUM + r")\s*(?:/|out\s+of)\s*5\b", re.IGNORECASE),
    re.compile(r"^[^\w]*?[:=–-]\s*(?P<v>" + _NUM + r")\b", re.IGNORECASE),
    re.compile(r"\(\s*(?P<v>" + _NUM + r")\s*\)", re.IGNORECASE),
]
_SEGMENT_SPLIT = re.compile(r"[\n;]|(?<=[.!?])\s+(?=[A-Z*#\-])")
_SKIP_SEGMENT = re.compile(
    r"^\W*(?:label|reasoning|major\s+reasoning|explanation|verdict|conclusion|summary|answer)\b",
    re.IGNORECASE,
)


def _segments(text: str) -> list[str]:
    return [s.strip() for s in _SEGMENT_SPLIT.split(_strip_fences(text)) if s and s.strip()]


def _find_label(text: str, *, first_word: bool = False) -> tuple[GroundTruth, str] | None:
    scrubbed = _scrub_questions(_EMPHASIS.sub("", text))
    keyed = _LABEL_KEY_PHRASE.findall(scrubbed)
    if keyed:
        if len({LABEL_SYNONYMS[w.lower()] for w in keyed}) > 1:
            return None
        word = keyed[-1]
        return LABEL_SYNONYMS[word.lower()], word.upper()
    words = _LABEL_WORD.findall(scrubbed)
    if not words:
        return None
    if first_word:
        # "Fake. Although the sky looks real..." answers with its first word
        lead = re.match(r"^\W*(\w+)\s*(?:[.!:\n]|$)", scrubbed)
        if lead and lead.group(1).lower() in LABEL_SYNONYMS:
            return LABEL_SYNONYMS[lead.group(1).lower()], lead.group(1).upper()
    classes = {LABEL_SYNONYMS[w.lower()] for w in words}
    if len(classes) == 1:
        return classes.pop(), words[0].upper()
    return None


def _keyed_value(lines: list[str], key: str) -> str | None:
    for line in lines:
        if line.startswith(f"{key}:"):
            return line[len(key) + 1:].strip()
    return None


def _lenient_binary(text: str, lines: list[str]) -> BinaryVerdict:
    found = _find_label(text, first_word=True)
    if found is None:
        raise _Reject(ParseErrorKind.NO_GLOBAL_LABEL, "no REAL/FAKE answer found")
    return BinaryVerdict(found[0], found[1])


def _lenient_holistic(text: str, lines: list[str]) -> HolisticVerdict:
    found: dict[FactorKind, FactorAssessment] = {}
    for segment in _segments(text):
        plain = _EMPHASIS.sub("", segment)
        if _SKIP_SEGMENT.match(plain):
            continue
        mention = _FACTOR_MENTION.search(plain)
        if not mention:
            continue
        factor = resolve_factor(mention.group(1))
        if factor is None or factor in found:
            continue
        # skip the rest of a compound name like "Lighting / Shadow" before looking for the score
        tail = re.sub(r"^(?:\s*(?:/|&|and|-|_)\s*[A-Za-z]+)*", "", plain[mention.end():])
        for pattern in _SCORE_AFTER_MENTION:
            m = pattern.search(tail)
            if m:
                score = _likert(m.group("v"), factor, allow_words=True)
                why = tail[m.end():].strip(" \t|:;,.-–)(")
                why = re.sub(r"^(?:why|justification|reason)\s*[:=]\s*", "", why, flags=re.IGNORECASE)
                found[factor] = FactorAssessment(factor, score, why or plain)
                break
    label_token = _keyed_value(lines, "LABEL")
    label = _TOKEN_LABEL.get(label_token or "")
    if label is None:
        hit = _find_label(text)
        label = hit[0] if hit else None
    if not found and label is None:
        raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, "no factor scores or label found")
    missing = [f.value for f in canonical_factors() if f not in found]
    if missing:
        raise _Reject(ParseErrorKind.MISSING_FACTOR, "missing: " + ", ".join(missing))
    if label is None:
        raise _Reject(ParseErrorKind.NO_GLOBAL_LABEL, "no label found")
    return HolisticVerdict(tuple(found.values()), label, _keyed_value(lines, "REASONING") or "")


_CELL_NUM = r"-?\d+(?:\.\d+)?"
_CELL_MENTION = re.compile(
    r"\bcells?\s*(?:#|no\.?|number)?\s*[:=]?\s*(" + _CELL_NUM + r"(?:\s*(?:,|and|&|or)\s*" + _CELL_NUM + r")*)\b",
    re.IGNORECASE,
)
_CELL_EXPLICIT = re.compile(r"anomal(?:ous|y)\s*[:=]\s*(yes|no|true|false)", re.IGNORECASE)
_CELL_NEGATIVE = re.compile(
    r"\bno\s+(?:\w+\s+)?(?:anomal\w*|issues?|signs?|manipulation|tampering|inconsistenc\w*)"
    r"|\bnot\s+(?:\w+\s+)?(?:anomalous|suspicious|tampered|manipulated|edited)"
    r"|\b(?:normal|authentic|consistent|clean|natural|unremarkable)\b",
    re.IGNORECASE,
)
_CELL_POSITIVE = re.compile(
    r"\b(?:anomal\w*|suspicious|tamper\w*|manipulat\w*|inconsisten\w*|forged|edited|spliced|artifacts?|blurr\w*)\b",
    re.IGNORECASE,
)
_NO_CUE_PHRASE = re.compile(r"\bno\s+holistic\s+cues?\b|\bholistic\s+cues?\s*[:=]\s*none\b", re.IGNORECASE)
_CUE_PHRASE = re.compile(
    r"holistic\s+cues?\s+(?:were\s+|was\s+|is\s+|are\s+)?(not\s+found|not\s+detected|found|detected|present|identified|absent|none)",
    re.IGNORECASE,
)


def _lenient_cell(numbers: str, rest: str, cells: dict[int, CellFinding]) -> None:
    """Record the finding for one cell mention; ``rest`` runs to the next mention."""
    indices = [_cell_index(t) for t in re.findall(_CELL_NUM, numbers)]
    if explicit := _CELL_EXPLICIT.search(rest):
        anomalous: bool | None = explicit.group(1).lower() in ("yes", "true")
    elif _CELL_NEGATIVE.search(rest):
        anomalous = False
    elif _CELL_POSITIVE.search(rest):
        anomalous = True
    else:
        anomalous = None
    if anomalous is None:
        return
    note = re.sub(r"^.*?\bnote\s*[:=]\s*", "", rest, flags=re.IGNORECASE).strip(" \t|:;,.-–")
    for idx in indices:
        cells.setdefault(idx, CellFinding(idx, anomalous, note))


def _lenient_region(text: str, lines: list[str]) -> RegionVerdict:
    cells: dict[int, CellFinding] = {}
    for segment in _segments(text):
        plain = _EMPHASIS.sub("", segment)
        mentions = list(_CELL_MENTION.finditer(plain))
        for m, nxt in zip(mentions, mentions[1:] + [None]):
            _lenient_cell(m.group(1), plain[m.end():nxt.start() if nxt else None], cells)

    label_token = _keyed_value(lines, "LABEL")
    label = _TOKEN_LABEL.get(label_token or "")
    if label is None:
        hit = _find_label(text)
        label = hit[0] if hit else None
    if label is None:
        if not cells:
            raise _Reject(ParseErrorKind.UNRECOGNIZED_LAYOUT, "no cell findings or label found")
        raise _Reject(ParseErrorKind.NO_GLOBAL_LABEL, "no label found")

    cue_token = _keyed_value(lines, "HOLISTIC_CUE")
    if cue_token is not None:
        cue = cue_token == "YES"
    elif _NO_CUE_PHRASE.search(text):
        cue = False
    elif phrase := _CUE_PHRASE.search(text):
        cue = phrase.group(1).lower() in ("found", "detected", "present", "identified")
    else:
        # Tampered with no cited cell means the evidence was scene-level.
        cue = label is GroundTruth.TAMPERED and not any(c.anomalous for c in cells.values())
    return _region_verdict(cue, cells, label, _keyed_value(lines, "EXPLANATION") or "")


# ---------------------------------------------------------------------------
# Refusals and the driver
# ---------------------------------------------------------------------------


def detect_refusal(text: str) -> bool:
    """True when the text declines the task and carries no label or score."""
    if not text or not text.strip():
        return False
    if not any(p.search(text) for p in _REFUSAL_PATTERNS):
        return False
    scrubbed = _scrub_questions(text)
    return not _LABEL_WORD.search(scrubbed) and not _SCORE_EVIDENCE.search(scrubbed)


@dataclass(frozen=True)
class _SchemaParser:
    strict: Callable[[list[str]], Verdict]
    lenient: Callable[[str, list[str]], Verdict]


PARSERS: dict[str, _SchemaParser] = {
    "binary_v1": _SchemaParser(_strict_binary, _lenient_binary),
    "holistic_v1": _SchemaParser(_strict_holistic, _lenient_holistic),
    "region_v1": _SchemaParser(_strict_region, _lenient_region),
}


def parse(text: str, schema_id: str, *, repair: bool = True) -> ParseOutcome:
    """Parse ``text`` under ``schema_id``; failures come back as ``Failed``, never raised."""
    if schema_id not in PARSERS:
        raise ValueError(f"unknown schema id {schema_id!r}; expected one of {SCHEMA_IDS}")
    schema = PARSERS[schema_id]
    if text is None or not str(text).strip():
        return Failed(ParseError(ParseErrorKind.EMPTY_RESPONSE, "response is empty"))
    text = str(text)

    try:
        return Parsed(schema.strict(_content_lines(text)), ())
    except _Reject as exc:
        if exc.hard or not repair:
            return Failed(exc.error)
        structured = exc.error

    repairs: list[str] = []
    raw_lines = _content_lines(text)

    lines = normalize_format(text, schema_id)
    if lines and lines != raw_lines:
        repairs.append(REPAIR_NORMALIZE)
        try:
            return Parsed(schema.strict(lines), tuple(repairs))
        except _Reject as exc:
            if exc.hard:
                return Failed(exc.error)
            structured = exc.error

    folded, original = fold_label_synonyms(lines, schema_id, text)
    if folded != lines:
        repairs.append(REPAIR_FOLD)
        lines = folded
        try:
            verdict = schema.strict(lines)
            if isinstance(verdict, BinaryVerdict) and original:
                verdict = dataclasses.replace(verdict, raw_answer=original)
            return Parsed(verdict, tuple(repairs))
        except _Reject as exc:
            if exc.hard:
                return Failed(exc.error)
            structured = exc.error

    try:
        return Parsed(schema.lenient(text, lines), tuple(repairs + [REPAIR_LENIENT]))
    except _Reject as exc:
        if exc.hard:
            return Failed(exc.error)
        lenient = exc.error

    if detect_refusal(text):
        return Failed(ParseError(ParseErrorKind.REFUSAL_DETECTED, "response declines the task"))
    if structured.kind is not ParseErrorKind.UNRECOGNIZED_LAYOUT:
        return Failed(structured)
    return Failed(lenient)


def outcome_to_dict(outcome: ParseOutcome) -> dict:
    if isinstance(outcome, Parsed):
        return {
            "status": "parsed",
            "repairs": list(outcome.repairs_applied),
            "verdict": outcome.verdict.to_dict(),
        }
    return {"status": "failed", "error": outcome.error.to_dict()}
