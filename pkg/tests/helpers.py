from pathlib import Path

import numpy as np
from hypothesis import strategies as st
from PIL import Image

from reveal.domain import (
    BinaryVerdict,
    CellFinding,
    FactorAssessment,
    GroundTruth,
    HolisticVerdict,
    RegionVerdict,
    canonical_factors,
)

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

# Free text the canonical layout can carry: one line, no pipes, no fences.
_TEXT_ALPHABET = st.characters(
    whitelist_categories=("Lu", "Ll", "Nd", "Zs"), whitelist_characters=".,;:'()-/%"
)
free_text = st.text(_TEXT_ALPHABET, min_size=1, max_size=60).map(lambda s: " ".join(s.split())).filter(bool)
labels = st.sampled_from(list(GroundTruth))


@st.composite
def holistic_verdicts(draw):
    scores = draw(st.lists(st.integers(1, 5), min_size=8, max_size=8))
    assessments = tuple(
        FactorAssessment(f, s, draw(free_text)) for f, s in zip(canonical_factors(), scores)
    )
    order = draw(st.permutations(range(8)))
    return HolisticVerdict(tuple(assessments[i] for i in order), draw(labels), draw(free_text))


@st.composite
def region_verdicts(draw):
    label = draw(labels)
    cue = draw(st.booleans())
    indices = draw(st.lists(st.integers(1, 9), unique=True, max_size=9))
    flags = [draw(st.booleans()) for _ in indices]
    if label is GroundTruth.TAMPERED and not cue and not any(flags):
        # A tampered verdict without a scene-level cue must cite a cell.
        if not indices:
            indices, flags = [draw(st.integers(1, 9))], [False]
        flags[0] = True
    cells = tuple(
        CellFinding(i, a, draw(st.one_of(st.just(""), free_text))) for i, a in zip(indices, flags)
    )
    return RegionVerdict(cue, cells, label, draw(st.one_of(st.just(""), free_text)))


binary_verdicts = st.builds(
    lambda label: BinaryVerdict(label, "FAKE" if label is GroundTruth.TAMPERED else "REAL"), labels
)


def write_png(path: Path, array: np.ndarray) -> Path:
    Image.fromarray(array).save(path)
    return path


def sample_rows(n_per_class, dataset="CASIA1+", domain="photoshop", prefix="s"):
    rows = []
    for i in range(n_per_class):
        for label in ("authentic", "tampered"):
            rows.append({"id": f"{prefix}{label[0]}{i:03d}", "label": label, "domain": domain, "dataset": dataset})
    return rows


def rects_tile(width, height):
    """True when cells 1..9 partition the image exactly.

    Each cell must be the product of one column span and one row span, and
    the three spans per axis must be non-empty, contiguous and cover the
    axis. That is exact tiling without materializing a pixel grid.
    """
    from reveal.overlay import cell_bounds

    rects = {i: cell_bounds(i, width, height) for i in range(1, 10)}
    for axis, size in ((0, width), (1, height)):
        spans = []
        for k in range(3):
            members = [rects[1 + k + 3 * j] if axis == 0 else rects[1 + 3 * k + j] for j in range(3)]
            starts = {r[axis] for r in members}
            lengths = {r[axis + 2] for r in members}
            if len(starts) != 1 or len(lengths) != 1:
                return False
            spans.append((starts.pop(), lengths.pop()))
        pos = 0
        for start, length in spans:
            if start != pos or length < 1:
                return False
            pos += length
        if pos != size:
            return False
    return True
