import json

import numpy as np
import pytest

from .helpers import write_png


@pytest.fixture
def make_manifest(tmp_path):
    """Write noise images and a manifest; returns the manifest path."""

    def _make(rows, name="manifest.jsonl", size=64, seed=0):
        rng = np.random.default_rng(seed)
        lines = []
        for row in rows:
            row = dict(row)
            img = tmp_path / f"{row['id']}.png"
            if not img.exists():
                write_png(img, rng.integers(0, 256, (size, size, 3), dtype=np.uint8))
            row.setdefault("image_path", img.name)
            lines.append(json.dumps(row))
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _make


# -- acceptance summary ------------------------------------------------------

_CRITERIA: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid, title = marker.args
    entry = _CRITERIA.setdefault(cid, [title, True, 0.0])
    if report.failed or (report.when == "call" and report.skipped):
        entry[1] = False
    if report.when == "call":
        entry[2] += report.duration


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c.split("-")[1])):
        title, ok, seconds = _CRITERIA[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {cid} {title} ({seconds:.2f} s)")
