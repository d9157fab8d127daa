"""Evaluation matrix: manifests x strategies x backends -> records.jsonl.

Records are written by a single writer in matrix order, so a run with the
mock backend is reproducible byte for byte apart from ``latency_ms``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterator

import yaml

from .domain import ForgeryDomain, GroundTruth, HolisticVerdict, Sample
from .errors import ConfigError, ManifestError, OverlayError, TransportError
from .gateway import BackendConfig, ModelGateway, cache_key
from .metrics import tampering_score
from .overlay import DEFAULT_STYLE, OverlayStyle, overlay_png
from .parser import Parsed, outcome_to_dict, parse
from .prompts import PromptSpec, PromptStrategy, build_prompt

log = logging.getLogger(__name__)

CACHE_ENV_VAR = "REVEAL_CACHE_DIR"
RECORDS_FILE = "records.jsonl"
MANIFEST_FIELDS = ("id", "image_path", "label", "domain", "dataset")


def load_manifest(path: str | Path) -> list[Sample]:
    """Read a JSON-lines manifest; relative image paths resolve against the manifest's folder.

    Every problem is collected and reported together, with line numbers, so
    a broken manifest fails before any backend is called.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError("manifest file not found", path=str(path))
    samples: list[Sample] = []
    problems: list[str] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                problems.append(f"line {lineno}: invalid JSON ({exc.msg})")
                continue
            if not isinstance(obj, dict):
                problems.append(f"line {lineno}: expected a JSON object")
                continue
            missing = [k for k in MANIFEST_FIELDS if k not in obj or obj[k] in (None, "")]
            if missing:
                problems.append(f"line {lineno}: missing field(s) {', '.join(missing)}")
                continue
            try:
                label = GroundTruth(obj["label"])
            except ValueError:
                problems.append(f"line {lineno}: label must be 'authentic' or 'tampered', got {obj['label']!r}")
                continue
            try:
                domain = ForgeryDomain(obj["domain"])
            except ValueError:
                allowed = ", ".join(d.value for d in ForgeryDomain)
                problems.append(f"line {lineno}: domain must be one of {allowed}, got {obj['domain']!r}")
                continue
            sample_id = str(obj["id"])
            if sample_id in seen:
                problems.append(f"line {lineno}: duplicate id {sample_id!r} (first seen on line {seen[sample_id]})")
                continue
            seen[sample_id] = lineno
            image = Path(obj["image_path"])
            if not image.is_absolute():
                image = path.parent / image
            if not image.is_file() or not os.access(image, os.R_OK):
                problems.append(f"line {lineno}: image not found or unreadable: {image}")
                continue
            samples.append(Sample(sample_id, image, label, domain, str(obj["dataset"])))
    if problems:
        raise ManifestError(
            f"{len(problems)} problem(s):\n  " + "\n  ".join(problems),
            line=_first_line(problems),
            path=str(path),
        )
    return samples


def _first_line(problems: list[str]) -> int | None:
    head = problems[0].split(":", 1)[0]
    return int(head.split()[1]) if head.startswith("line ") else None


@dataclass
class RunConfig:
    datasets: list[Path]
    strategies: list[PromptStrategy]
    backends: list[BackendConfig]
    concurrency_limit: int = 4
    output_dir: Path = Path("runs")
    cache_dir: Path = Path(".reveal-cache")
    resume: bool = False
    overlay_style: OverlayStyle = DEFAULT_STYLE

    def __post_init__(self) -> None:
        if not self.datasets:
            raise ConfigError("at least one dataset manifest is required")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if not self.backends:
            raise ConfigError("at least one backend is required")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        self.datasets = [Path(p) for p in self.datasets]
        try:
            self.strategies = [PromptStrategy(s) for s in self.strategies]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.output_dir = Path(self.output_dir)
        self.cache_dir = Path(self.cache_dir)

    @property
    def effective_cache_dir(self) -> Path:
        override = os.environ.get(CACHE_ENV_VAR)
        return Path(override) if override else self.cache_dir

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | None = None) -> RunConfig:
        base = Path(base_dir) if base_dir else Path.cwd()

        def resolve(p: str | Path) -> Path:
            p = Path(p).expanduser()
            return p if p.is_absolute() else base / p

        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown run config fields: {sorted(unknown)}")
        kwargs = dict(data)
        kwargs["datasets"] = [resolve(p) for p in data.get("datasets") or []]
        kwargs["backends"] = [BackendConfig.from_dict(b) for b in data.get("backends") or []]
        kwargs["strategies"] = data.get("strategies") or []
        for key in ("output_dir", "cache_dir"):
            if key in data:
                kwargs[key] = resolve(data[key])
            else:
                kwargs[key] = resolve(cls.__dataclass_fields__[key].default)
        if "overlay_style" in data:
            style = dict(data["overlay_style"])
            for color in ("line_color", "label_color", "label_background"):
                if color in style:
                    style[color] = tuple(style[color])
            kwargs["overlay_style"] = OverlayStyle(**style)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read run config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"run config {path} must be a mapping")
        return cls.from_dict(data, base_dir=path.parent)


@dataclass
class EvalRecord:
    record_key: str
    sample_id: str
    dataset: str
    domain: str
    model_name: str
    strategy: str
    schema_id: str
    template_version: str
    ground_truth: str
    raw_response: str
    outcome: dict[str, Any]
    predicted_label: str | None
    tampering_score: float | None
    latency_ms: float
    cached: bool = False
    attempt_count: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EvalRecord:
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    @property
    def status(self) -> str:
        return self.outcome.get("status", "")


# Fields that legitimately differ between otherwise identical runs.
VOLATILE_FIELDS = ("latency_ms", "cached")


def read_records(path: str | Path) -> list[EvalRecord]:
    """Load a records log; a later record with the same key supersedes an earlier one."""
    by_key: dict[str, EvalRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if raw.strip():
                rec = EvalRecord.from_dict(json.loads(raw))
                by_key.pop(rec.record_key, None)
                by_key[rec.record_key] = rec
    return list(by_key.values())


def record_key(sample: Sample, strategy: PromptStrategy, spec_key: str) -> str:
    digest = hashlib.sha256("\0".join([sample.dataset, sample.id, strategy.value, spec_key]).encode("utf-8"))
    return digest.hexdigest()


@dataclass(frozen=True)
class _Task:
    backend: int
    sample: Sample
    strategy: PromptStrategy


def build_spec(sample: Sample, strategy: PromptStrategy, style: OverlayStyle = DEFAULT_STYLE) -> PromptSpec:
    """Prompt for one sample; only the region-wise strategy sends the gridded image."""
    image = sample.image_path.read_bytes()
    if strategy is PromptStrategy.REGION_WISE:
        image = overlay_png(image, style)
    return build_prompt(strategy, image)


def _new_run_dir(output_dir: Path) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    candidate = output_dir / f"run-{stamp}"
    n = 1
    while candidate.exists():
        candidate = output_dir / f"run-{stamp}-{n}"
        n += 1
    candidate.mkdir(parents=True)
    return candidate


def latest_run_dir(output_dir: Path) -> Path | None:
    runs = sorted(p for p in Path(output_dir).glob("run-*") if (p / RECORDS_FILE).is_file())
    return runs[-1] if runs else None


def _check_output_dir(output_dir: Path) -> None:
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        probe = output_dir / ".write-probe"
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output_dir {output_dir} is not writable: {exc}") from exc


def _check_api_keys(backends: list[BackendConfig]) -> None:
    missing = [
        f"{b.api_key_env_var} (for {b.model_name})"
        for b in backends
        if b.is_live and b.api_key_env_var and not os.environ.get(b.api_key_env_var)
    ]
    if missing:
        raise ConfigError("missing API key environment variable(s): " + ", ".join(missing))


GatewayFactory = Callable[[BackendConfig, Path], ModelGateway]


def default_gateway_factory(config: BackendConfig, cache_dir: Path) -> ModelGateway:
    return ModelGateway(config, cache_dir=cache_dir)


@dataclass
class Evaluation:
    """Prepared run: loaded samples, gateways and the ordered task matrix."""

    config: RunConfig
    samples: list[Sample]
    gateways: list[ModelGateway]
    tasks: list[_Task] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.tasks = [
            _Task(b, sample, strategy)
            for b in range(len(self.gateways))
            for sample in self.samples
            for strategy in self.config.strategies
        ]

    def spec_and_key(self, task: _Task) -> tuple[PromptSpec | None, str, str | None]:
        gateway = self.gateways[task.backend]
        try:
            spec = build_spec(task.sample, task.strategy, self.config.overlay_style)
        except (OSError, ValueError, OverlayError) as exc:
            key = record_key(task.sample, task.strategy, f"input-error:{gateway.config.model_name}")
            return None, key, f"{type(exc).__name__}: {exc}"
        return spec, record_key(task.sample, task.strategy, cache_key(spec, gateway.config)), None

    def evaluate(self, task: _Task, done: set[str]) -> EvalRecord | None:
        gateway = self.gateways[task.backend]
        backend = gateway.config
        sample = task.sample
        spec, key, input_error = self.spec_and_key(task)
        if key in done:
            return None
        base = dict(
            record_key=key,
            sample_id=sample.id,
            dataset=sample.dataset,
            domain=sample.domain.value,
            model_name=backend.model_name,
            strategy=task.strategy.value,
            schema_id=spec.schema_id if spec else "",
            template_version=spec.template_version if spec else "",
            ground_truth=sample.ground_truth.value,
        )
        if spec is None:
            return EvalRecord(
                **base, raw_response="", outcome={"status": "input_error", "error": input_error},
                predicted_label=None, tampering_score=None, latency_ms=0.0,
            )
        hint = sample.ground_truth if backend.kind == "mock_oracle" else None
        try:
            response = gateway.complete(spec, hint)
        except TransportError as exc:
            return EvalRecord(
                **base, raw_response="",
                outcome={"status": "transport_error", "error": str(exc), "http_status": exc.status},
                predicted_label=None, tampering_score=None, latency_ms=0.0, attempt_count=exc.attempts,
            )
        outcome = parse(response.text, spec.schema_id)
        predicted = score = None
        if isinstance(outcome, Parsed):
            predicted = outcome.verdict.global_label.value
            if isinstance(outcome.verdict, HolisticVerdict):
                score = tampering_score(outcome.verdict)
        return EvalRecord(
            **base,
            raw_response=response.text,
            outcome=outcome_to_dict(outcome),
            predicted_label=predicted,
            tampering_score=score,
            latency_ms=round(response.latency_ms, 3),
            cached=response.cached,
            attempt_count=response.attempt_count,
        )


def prepare(config: RunConfig, gateway_factory: GatewayFactory | None = None) -> Evaluation:
    samples: list[Sample] = []
    for manifest in config.datasets:
        samples.extend(load_manifest(manifest))
    factory = gateway_factory or default_gateway_factory
    gateways = [factory(b, config.effective_cache_dir) for b in config.backends]
    return Evaluation(config, samples, gateways)


def run(config: RunConfig, gateway_factory: GatewayFactory | None = None) -> Path:
    """Evaluate the full matrix and return the path of the records log."""
    _check_output_dir(config.output_dir)
    evaluation = prepare(config, gateway_factory)
    _check_api_keys(config.backends)

    run_dir = latest_run_dir(config.output_dir) if config.resume else None
    if run_dir is None:
        run_dir = _new_run_dir(config.output_dir)
    records_path = run_dir / RECORDS_FILE
    done: set[str] = set()
    if records_path.exists():
        done = {r.record_key for r in read_records(records_path) if r.status in ("parsed", "failed")}
        log.info("resuming %s: %d records already complete", run_dir, len(done))
    (run_dir / "config.json").write_text(
        json.dumps(_config_snapshot(config), indent=2, sort_keys=True, default=str), encoding="utf-8"
    )

    written = 0
    try:
        with ThreadPoolExecutor(max_workers=config.concurrency_limit) as pool, open(
            records_path, "a", encoding="utf-8"
        ) as fh:
            for record in pool.map(lambda t: evaluation.evaluate(t, done), evaluation.tasks):
                if record is not None:
                    fh.write(record.to_json() + "\n")
                    fh.flush()
                    written += 1
    finally:
        for gateway in evaluation.gateways:
            gateway.close()
    log.info("wrote %d records to %s (%d tasks)", written, records_path, len(evaluation.tasks))
    return records_path


def _config_snapshot(config: RunConfig) -> dict[str, Any]:
    return {
        "datasets": [str(p) for p in config.datasets],
        "strategies": [s.value for s in config.strategies],
        "backends": [b.to_dict() for b in config.backends],
        "concurrency_limit": config.concurrency_limit,
        "resume": config.resume,
        "overlay_style": asdict(config.overlay_style),
    }


@dataclass(frozen=True)
class PlanRow:
    model_name: str
    strategy: str
    dataset: str
    calls: int
    cached: int
    usd_per_call: float | None

    @property
    def live(self) -> int:
        return self.calls - self.cached

    @property
    def cost(self) -> float | None:
        return None if self.usd_per_call is None else self.live * self.usd_per_call


def plan(config: RunConfig) -> list[PlanRow]:
    """Call matrix with cache hits counted; nothing is sent to any backend."""
    evaluation = prepare(config)
    counts: dict[tuple[int, str, str], list[int]] = {}
    for task in evaluation.tasks:
        gateway = evaluation.gateways[task.backend]
        cell = counts.setdefault((task.backend, task.strategy.value, task.sample.dataset), [0, 0])
        cell[0] += 1
        if gateway.config.is_live and gateway.cache is not None:
            spec, _, _ = evaluation.spec_and_key(task)
            if spec is not None and gateway.cache.contains(cache_key(spec, gateway.config)):
                cell[1] += 1
    return [
        PlanRow(
            evaluation.gateways[b].config.model_name, strategy, dataset, calls, cached,
            evaluation.gateways[b].config.usd_per_call if evaluation.gateways[b].config.is_live else 0.0,
        )
        for (b, strategy, dataset), (calls, cached) in counts.items()
    ]


def format_plan(rows: list[PlanRow]) -> Iterator[str]:
    yield f"{'model':<24} {'strategy':<12} {'dataset':<16} {'calls':>6} {'cached':>6} {'live':>6} {'est. USD':>9}"
    total_cost = 0.0
    unknown = False
    for r in rows:
        cost = "n/a" if r.cost is None else f"{r.cost:.2f}"
        if r.cost is None:
            unknown = True
        else:
            total_cost += r.cost
        yield f"{r.model_name:<24} {r.strategy:<12} {r.dataset:<16} {r.calls:>6} {r.cached:>6} {r.live:>6} {cost:>9}"
    total = sum(r.calls for r in rows)
    live = sum(r.live for r in rows)
    note = " (excludes backends without usd_per_call)" if unknown else ""
    yield f"total: {total} calls, {live} live, estimated cost ${total_cost:.2f}{note}"
