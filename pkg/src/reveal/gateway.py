"""Dispatch prompts to vision-language backends.

Two backend kinds exist. ``http_chat`` speaks the OpenAI-compatible
chat-completions protocol, which covers hosted GPT, Gemini (compatibility
endpoint) and self-hosted LLaVA servers. ``mock_oracle`` synthesizes
responses offline, conditioned on the sample's ground truth, so the whole
pipeline can be exercised without network access.

Live responses are cached on disk by content hash; a cached prompt is never
sent again.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import httpx
import numpy as np

from .domain import (
    BinaryVerdict,
    CellFinding,
    FactorAssessment,
    GroundTruth,
    HolisticVerdict,
    RegionVerdict,
    canonical_factors,
)
from .errors import CacheError, ConfigError, TransportError
from .parser import render_verdict
from .prompts import PromptSpec

log = logging.getLogger(__name__)

BACKEND_KINDS = ("http_chat", "mock_oracle")
RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class MockOracleConfig:
    seed: int = 0
    authentic_mean: float = 1.8
    tampered_mean: float = 4.2
    noise_std: float = 0.6
    malformed_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("authentic_mean", "tampered_mean"):
            if not 1.0 <= getattr(self, name) <= 5.0:
                raise ConfigError(f"{name} must be within the Likert range 1..5")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if not 0.0 <= self.malformed_rate <= 1.0:
            raise ConfigError("malformed_rate must be in [0, 1]")


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    model_name: str
    endpoint_url: str | None = None
    api_key_env_var: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    requests_per_minute: int = 60
    timeout: float = 60.0
    max_tokens: int | None = None
    usd_per_call: float | None = None
    mock: MockOracleConfig | None = None

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}; expected one of {BACKEND_KINDS}")
        if not self.model_name:
            raise ConfigError("model_name is required")
        if (self.kind == "http_chat") != bool(self.endpoint_url):
            raise ConfigError("endpoint_url is required for http_chat and only allowed there")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.requests_per_minute < 1:
            raise ConfigError("requests_per_minute must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")
        if self.kind == "mock_oracle" and self.mock is None:
            object.__setattr__(self, "mock", MockOracleConfig())
        if self.kind == "http_chat" and self.mock is not None:
            raise ConfigError("mock settings are only valid for mock_oracle backends")

    @property
    def is_live(self) -> bool:
        return self.kind == "http_chat"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BackendConfig:
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown backend fields: {sorted(unknown)}")
        if isinstance(data.get("mock"), dict):
            try:
                data["mock"] = MockOracleConfig(**data["mock"])
            except TypeError as exc:
                raise ConfigError(f"bad mock settings: {exc}") from None
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad backend config: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ModelResponse:
    text: str
    latency_ms: float
    backend_model: str
    cached: bool = False
    attempt_count: int = 1


def cache_key(spec: PromptSpec, config: BackendConfig) -> str:
    """SHA-256 over the prompt content and the model settings that affect the answer."""
    digest = hashlib.sha256()
    for part in (
        spec.image_payload,
        spec.system_text.encode("utf-8"),
        spec.user_text.encode("utf-8"),
        spec.template_version.encode("utf-8"),
        config.model_name.encode("utf-8"),
        repr(float(config.temperature)).encode("ascii"),
    ):
        # length prefix keeps field boundaries unambiguous
        digest.update(len(part).to_bytes(8, "big"))
        digest.update(part)
    return digest.hexdigest()


class ResponseCache:
    """Content-addressed store: ``<root>/<key[:2]>/<key>.txt`` plus a ``.meta`` JSON sidecar.

    The sidecar is written last and carries a checksum of the text, so an
    entry without a sidecar is a miss and a checksum mismatch is corruption.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _paths(self, key: str) -> tuple[Path, Path]:
        folder = self.root / key[:2]
        return folder / f"{key}.txt", folder / f"{key}.meta"

    def _lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def contains(self, key: str) -> bool:
        return self._paths(key)[1].exists()

    def get(self, key: str) -> tuple[str, dict[str, Any]] | None:
        text_path, meta_path = self._paths(key)
        if not meta_path.exists():
            return None
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            text = text_path.read_bytes().decode("utf-8")
        except (OSError, ValueError) as exc:
            raise CacheError(f"unreadable cache entry {key}: {exc}") from exc
        if not isinstance(meta, dict) or meta.get("sha256") != hashlib.sha256(text.encode("utf-8")).hexdigest():
            raise CacheError(f"cache entry {key} fails its checksum")
        return text, meta

    def put(self, key: str, text: str, meta: dict[str, Any]) -> None:
        text_path, meta_path = self._paths(key)
        meta = {**meta, "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest()}
        with self._lock(key):
            text_path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(text_path, text)
            _atomic_write(meta_path, json.dumps(meta, sort_keys=True))


def _atomic_write(path: Path, content: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(content.encode("utf-8"))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class RateLimiter:
    """Sliding-window limiter: at most ``per_minute`` acquisitions in any 60 s window.

    Shared by every thread using one backend. ``clock`` and ``sleep`` are
    injectable so tests can run on virtual time.
    """

    window = 60.0

    def __init__(
        self,
        per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.per_minute = per_minute
        self.clock = clock
        self.sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            while True:
                now = self.clock()
                while self._stamps and self._stamps[0] <= now - self.window:
                    self._stamps.popleft()
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return now
                self.sleep(self._stamps[0] + self.window - now)


def _image_mime(payload: bytes) -> str:
    if payload.startswith(b"\x89PNG\r\n\x1a\n"):
        return "image/png"
    if payload.startswith(b"\xff\xd8"):
        return "image/jpeg"
    return "image/png"


def chat_payload(spec: PromptSpec, config: BackendConfig) -> dict[str, Any]:
    """Request body in the OpenAI chat-completions shape, image as a base64 data URL."""
    data_url = f"data:{_image_mime(spec.image_payload)};base64," + base64.b64encode(spec.image_payload).decode("ascii")
    body: dict[str, Any] = {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": spec.system_text},
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": spec.user_text},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            },
        ],
        "temperature": config.temperature,
    }
    if config.max_tokens is not None:
        body["max_tokens"] = config.max_tokens
    return body


def _message_text(body: Any) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"response body has no choices[0].message.content: {exc!r}") from None
    if content is None:
        return ""
    if isinstance(content, list):
        return "".join(part.get("text", "") for part in content if isinstance(part, dict))
    return str(content)


# ---------------------------------------------------------------------------
# Mock oracle
# ---------------------------------------------------------------------------

_MALFORMED_KINDS = ("drop_factor", "out_of_range", "refusal", "empty", "garbage")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _mock_rng(seed: int, key: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def mock_response(spec: PromptSpec, hint: GroundTruth, mock: MockOracleConfig, key: str) -> str:
    """Synthesize a response in the layout the prompt asks for.

    Factor scores are drawn around the class mean, rounded and clamped to
    1..5. The global label is TAMPERED when the mean factor score is at
    least 3. The stream is seeded from ``(seed, key)`` so each prompt gets
    the same answer regardless of evaluation order.
    """
    rng = _mock_rng(mock.seed, key)
    mean = mock.tampered_mean if hint is GroundTruth.TAMPERED else mock.authentic_mean
    noise = rng.normal(0.0, mock.noise_std, size=8) if mock.noise_std > 0 else np.zeros(8)
    scores = [min(5, max(1, _round_half_up(mean + n))) for n in noise]
    label = GroundTruth.TAMPERED if sum(scores) >= 24 else GroundTruth.AUTHENTIC

    malformed = mock.malformed_rate > 0 and rng.random() < mock.malformed_rate
    kind = _MALFORMED_KINDS[int(rng.integers(len(_MALFORMED_KINDS)))] if malformed else None
    if kind == "empty":
        return ""
    if kind == "refusal":
        return "I'm sorry, but I'm unable to help with analyzing this image."
    if kind == "garbage":
        return "The picture shows an outdoor scene with several elements."

    if spec.schema_id == "binary_v1":
        return render_verdict(BinaryVerdict(label, "FAKE" if label is GroundTruth.TAMPERED else "REAL"))

    if spec.schema_id == "holistic_v1":
        verdict = HolisticVerdict(
            tuple(
                FactorAssessment(f, s, f"Synthetic assessment of {f.value.replace('_', ' ')}.")
                for f, s in zip(canonical_factors(), scores)
            ),
            label,
            "Synthetic verdict from the mean factor score.",
        )
        text = render_verdict(verdict)
        lines = text.splitlines()
        if kind == "drop_factor":
            del lines[1 + int(rng.integers(8))]
        elif kind == "out_of_range":
            lines[1] = lines[1].replace(f"SCORE: {scores[0]}", "SCORE: 7")
        return "\n".join(lines)

    # region_v1
    if label is GroundTruth.TAMPERED:
        cue = bool(rng.random() < 0.5)
        hot = None if cue else int(rng.integers(1, 10))
        cells = () if cue else tuple(
            CellFinding(i, i == hot, "Local inconsistency." if i == hot else "No local anomaly.")
            for i in range(1, 10)
        )
        explanation = "Scene-level inconsistency." if cue else f"Local anomaly in cell {hot}."
    else:
        cue = False
        cells = tuple(CellFinding(i, False, "No local anomaly.") for i in range(1, 10))
        explanation = "No holistic or local anomalies found."
    text = render_verdict(RegionVerdict(cue, cells, label, explanation))
    if kind in ("drop_factor", "out_of_range"):
        text = text.replace("CELL: 1 |", "CELL: 12 |") if cells else text.replace("LABEL:", "VERDICT?")
    return text


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------


@dataclass
class ModelGateway:
    """One backend plus its cache, rate limiter and HTTP client.

    ``calls`` counts backend invocations (live requests or mock syntheses);
    cache hits do not count.
    """

    config: BackendConfig
    cache_dir: str | Path | None = None
    client: httpx.Client | None = None
    clock: Callable[[], float] = time.monotonic
    sleep: Callable[[float], None] = time.sleep
    backoff_base: float = 1.0
    calls: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        self.cache = ResponseCache(self.cache_dir) if self.cache_dir is not None else None
        self.limiter = RateLimiter(self.config.requests_per_minute, self.clock, self.sleep)
        self._calls_lock = threading.Lock()
        self._owns_client = False

    def _count_call(self) -> None:
        with self._calls_lock:
            self.calls += 1

    def close(self) -> None:
        if self._owns_client and self.client is not None:
            self.client.close()

    def complete(self, spec: PromptSpec, hint: GroundTruth | None = None) -> ModelResponse:
        if self.config.kind == "mock_oracle":
            if hint is None:
                raise ConfigError("mock_oracle backends need the sample's ground truth")
            start = time.perf_counter()
            self._count_call()
            text = mock_response(spec, GroundTruth(hint), self.config.mock, cache_key(spec, self.config))
            return ModelResponse(text, (time.perf_counter() - start) * 1000, self.config.model_name)

        key = cache_key(spec, self.config)
        if self.cache is not None:
            try:
                hit = self.cache.get(key)
            except CacheError as exc:
                log.warning("%s; calling the backend instead", exc)
                hit = None
            if hit is not None:
                text, meta = hit
                return ModelResponse(
                    text,
                    float(meta.get("latency_ms", 0.0)),
                    str(meta.get("backend_model", self.config.model_name)),
                    cached=True,
                    attempt_count=int(meta.get("attempt_count", 1)),
                )

        response = self._post(spec)
        if self.cache is not None:
            self.cache.put(
                key,
                response.text,
                {
                    "model_name": self.config.model_name,
                    "backend_model": response.backend_model,
                    "latency_ms": response.latency_ms,
                    "attempt_count": response.attempt_count,
                    "template_version": spec.template_version,
                },
            )
        return response

    def _api_key(self) -> str | None:
        var = self.config.api_key_env_var
        if not var:
            return None
        value = os.environ.get(var)
        if not value:
            raise ConfigError(f"environment variable {var} (API key for {self.config.model_name}) is not set")
        return value

    def _http(self) -> httpx.Client:
        if self.client is None:
            self.client = httpx.Client()
            self._owns_client = True
        return self.client

    def _post(self, spec: PromptSpec) -> ModelResponse:
        headers = {"Content-Type": "application/json"}
        api_key = self._api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = chat_payload(spec, self.config)
        client = self._http()
        last_status: int | None = None
        last_error = "no attempt made"
        attempts = self.config.max_retries + 1
        start = time.perf_counter()
        for attempt in range(1, attempts + 1):
            self.limiter.acquire()
            self._count_call()
            retry_after = None
            try:
                resp = client.post(self.config.endpoint_url, json=body, headers=headers, timeout=self.config.timeout)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_status, last_error = None, f"{type(exc).__name__}: {exc}"
            else:
                if resp.is_success:
                    try:
                        data = resp.json()
                    except ValueError:
                        raise TransportError("response body is not JSON", resp.status_code, attempt) from None
                    return ModelResponse(
                        _message_text(data),
                        (time.perf_counter() - start) * 1000,
                        str(data.get("model") or self.config.model_name) if isinstance(data, dict) else self.config.model_name,
                        cached=False,
                        attempt_count=attempt,
                    )
                last_status, last_error = resp.status_code, resp.text[:200]
                if resp.status_code not in RETRYABLE_STATUS:
                    raise TransportError(f"HTTP {resp.status_code}: {last_error}", resp.status_code, attempt)
                retry_after = _retry_after(resp)
            if attempt < attempts:
                delay = self.backoff_base * 2 ** (attempt - 1)
                if retry_after is not None:
                    delay = max(delay, retry_after)
                log.info("retrying %s in %.1fs (attempt %d: %s)", self.config.model_name, delay, attempt, last_error)
                self.sleep(delay)
        raise TransportError(
            f"gave up after {attempts} attempts: {last_error}", last_status, attempts
        )


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("retry-after")
    try:
        return min(float(value), 120.0) if value is not None else None
    except ValueError:
        return None


def complete(
    spec: PromptSpec,
    sample_ground_truth_hint: GroundTruth | None,
    config: BackendConfig,
    *,
    cache_dir: str | Path | None = None,
    client: httpx.Client | None = None,
) -> ModelResponse:
    """One-shot convenience wrapper around ``ModelGateway.complete``."""
    gateway = ModelGateway(config, cache_dir=cache_dir, client=client)
    try:
        return gateway.complete(spec, sample_ground_truth_hint)
    finally:
        gateway.close()
