"""Chat-completion client: bounded concurrency, retry with full-jitter
exponential backoff, and an on-disk response cache keyed by the exact request
content so large corpus runs are resumable and idempotent.

Wire contract: POST {base_url}/chat/completions with
{"model", "temperature", "max_tokens", "messages": [{"role", "content"}, ...]};
the first choice's message content is the completion. Bearer-token auth, with
the SGSYNTH_LLM_TOKEN environment variable overriding any configured token.
"""

import hashlib
import json
import logging
import math
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path

import httpx

from sgsynth.core import BBox, PipelineError
from sgsynth.geometry import iou

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "SGSYNTH_LLM_TOKEN"


class LlmUnavailable(PipelineError):
    """Retries exhausted (transport failures, 429s or 5xx responses)."""

    def __init__(self, message, attempt_count=1):
        super().__init__(message)
        self.attempt_count = attempt_count


class LlmTimeout(LlmUnavailable):
    """Every attempt timed out."""


class LlmRejected(PipelineError):
    """Non-retryable 4xx response (anything but 429)."""

    def __init__(self, message, attempt_count=1):
        super().__init__(message)
        self.attempt_count = attempt_count


@dataclass(frozen=True)
class LlmEndpoint:
    base_url: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 2048
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_concurrency: int = 4
    auth_token: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be a finite non-negative number, got {self.temperature!r}")
        if not 0 <= self.max_retries <= 10:
            raise ValueError(f"max_retries must be in [0, 10], got {self.max_retries}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")
        if self.backoff_base < 0:
            raise ValueError("backoff_base must be non-negative")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    request_id: str
    attempt_count: int
    usage: dict | None = None
    cached: bool = False
    created_at: str | None = None


def utc_now_iso():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def cache_key(template_checksum, rendered_input, model_name, temperature):
    blob = "\x00".join([template_checksum, rendered_input, model_name, repr(float(temperature))])
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per completed request. Writes go through a temp file and
    an atomic rename, so concurrent writers of one key settle cleanly
    (values are deterministic per key, last writer wins harmlessly)."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key):
        return self.directory / f"{key}.json"

    def get(self, key):
        path = self._path(key)
        try:
            return json.loads(path.read_text("utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            logger.warning("ignoring unreadable cache entry %s", path)
            return None

    def put(self, key, entry):
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            json.dump(entry, handle, ensure_ascii=False)
        os.replace(tmp, self._path(key))
        return entry


def _response_from_cache(entry):
    return LlmResponse(
        text=entry["text"],
        request_id=entry.get("request_id", "cached"),
        attempt_count=1,
        usage=entry.get("usage"),
        cached=True,
        created_at=entry.get("created_at"),
    )


def _cache_entry(response, model_name):
    return {
        "text": response.text,
        "request_id": response.request_id,
        "usage": response.usage,
        "created_at": response.created_at,
        "model_name": model_name,
    }


class LlmClient:
    """Thread-safe client for the chat-completions wire protocol.

    Retries transport errors, HTTP 429 and 5xx, sleeping a duration drawn
    uniformly from [0, backoff_base * 2**attempt] between attempts; any other
    4xx raises LlmRejected without a retry. At most max_concurrency requests
    are in flight at once.
    """

    def __init__(self, endpoint, cache=None, transport=None, sleep=time.sleep, rng=None):
        self.endpoint = endpoint
        self.model_name = endpoint.model_name
        self.cache = cache
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._gate = threading.BoundedSemaphore(endpoint.max_concurrency)
        self._client = httpx.Client(transport=transport, timeout=endpoint.timeout)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, bundle):
        key = cache_key(
            bundle.template_checksum, bundle.rendered_input, self.endpoint.model_name, self.endpoint.temperature
        )
        if self.cache is not None:
            entry = self.cache.get(key)
            if entry is not None:
                return _response_from_cache(entry)
        response = self._complete_uncached(bundle)
        if self.cache is not None:
            self.cache.put(key, _cache_entry(response, self.endpoint.model_name))
        return response

    def _complete_uncached(self, bundle):
        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.endpoint.model_name,
            "temperature": self.endpoint.temperature,
            "max_tokens": self.endpoint.max_output_tokens,
            "messages": [{"role": m.role, "content": m.content} for m in bundle.messages],
        }
        headers = {}
        token = os.environ.get(TOKEN_ENV_VAR) or self.endpoint.auth_token
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error = None
        only_timeouts = True
        for attempt in range(self.endpoint.max_retries + 1):
            try:
                with self._gate:
                    response = self._client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as error:
                last_error = error
            except httpx.HTTPError as error:
                last_error = error
                only_timeouts = False
            else:
                if response.status_code == 200:
                    return self._parse_success(response, attempt + 1)
                if response.status_code == 429 or response.status_code >= 500:
                    only_timeouts = False
                    last_error = RuntimeError(f"HTTP {response.status_code}")
                else:
                    raise LlmRejected(
                        f"HTTP {response.status_code}: {response.text[:200]}", attempt_count=attempt + 1
                    )
            if attempt < self.endpoint.max_retries:
                self._sleep(self._rng.uniform(0.0, self.endpoint.backoff_base * (2**attempt)))
        attempts = self.endpoint.max_retries + 1
        error_cls = LlmTimeout if only_timeouts else LlmUnavailable
        raise error_cls(f"no completion after {attempts} attempts", attempt_count=attempts) from last_error

    def _parse_success(self, response, attempt_count):
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as error:
            raise LlmUnavailable(f"malformed completion payload: {error}", attempt_count) from error
        if not isinstance(text, str):
            raise LlmUnavailable("completion content is not text", attempt_count)
        return LlmResponse(
            text=text,
            request_id=str(data.get("id", "unknown")),
            attempt_count=attempt_count,
            usage=data.get("usage"),
            cached=False,
            created_at=utc_now_iso(),
        )


def complete(bundle, endpoint, cache=None, transport=None, sleep=time.sleep):
    """One-shot convenience wrapper around LlmClient."""
    with LlmClient(endpoint, cache=cache, transport=transport, sleep=sleep) as client:
        return client.complete(bundle)


class MockLlmClient:
    """Offline stand-in with the same surface as LlmClient.

    The responder is any callable mapping a PromptBundle to completion text;
    responses flow through the same cache as real ones.
    """

    def __init__(self, responder, model_name="mock", temperature=0.0, cache=None):
        self.responder = responder
        self.model_name = model_name
        self.temperature = temperature
        self.cache = cache

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, bundle):
        key = cache_key(bundle.template_checksum, bundle.rendered_input, self.model_name, self.temperature)
        if self.cache is not None:
            entry = self.cache.get(key)
            if entry is not None:
                return _response_from_cache(entry)
        response = LlmResponse(
            text=self.responder(bundle),
            request_id="mock",
            attempt_count=1,
            usage=None,
            cached=False,
            created_at=utc_now_iso(),
        )
        if self.cache is not None:
            self.cache.put(key, _cache_entry(response, self.model_name))
        return response


def static_responder(text):
    """Responder returning the same completion for every bundle."""

    def respond(bundle):
        return text

    return respond


_ENTRY_SPLIT = ":["


def _parse_rendered_entry(entry):
    key, _, coords = entry.partition(_ENTRY_SPLIT)
    values = [float(part) for part in coords.rstrip("]").split(",")]
    return key, BBox(*values)


def overlap_responder(bundle):
    """Derive a plausible completion from the prompt's own rendered input:
    every object pair with IoU > 0 becomes a 'near' triplet. Keeps offline
    multi-image runs schema-valid with resolvable keys."""
    payload = json.loads(bundle.rendered_input)
    records = payload if isinstance(payload, list) else [payload]
    out = []
    for record in records:
        entries = [_parse_rendered_entry(entry) for entry in record["objects"]]
        relationships = []
        for (key_a, box_a), (key_b, box_b) in combinations(entries, 2):
            if iou(box_a, box_b) > 0:
                relationships.append({"source": key_a, "target": key_b, "relation": "near"})
        out.append({"image_id": record["image_id"], "relationships": relationships})
    return json.dumps(out if len(out) > 1 else out[0], ensure_ascii=False)
