"""Chat-completion and embedding clients with retry, backoff, and offline stubs.

The HTTP clients speak the common OpenAI-compatible wire shapes:

    chat:  POST {model, messages:[{role,content}], temperature, max_tokens}
           -> {choices:[{message:{content}}]}
    embed: POST {model, input:[texts]} -> {data:[{embedding:[floats]}]}

Stub clients serve canned responses from a directory so the whole pipeline
runs offline. Chat stubs are JSONL files named after the task
(``annotate_reasoning.jsonl``, ``annotate_domain.jsonl``, ``judge.jsonl``)
with ``{"key": ..., "content": ...}`` entries keyed by example id. The
embedding stub is generative: ``embeddings.json`` holds ``{dim, seed,
centers, spread}`` and vectors are a pure function of the input text.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import BadConfig, EmbeddingUnavailable, JudgeUnavailable

logger = logging.getLogger(__name__)

API_KEY_ENV = "COTSIFT_API_KEY"
_BACKOFF_BASE = 0.5
_BACKOFF_JITTER = 0.25


@dataclass
class JudgeConfig:
    """Connection and decoding settings for a judge/annotator endpoint."""

    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    parallelism: int = 4
    timeout: float = 60.0
    max_tokens: int = 2048

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise BadConfig("parallelism must be >= 1")
        if self.max_retries < 0:
            raise BadConfig("max_retries must be >= 0")
        if self.temperature < 0:
            raise BadConfig("temperature must be >= 0")


class ChatClient(Protocol):
    def complete(self, messages: list[dict], *, task: str = "chat", key: str | None = None) -> str:
        """Return the assistant message content for one chat request.

        `task` and `key` are routing hints for offline stubs; network clients
        ignore them.
        """
        ...


class EmbeddingClient(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        """Return one embedding vector per input text, order-aligned."""
        ...


def _sleep_with_backoff(attempt: int, rng: random.Random) -> None:
    delay = _BACKOFF_BASE * (2**attempt) * (1.0 + _BACKOFF_JITTER * rng.random())
    time.sleep(delay)


def _auth_headers() -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    return headers


class HttpChatClient:
    """OpenAI-compatible chat-completions client with exponential backoff."""

    def __init__(self, config: JudgeConfig):
        if not config.endpoint_url:
            raise BadConfig("chat endpoint_url is required")
        self.config = config
        self._session = requests.Session()
        self._rng = random.Random()

    def complete(self, messages: list[dict], *, task: str = "chat", key: str | None = None) -> str:
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._session.post(
                    self.config.endpoint_url,
                    json=payload,
                    headers=_auth_headers(),
                    timeout=self.config.timeout,
                )
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < self.config.max_retries:
                    logger.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                    _sleep_with_backoff(attempt, self._rng)
        raise JudgeUnavailable(f"chat endpoint failed after {self.config.max_retries + 1} attempts: {last_error}")


class HttpEmbeddingClient:
    """OpenAI-compatible embeddings client with exponential backoff."""

    def __init__(self, config: JudgeConfig):
        if not config.endpoint_url:
            raise BadConfig("embedding endpoint_url is required")
        self.config = config
        self._session = requests.Session()
        self._rng = random.Random()

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        payload = {"model": self.config.model_name, "input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._session.post(
                    self.config.endpoint_url,
                    json=payload,
                    headers=_auth_headers(),
                    timeout=self.config.timeout,
                )
                response.raise_for_status()
                body = response.json()
                vectors = [row["embedding"] for row in body["data"]]
                if len(vectors) != len(texts):
                    raise ValueError(f"expected {len(texts)} embeddings, got {len(vectors)}")
                return vectors
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < self.config.max_retries:
                    logger.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                    _sleep_with_backoff(attempt, self._rng)
        raise EmbeddingUnavailable(
            f"embedding endpoint failed after {self.config.max_retries + 1} attempts: {last_error}"
        )


class StubChatClient:
    """Chat client that replays canned responses from a stub directory.

    Each task maps to ``<stub_dir>/<task>.jsonl``. A lookup miss raises
    JudgeUnavailable, which exercises the same failure paths as a dead
    endpoint. An entry with ``"fail": true`` simulates a permanent failure.
    """

    def __init__(self, stub_dir: str | Path):
        self.stub_dir = Path(stub_dir)
        if not self.stub_dir.is_dir():
            raise BadConfig(f"stub directory not found: {self.stub_dir}")
        self._tasks: dict[str, dict[str, dict]] = {}

    def _load_task(self, task: str) -> dict[str, dict]:
        if task not in self._tasks:
            entries: dict[str, dict] = {}
            path = self.stub_dir / f"{task}.jsonl"
            if path.exists():
                with open(path, encoding="utf-8") as handle:
                    for line in handle:
                        if line.strip():
                            entry = json.loads(line)
                            entries[entry["key"]] = entry
            self._tasks[task] = entries
        return self._tasks[task]

    def complete(self, messages: list[dict], *, task: str = "chat", key: str | None = None) -> str:
        entries = self._load_task(task)
        entry = entries.get(key or "")
        if entry is None:
            raise JudgeUnavailable(f"no stub response for task={task!r} key={key!r}")
        if entry.get("fail"):
            raise JudgeUnavailable(f"stubbed failure for task={task!r} key={key!r}")
        return entry["content"]


class StubEmbeddingClient:
    """Deterministic offline embedder: vectors are a pure function of text.

    Texts hash onto one of `centers` anchor directions plus hash-seeded
    jitter, so stub corpora have real cluster structure. Identical texts
    always map to identical vectors.
    """

    def __init__(self, dim: int = 4096, seed: int = 0, centers: int = 0, spread: float = 0.1):
        if dim < 1:
            raise BadConfig("embedding dim must be >= 1")
        self.dim = dim
        self.seed = seed
        self.spread = spread
        if centers > 0:
            center_rng = np.random.default_rng([seed, 7])
            anchors = center_rng.standard_normal((centers, dim))
            self._anchors = anchors / np.linalg.norm(anchors, axis=1, keepdims=True)
        else:
            self._anchors = None

    @classmethod
    def from_stub_dir(cls, stub_dir: str | Path) -> "StubEmbeddingClient":
        path = Path(stub_dir) / "embeddings.json"
        if not path.exists():
            return cls()
        spec = json.loads(path.read_text("utf-8"))
        return cls(
            dim=int(spec.get("dim", 4096)),
            seed=int(spec.get("seed", 0)),
            centers=int(spec.get("centers", 0)),
            spread=float(spec.get("spread", 0.1)),
        )

    def _vector(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        words = np.frombuffer(digest, dtype=np.uint64)
        rng = np.random.default_rng(words)
        noise = rng.standard_normal(self.dim)
        if self._anchors is not None:
            anchor = self._anchors[int(words[0]) % len(self._anchors)]
            vec = anchor + self.spread * noise
        else:
            vec = noise
        return vec / np.linalg.norm(vec)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._vector(text).tolist() for text in texts]
