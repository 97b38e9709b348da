"""Completion backends: live HTTP, record/replay store, deterministic mock.

Replay records are keyed by a SHA-256 over the model name, the normalized
prompt and the sampling parameters, so a transcript captured once can be
served forever without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol

from .errors import AuthError, LLMFailure, RateLimited, ReplayMiss, StoreSchemaError, Transport

log = logging.getLogger(__name__)

DEFAULT_MODEL = "text-davinci-003"
DEFAULT_API_KEY_ENV = "LLM_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/completions"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 500
    top_p: float = 1.0
    frequency_penalty: float = 0.2
    presence_penalty: float = 0.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


class CompletionBackend(Protocol):
    model: str
    deterministic: bool

    def complete(self, prompt: str, params: GenerationParams) -> str: ...


def normalize_prompt(prompt: str) -> str:
    lines = prompt.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    return "\n".join(line.rstrip() for line in lines).rstrip() + "\n"


def prompt_key(prompt: str, params: GenerationParams, model: str) -> str:
    payload = json.dumps(
        {"model": model, "prompt": normalize_prompt(prompt), "params": params.to_dict()},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def complete(prompt: str, params: GenerationParams, backend: CompletionBackend) -> str:
    if not prompt or not prompt.strip():
        raise ValueError("prompt must be non-empty")
    return backend.complete(prompt, params)


# -- replay store ----------------------------------------------------------

_REQUIRED = ("key", "prompt", "params", "completion")


class ReplayStore:
    """JSON-lines records of ``{key, model, prompt, params, completion}``.

    ``path`` may be a single ``.jsonl`` file or a directory whose ``*.jsonl``
    files are read in name order. Writes always go to ``write_path``.
    """

    def __init__(self, path: str | Path | None = None, write_path: str | Path | None = None):
        self.records: dict[str, dict] = {}
        self.write_path = Path(write_path) if write_path else None
        self._lock = threading.Lock()
        if path is not None:
            self.load(path)

    def load(self, path: str | Path) -> None:
        path = Path(path)
        if path.is_dir():
            files = sorted(path.glob("*.jsonl"))
        elif path.exists():
            files = [path]
        else:
            files = []
        for file in files:
            for lineno, line in enumerate(file.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                where = f"{file.name}:{lineno}"
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreSchemaError(where, f"invalid JSON ({exc.msg})") from None
                if not isinstance(rec, dict):
                    raise StoreSchemaError(where, "record is not an object")
                missing = [k for k in _REQUIRED if k not in rec]
                if missing:
                    raise StoreSchemaError(where, f"missing field(s) {', '.join(missing)}")
                if not isinstance(rec["completion"], str) or not isinstance(rec["params"], dict):
                    raise StoreSchemaError(where, "completion must be text and params an object")
                self.records[rec["key"]] = rec

    def get(self, key: str) -> str:
        try:
            return self.records[key]["completion"]
        except KeyError:
            raise ReplayMiss(key) from None

    def __contains__(self, key):
        return key in self.records

    def __len__(self):
        return len(self.records)

    def put(self, prompt: str, params: GenerationParams, model: str, completion: str, name: str | None = None) -> str:
        key = prompt_key(prompt, params, model)
        rec = {"key": key, "model": model, "prompt": prompt, "params": params.to_dict(), "completion": completion}
        if name:
            rec["name"] = name
        with self._lock:
            if key in self.records:
                warnings.warn(f"overwriting replay record {key[:12]}", stacklevel=2)
            self.records[key] = rec
            if self.write_path is not None:
                self._flush()
        return key

    def _flush(self) -> None:
        self.write_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.write_path.with_suffix(self.write_path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for rec in self.records.values():
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        os.replace(tmp, self.write_path)


class ReplayBackend:
    deterministic = True

    def __init__(self, store: ReplayStore | str | Path, model: str = DEFAULT_MODEL):
        self.store = store if isinstance(store, ReplayStore) else ReplayStore(store)
        self.model = model
        self.kind = "replay"

    def complete(self, prompt: str, params: GenerationParams) -> str:
        return self.store.get(prompt_key(prompt, params, self.model))


class MockBackend:
    """Deterministic stand-in that answers any prompt with a plausible task.

    Single-phase targets get two steps built from the target's core phrase;
    everything else gets a two-phase task. ``responses`` maps exact prompts
    (normalized) to canned completions and takes precedence.
    """

    deterministic = True

    def __init__(self, responses: dict[str, str] | None = None, model: str = "mock"):
        self.responses = {normalize_prompt(k): v for k, v in (responses or {}).items()}
        self.model = model
        self.kind = "mock"
        self.prompts: list[str] = []

    def complete(self, prompt: str, params: GenerationParams) -> str:
        self.prompts.append(prompt)
        canned = self.responses.get(normalize_prompt(prompt))
        if canned is not None:
            return canned
        target = _target_line(prompt)
        obj = _object_of(target)
        if re.search(r"\bin 1 phase\b", target):
            return f"Step 1. Pick the {obj};\nStep 2. Place the {obj}."
        return (
            f"Phase 1.\nStep 1. Move to the {obj};\nStep 2. Pick the {obj}.\n"
            f"Phase 2.\nStep 1. Place the {obj};\nStep 2. Push the {obj}."
        )


def _target_line(prompt: str) -> str:
    m = re.search(r"Target Task:\s*(.*)", prompt)
    if m:
        return m.group(1).strip()
    m = re.search(r"Generate an? (.*) task in behavior tree", prompt)
    return m.group(1).strip() if m else prompt.strip().splitlines()[-1]


def _object_of(target: str) -> str:
    core = re.split(r",| in \d+ phases?\b| with ", target)[0].strip()
    words = core.split()[1:]
    while words and words[0].lower() in ("for", "to", "on", "up", "off", "the", "a", "an"):
        words = words[1:]
    return " ".join(words) or "object"


class ChainBackend:
    """Try backends in order, moving on only after a ``ReplayMiss``."""

    def __init__(self, *backends):
        self.backends = backends
        self.model = backends[0].model
        self.deterministic = all(getattr(b, "deterministic", False) for b in backends)
        self.kind = "+".join(getattr(b, "kind", type(b).__name__) for b in backends)

    def complete(self, prompt: str, params: GenerationParams) -> str:
        for backend in self.backends[:-1]:
            try:
                return backend.complete(prompt, params)
            except ReplayMiss:
                continue
        return self.backends[-1].complete(prompt, params)


class HttpBackend:
    """Completions-style HTTP endpoint (OpenAI ``/v1/completions`` layout)."""

    deterministic = False

    def __init__(
        self,
        model: str = DEFAULT_MODEL,
        endpoint: str = DEFAULT_ENDPOINT,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        attempts: int = 3,
        backoff: float = 1.0,
        max_backoff: float = 8.0,
        timeout: float = 60.0,
        session=None,
    ):
        self.model = model
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.attempts = attempts
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.timeout = timeout
        self.kind = "http"
        self._session = session
        self._sleep = time.sleep

    @property
    def session(self):
        if self._session is None:
            import requests

            self._session = requests.Session()
        return self._session

    def request_body(self, prompt: str, params: GenerationParams) -> dict:
        return {"model": self.model, "prompt": prompt, **params.to_dict()}

    def complete(self, prompt: str, params: GenerationParams) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        body = self.request_body(prompt, params)
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        last: LLMFailure | None = None
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(min(self.max_backoff, self.backoff * 2 ** (attempt - 1)))
            try:
                resp = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            except Exception as exc:  # requests raises many connection error types
                last = Transport(f"{type(exc).__name__}: {exc}")
                log.warning("transport failure (attempt %d): %s", attempt + 1, exc)
                continue
            status = resp.status_code
            if status in (401, 403):
                raise AuthError(f"endpoint rejected credential (HTTP {status})")
            if status == 429:
                last = RateLimited("HTTP 429 from endpoint")
                continue
            if status >= 500:
                last = Transport(f"HTTP {status} from endpoint")
                continue
            if status >= 400:
                raise Transport(f"HTTP {status}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["text"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise Transport(f"malformed response body: {exc}") from None
        assert last is not None
        raise last


class RecordingBackend:
    """Forward to a live backend and persist every completion in ``store``."""

    def __init__(self, inner: CompletionBackend, store: ReplayStore):
        self.inner = inner
        self.store = store
        self.model = inner.model
        self.deterministic = False
        self.kind = "record"

    def complete(self, prompt: str, params: GenerationParams) -> str:
        return record(prompt, params, self.inner, self.store)


def record(prompt: str, params: GenerationParams, backend: CompletionBackend, store: ReplayStore) -> str:
    text = complete(prompt, params, backend)
    store.put(prompt, params, backend.model, text)
    return text
