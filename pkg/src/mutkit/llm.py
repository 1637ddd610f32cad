"""Chat-completion backends: a real HTTP client and a scripted offline mock.

Both backends expose complete(prompt) returning a Completion.  The HTTP
client speaks the usual chat-completions shape (messages array, single
user turn) and retries transient failures with exponential backoff; the
mock replays responses keyed on the sha256 digest of the prompt and can
record unmatched prompts so a script can be built offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "MUTKIT_API_KEY"

RETRYABLE_STATUS = frozenset([429, 500, 502, 503, 504])


class BackendError(Exception):
    """Base error for completion backends."""


class AuthError(BackendError):
    """Authentication failure; never retried."""


class RetryExhaustedError(BackendError):
    """All retries failed; carries the last status seen."""

    def __init__(self, message: str, last_status: int | None):
        super().__init__(message)
        self.last_status = last_status


@dataclass
class BackendConfig:
    """Connection and batching settings for a completion backend."""

    endpoint: str = ""
    model: str = ""
    temperature: float | None = None
    max_tokens: int | None = None
    timeout: float = 60.0
    max_retries: int = 3
    concurrency: int = 4
    api_key_env: str = DEFAULT_API_KEY_ENV
    backoff_base: float = 0.5

    def __post_init__(self):
        if self.concurrency < 1:
            raise BackendError(f"concurrency must be >= 1, got {self.concurrency}")
        if self.max_retries < 0:
            raise BackendError(f"max_retries must be >= 0, got {self.max_retries}")


@dataclass
class Completion:
    """One model reply plus its token usage and retry count."""

    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    retries: int = 0


def prompt_digest(prompt: str) -> str:
    """Stable sha256 hex digest used to key scripted mock replies."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class HttpChatBackend:
    """Chat-completions HTTP client with bounded retries.

    ``transport`` is injectable for tests: a callable
    (url, payload, headers, timeout) -> (status_code, body_text).
    """

    def __init__(self, config: BackendConfig, transport=None, sleep=time.sleep):
        if not config.endpoint:
            raise BackendError("endpoint is required for the HTTP backend")
        self.config = config
        self._transport = transport or self._http_post
        self._sleep = sleep

    @staticmethod
    def _http_post(url: str, payload: dict, headers: dict, timeout: float):
        import requests

        reply = requests.post(url, json=payload, headers=headers, timeout=timeout)
        return reply.status_code, reply.text

    def _payload(self, prompt: str) -> dict:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if self.config.temperature is not None:
            payload["temperature"] = self.config.temperature
        if self.config.max_tokens is not None:
            payload["max_tokens"] = self.config.max_tokens
        return payload

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str) -> Completion:
        """Send one prompt; retry 429/5xx and connection errors with backoff."""
        config = self.config
        last_status: int | None = None
        for attempt in range(config.max_retries + 1):
            if attempt:
                self._sleep(config.backoff_base * (2 ** (attempt - 1)))
            try:
                status, body = self._transport(
                    config.endpoint, self._payload(prompt), self._headers(),
                    config.timeout)
            except Exception as exc:
                last_status = None
                logger.warning("request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if status in (401, 403):
                raise AuthError(f"authentication failed (HTTP {status})")
            if status in RETRYABLE_STATUS:
                last_status = status
                logger.warning("retryable HTTP %d (attempt %d)", status, attempt + 1)
                continue
            if status != 200:
                raise BackendError(f"unexpected HTTP {status}: {body[:200]}")
            return self._parse_body(body, retries=attempt)
        raise RetryExhaustedError(
            f"gave up after {config.max_retries} retries "
            f"(last status: {last_status})", last_status)

    @staticmethod
    def _parse_body(body: str, retries: int) -> Completion:
        try:
            parsed = json.loads(body)
            text = parsed["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed server reply: {exc}") from exc
        usage = parsed.get("usage") or {}
        return Completion(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            retries=retries,
        )


SCRIPT_FIELDS = ("prompt_digest", "response_text", "prompt_tokens", "completion_tokens")


class MockBackend:
    """Deterministic scripted backend keyed on prompt digests.

    The script is a line-delimited JSON file with records carrying
    prompt_digest, response_text, prompt_tokens and completion_tokens.
    When ``record_path`` is set, prompts with no scripted reply are
    appended there (digest plus full prompt) before the error is raised,
    which is how scripts are authored offline.
    """

    def __init__(self, script: str | dict | None = None, record_path: str | None = None):
        self._replies: dict[str, Completion] = {}
        self.record_path = record_path
        self._lock = threading.Lock()
        if isinstance(script, dict):
            for digest, reply in script.items():
                self._replies[digest] = reply if isinstance(reply, Completion) \
                    else Completion(text=str(reply))
        elif script is not None:
            self._load_script(script)

    def _load_script(self, path: str) -> None:
        try:
            with open(path, encoding="utf-8") as handle:
                lines = handle.readlines()
        except OSError as exc:
            raise BackendError(f"cannot read mock script {path}: {exc}") from exc
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BackendError(
                    f"mock script line {line_no} is not JSON: {exc.msg}") from exc
            missing = [f for f in SCRIPT_FIELDS if f not in record]
            if missing:
                raise BackendError(
                    f"mock script line {line_no} missing fields: {missing}")
            self._replies[record["prompt_digest"]] = Completion(
                text=record["response_text"],
                prompt_tokens=int(record["prompt_tokens"]),
                completion_tokens=int(record["completion_tokens"]),
            )

    def complete(self, prompt: str) -> Completion:
        digest = prompt_digest(prompt)
        reply = self._replies.get(digest)
        if reply is not None:
            return Completion(text=reply.text, prompt_tokens=reply.prompt_tokens,
                              completion_tokens=reply.completion_tokens)
        if self.record_path:
            with self._lock, open(self.record_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(
                    {"prompt_digest": digest, "prompt": prompt}) + "\n")
        raise BackendError(f"no scripted reply for digest {digest[:12]}...")


def write_mock_script(records: list[dict], path: str) -> None:
    """Write mock script records (validates the required fields)."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            missing = [f for f in SCRIPT_FIELDS if f not in record]
            if missing:
                raise BackendError(f"script record missing fields: {missing}")
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def complete_batch(backend, prompts: list[tuple[str, str]],
                   concurrency: int = 4) -> list[tuple[str, Completion | BackendError]]:
    """Run many prompts with a bounded in-flight window.

    Args:
        backend: any object with complete(prompt) -> Completion.
        prompts: (prompt_id, prompt) tuples.
        concurrency: maximum simultaneous requests (1 = strictly sequential).

    Returns:
        (prompt_id, Completion-or-BackendError) in input order; failures
        are isolated per item.
    """
    if not prompts:
        raise BackendError("prompts must be non-empty")
    if concurrency < 1:
        raise BackendError(f"concurrency must be >= 1, got {concurrency}")

    def run_one(prompt: str):
        try:
            return backend.complete(prompt)
        except BackendError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        results = list(pool.map(run_one, [p for _, p in prompts]))
    return [(prompt_id, result) for (prompt_id, _), result in zip(prompts, results)]


def aggregate_usage(results) -> dict:
    """Total token usage over batch results (errors contribute zero)."""
    prompt_tokens = 0
    completion_tokens = 0
    for _, result in results:
        if isinstance(result, Completion):
            prompt_tokens += result.prompt_tokens
            completion_tokens += result.completion_tokens
    return {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens}
