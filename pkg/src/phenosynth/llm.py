"""Chat-completions client, scripted stand-in, and program extraction."""
from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence

import requests

from .exceptions import ConfigurationError, PhenosynthError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


# -- errors ------------------------------------------------------------------

class LlmError(PhenosynthError):
    retryable = False


class TransportError(LlmError):
    retryable = True


class LlmTimeoutError(LlmError):
    retryable = True


class StatusError(LlmError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"endpoint returned HTTP {status}: {body[:200]}")
        self.status = status
        self.retryable = status == 429 or status >= 500


class MalformedResponseError(LlmError):
    retryable = True


class TruncatedResponseError(LlmError):
    """The model stopped at the token limit; the text is a fragment."""

    def __init__(self, message: str, partial: str = ""):
        super().__init__(message)
        self.partial = partial


class ScriptExhaustedError(LlmError):
    pass


class CredentialError(ConfigurationError):
    pass


class ExtractionError(PhenosynthError, ValueError):
    pass


# -- messages ----------------------------------------------------------------

@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not isinstance(self.content, str) or not self.content:
            raise ValueError("message content must be a nonempty string")

    def to_dict(self):
        return {"role": self.role, "content": self.content}


class ChatTranscript:
    """System message first, then strictly alternating user/assistant turns."""

    def __init__(self, messages: Iterable[ChatMessage] = ()):
        self._messages: List[ChatMessage] = []
        for m in messages:
            self.append(m)

    def _expected_role(self) -> str:
        if not self._messages:
            return "system"
        return "assistant" if self._messages[-1].role == "user" else "user"

    def append(self, message: ChatMessage) -> "ChatTranscript":
        want = self._expected_role()
        if message.role != want:
            raise ValueError(f"expected a {want} message next, got {message.role}")
        self._messages.append(message)
        return self

    def add(self, role: str, content: str) -> "ChatTranscript":
        return self.append(ChatMessage(role, content))

    @property
    def messages(self) -> tuple:
        return tuple(self._messages)

    def __len__(self):
        return len(self._messages)

    def __iter__(self):
        return iter(self._messages)

    def __eq__(self, other):
        return isinstance(other, ChatTranscript) and self._messages == other._messages

    def count(self, role: str) -> int:
        return sum(m.role == role for m in self._messages)

    def copy(self) -> "ChatTranscript":
        return ChatTranscript(self._messages)

    def to_wire(self) -> List[dict]:
        return [m.to_dict() for m in self._messages]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(m.to_dict(), ensure_ascii=False) + "\n" for m in self._messages)

    @classmethod
    def from_jsonl(cls, text: str) -> "ChatTranscript":
        return cls(ChatMessage(**json.loads(line)) for line in text.splitlines() if line.strip())


# -- HTTP client -------------------------------------------------------------

@dataclass
class LlmConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    temperature: float = 0.5
    top_p: float = 1.0
    max_tokens: int = 2048
    timeout: float = 120.0
    retries: int = 3
    backoff: float = 2.0
    api_key_env: str = "OPENAI_API_KEY"
    audit_log: Optional[str] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigurationError("top_p must be in (0, 1]")
        if self.max_tokens < 1 or self.timeout <= 0 or self.retries < 0 or self.backoff < 0:
            raise ConfigurationError("max_tokens, timeout, retries and backoff must be positive")

    def to_dict(self):
        return asdict(self)


class ChatClient:
    """Stateless chat-completions client with retry and a JSON-lines audit log.

    The API key is read from the environment variable named in the config
    on every call and is never logged.
    """

    def __init__(self, cfg: LlmConfig = None, session=None, sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg or LlmConfig()
        self.session = session or requests.Session()
        self.sleep = sleep
        self.last_attempts = 0

    def request_body(self, transcript: ChatTranscript) -> dict:
        return {
            "model": self.cfg.model,
            "messages": transcript.to_wire(),
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
            "max_tokens": self.cfg.max_tokens,
        }

    def _audit(self, record: dict):
        if not self.cfg.audit_log:
            return
        with open(self.cfg.audit_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

    def _once(self, body: dict, key: str) -> ChatMessage:
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        try:
            resp = self.session.post(self.cfg.endpoint, json=body, headers=headers, timeout=self.cfg.timeout)
        except requests.Timeout as exc:
            raise LlmTimeoutError(f"request timed out after {self.cfg.timeout}s") from exc
        except requests.RequestException as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        text = resp.text
        self._audit({"request": body, "status": resp.status_code, "response": text})
        if not 200 <= resp.status_code < 300:
            raise StatusError(resp.status_code, text)
        try:
            choice = resp.json()["choices"][0]
            content = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"malformed response body: {text[:200]}") from exc
        if choice.get("finish_reason") == "length":
            raise TruncatedResponseError("response truncated at max_tokens", content or "")
        if not isinstance(content, str) or not content:
            raise MalformedResponseError("response has no message content")
        return ChatMessage("assistant", content)

    def complete(self, transcript: ChatTranscript) -> ChatMessage:
        key = os.environ.get(self.cfg.api_key_env)
        if not key:
            raise CredentialError(f"environment variable {self.cfg.api_key_env} is not set")
        body = self.request_body(transcript)
        self.last_attempts = 0
        for attempt in range(self.cfg.retries + 1):
            self.last_attempts = attempt + 1
            try:
                return self._once(body, key)
            except LlmError as exc:
                if not exc.retryable or attempt == self.cfg.retries:
                    raise
                delay = self.cfg.backoff * (2 ** attempt)
                log.warning("attempt %d failed (%s); retrying in %.1fs", attempt + 1, exc, delay)
                self.sleep(delay)
        raise AssertionError("unreachable")  # pragma: no cover


# -- scripted stand-in ---------------------------------------------------------

class ScriptedClient:
    """Replays a fixed list of responses, one per call, without any network.

    An entry that is an :class:`LlmError` instance is raised instead of
    returned, which lets tests and replays inject failures.
    """

    def __init__(self, responses: Sequence[str], exhaustion: str = "error"):
        if exhaustion not in ("error", "repeat-last"):
            raise ConfigurationError("exhaustion must be 'error' or 'repeat-last'")
        if not all(isinstance(r, (str, LlmError)) for r in responses):
            raise ConfigurationError("scripted responses must be strings (or LlmError instances to raise)")
        self.responses = list(responses)
        self.exhaustion = exhaustion
        self.calls = 0
        self.seen: List[ChatTranscript] = []

    @classmethod
    def from_file(cls, path, exhaustion: str = "error") -> "ScriptedClient":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read scripted responses {path}: {exc}") from exc
        if not isinstance(data, list):
            raise ConfigurationError(f"{path}: expected a JSON array of strings")
        return cls(data, exhaustion)

    @classmethod
    def from_transcript(cls, transcript: ChatTranscript) -> "ScriptedClient":
        return cls([m.content for m in transcript if m.role == "assistant"])

    def complete(self, transcript: ChatTranscript) -> ChatMessage:
        self.seen.append(transcript.copy())
        i = self.calls
        self.calls += 1
        if i >= len(self.responses):
            if self.exhaustion == "error" or not self.responses:
                raise ScriptExhaustedError(f"scripted responses exhausted after {len(self.responses)} calls")
            i = len(self.responses) - 1
        text = self.responses[i]
        if isinstance(text, LlmError):
            raise text
        if not text:
            raise MalformedResponseError("scripted response is empty")
        return ChatMessage("assistant", text)


# -- extraction ----------------------------------------------------------------

_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.S)
_KEYWORD = re.compile(r"\bphenotype\b")


def extract_program(response: str) -> str:
    """Program text from a model response: first fenced block, else from the
    first ``phenotype`` keyword, else the trimmed response."""
    if response is None or not response.strip():
        raise ExtractionError("empty response: no program found")
    m = _FENCE.search(response)
    if m:
        body = m.group(1).strip()
        if not body:
            raise ExtractionError("fenced code block is empty")
        return body
    m = _KEYWORD.search(response)
    if m:
        return response[m.start():].strip()
    return response.strip()
