"""Gateway for chat-completion and vision-description calls.

Two interchangeable backends: an HTTP client for OpenAI-compatible endpoints
and a scripted backend that answers from an ordered rule table, which makes
the whole agent pipeline runnable offline and byte-for-byte reproducible.
"""

from __future__ import annotations

import base64
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from ._http import auth_headers, post_json
from .errors import ExtractionError, IntegrityError, ValidationError


class MessageRole(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: MessageRole
    content: str


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_output_tokens: int = 1024
    model_id: str = ""

    def last_user_content(self) -> str:
        for msg in reversed(self.messages):
            if msg.role == MessageRole.USER:
                return msg.content
        return ""


@dataclass(frozen=True)
class VisionRequest:
    prompt: str
    image_bytes: bytes
    media_type: str = "image/png"
    model_id: str = ""


def chat_request(system_prompt: str, user_content: str, **kwargs) -> ChatRequest:
    """Single-user-message request, the shape every agent step uses."""
    return ChatRequest(
        system_prompt=system_prompt,
        messages=(ChatMessage(MessageRole.USER, user_content),),
        **kwargs,
    )


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HttpBackendConfig:
    endpoint_url: str
    model_id: str
    timeout: float = 60.0
    api_key_env_var: str | None = None
    max_retries: int = 2
    retry_backoff: float = 0.5


class HttpChatBackend:
    """OpenAI-compatible chat completions client; also handles vision requests
    by embedding the image as a base64 data URL content part."""

    def __init__(self, cfg: HttpBackendConfig):
        self.cfg = cfg

    def _call(self, messages: list[dict], model_id: str, temperature: float, max_tokens: int) -> str:
        payload = {
            "model": model_id or self.cfg.model_id,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        body = post_json(
            self.cfg.endpoint_url,
            payload,
            auth_headers(self.cfg.api_key_env_var),
            self.cfg.timeout,
            self.cfg.max_retries,
            self.cfg.retry_backoff,
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise IntegrityError(f"malformed completion response: {str(body)[:200]}")
        if not isinstance(content, str) or not content:
            raise IntegrityError("model returned an empty completion")
        return content

    def complete(self, req: ChatRequest) -> str:
        messages = [{"role": "system", "content": req.system_prompt}]
        messages += [{"role": m.role.value, "content": m.content} for m in req.messages]
        return self._call(messages, req.model_id, req.temperature, req.max_output_tokens)

    def describe_vision(self, req: VisionRequest) -> str:
        encoded = base64.b64encode(req.image_bytes).decode("ascii")
        messages = [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": req.prompt},
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:{req.media_type};base64,{encoded}"},
                    },
                ],
            }
        ]
        return self._call(messages, req.model_id, 0.0, 1024)


@dataclass(frozen=True)
class Rule:
    pattern: str
    response: str
    is_regex: bool = False

    def matches(self, text: str) -> bool:
        if self.is_regex:
            return re.search(self.pattern, text) is not None
        return self.pattern in text


class ScriptedBackend:
    """Deterministic backend: first matching rule wins, else default_response.

    Chat rules match against the last user message; vision rules against the
    prompt. Every call is appended to call_log (the live list; treat it as
    read-only).
    """

    def __init__(self, rules: list[Rule] | None = None, default_response: str = "OK"):
        self.rules = list(rules or [])
        self.default_response = default_response
        self.call_log: list[ChatRequest | VisionRequest] = []
        self._lock = threading.Lock()

    def _respond(self, text: str) -> str:
        for rule in self.rules:
            if rule.matches(text):
                return rule.response
        return self.default_response

    def complete(self, req: ChatRequest) -> str:
        with self._lock:
            self.call_log.append(req)
        return self._respond(req.last_user_content())

    def describe_vision(self, req: VisionRequest) -> str:
        with self._lock:
            self.call_log.append(req)
        return self._respond(req.prompt)


# ---------------------------------------------------------------------------
# Gateway operations
# ---------------------------------------------------------------------------


def complete(req: ChatRequest, backend) -> str:
    if not req.messages:
        raise ValidationError("chat request must carry at least one message")
    if req.temperature < 0:
        raise ValidationError(f"temperature must be >= 0, got {req.temperature}")
    out = backend.complete(req)
    if not out:
        raise IntegrityError("model returned an empty completion")
    return out


_CAPTION_RE = re.compile(r"CAPTION:\s*(.*?)\s*(?=DESCRIPTION:)", re.DOTALL | re.IGNORECASE)
_DESCRIPTION_RE = re.compile(r"DESCRIPTION:\s*(.*)\s*$", re.DOTALL | re.IGNORECASE)


def parse_labeled_sections(raw: str) -> tuple[str, str]:
    """Split a vision reply into (caption, description) by its two labels.

    Anything before CAPTION: is ignored so model preambles don't break
    parsing. Missing labels or an empty section raise ExtractionError with
    the raw output attached for inspection.
    """
    cap = _CAPTION_RE.search(raw)
    desc = _DESCRIPTION_RE.search(raw)
    if cap is None or desc is None:
        for label in ("CAPTION", "DESCRIPTION"):
            if re.search(label + ":", raw, re.IGNORECASE) is None:
                raise ExtractionError(
                    f"vision output is missing the {label}: label", raw_output=raw
                )
        raise ExtractionError(
            "vision output does not follow the CAPTION/DESCRIPTION layout", raw_output=raw
        )
    caption = cap.group(1).strip()
    description = desc.group(1).strip()
    if not caption or not description:
        empty = "caption" if not caption else "description"
        raise ExtractionError(f"vision output has an empty {empty} section", raw_output=raw)
    return caption, description


def describe_figure(req: VisionRequest, backend) -> tuple[str, str]:
    """Ask the vision backend to describe a figure image.

    The prompt must instruct the model to answer in two labeled sections,
    CAPTION: and DESCRIPTION:, which are parsed out here.
    """
    if not req.image_bytes:
        raise ValidationError("vision request image is empty")
    if not req.prompt:
        raise ValidationError("vision request prompt is empty")
    return parse_labeled_sections(backend.describe_vision(req))


# ---------------------------------------------------------------------------
# Rule files: plain-text scripts for offline demos
# ---------------------------------------------------------------------------
#
# One rule per line: "pattern => response". A pattern of * sets the default
# response. Prefix a pattern with re: to match it as a regular expression.
# Both sides support \n, \t, and \\ escapes; lines starting with # and blank
# lines are skipped.


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def load_rule_file(path: str | Path) -> ScriptedBackend:
    rules: list[Rule] = []
    default = "OK"
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=>" not in stripped:
            raise ValidationError(f"line {lineno}: expected 'pattern => response'")
        pattern_part, response_part = stripped.split("=>", 1)
        pattern = _unescape(pattern_part.strip())
        response = _unescape(response_part.strip())
        if not response:
            raise ValidationError(f"line {lineno}: empty response")
        if pattern == "*":
            default = response
            continue
        if pattern.startswith("re:"):
            rules.append(Rule(pattern=pattern[3:], response=response, is_regex=True))
        else:
            rules.append(Rule(pattern=pattern, response=response))
    return ScriptedBackend(rules=rules, default_response=default)
