"""Chat-completion boundary: one interface, three interchangeable backends.

* ``HttpBackend`` talks to any chat-completions-compatible endpoint.
* ``MockBackend`` replays registered scripts, for tests and bundled runs.
* ``ReplayBackend`` caches responses by canonical request hash so a whole
  framework run can be re-executed byte-identically with zero network calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import GatewayError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")

API_KEY_ENV = "MARCO_API_KEY"
BASE_URL_ENV = "MARCO_BASE_URL"


@dataclass(frozen=True)
class ToolCallRequest:
    """One tool invocation requested by an assistant message."""

    id: str
    tool_name: str
    arguments: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "arguments", dict(self.arguments))

    def to_dict(self) -> dict:
        return {"id": self.id, "tool_name": self.tool_name, "arguments": dict(self.arguments)}

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "ToolCallRequest":
        return cls(
            id=payload["id"],
            tool_name=payload["tool_name"],
            arguments=dict(payload.get("arguments", {})),
        )


@dataclass(frozen=True)
class ChatMessage:
    """One conversation message; tool calls ride on assistant messages only."""

    role: str
    content: str = ""
    tool_calls: tuple[ToolCallRequest, ...] = ()
    tool_call_id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        if self.role not in ROLES:
            raise ValueError(f"unknown message role {self.role!r}")
        if self.tool_calls and self.role != "assistant":
            raise ValueError("tool_calls allowed on assistant messages only")
        if (self.tool_call_id is not None) != (self.role == "tool"):
            raise ValueError("tool_call_id must be present exactly on tool messages")
        ids = [c.id for c in self.tool_calls]
        if len(ids) != len(set(ids)):
            raise ValueError("tool call ids must be unique within a message")

    def to_dict(self) -> dict:
        payload: dict = {"role": self.role, "content": self.content}
        if self.tool_calls:
            payload["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        if self.tool_call_id is not None:
            payload["tool_call_id"] = self.tool_call_id
        return payload

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "ChatMessage":
        return cls(
            role=payload["role"],
            content=payload.get("content", ""),
            tool_calls=tuple(ToolCallRequest.from_dict(c) for c in payload.get("tool_calls", ())),
            tool_call_id=payload.get("tool_call_id"),
        )


@dataclass(frozen=True)
class CompletionRequest:
    """Everything a backend needs to produce the next assistant message."""

    model_ref: str
    messages: tuple[ChatMessage, ...]
    tool_specs: tuple[Mapping[str, Any], ...] = ()
    temperature: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        object.__setattr__(self, "tool_specs", tuple(dict(s) for s in self.tool_specs))
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role != "system":
            raise ValueError("first message must have role=system")

    def assistant_turns(self) -> int:
        return sum(1 for m in self.messages if m.role == "assistant")

    def last_message(self) -> ChatMessage:
        return self.messages[-1]


def canonical_request(req: CompletionRequest) -> dict:
    """The canonical, hash-stable form of a request (documented in README)."""
    return {
        "model_ref": req.model_ref,
        "temperature": float(req.temperature),
        "messages": [m.to_dict() for m in req.messages],
        "tool_specs": [dict(s) for s in req.tool_specs],
    }


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_hash(req: CompletionRequest) -> str:
    """Stable sha256 digest of the canonical request serialization.

    Map keys are sorted and separators fixed, so semantically identical
    requests hash equal regardless of construction order; content whitespace
    is preserved verbatim.
    """
    return hashlib.sha256(canonical_json(canonical_request(req)).encode("utf-8")).hexdigest()


_JSON_BLOCK = re.compile(r"\{", re.DOTALL)


def parse_tool_arguments(text: str, strict: bool = True) -> dict:
    """Parse tool-call arguments arriving as text.

    Strict mode requires the whole string to be one JSON object. Lenient mode
    tolerates prose around the first balanced ``{...}`` block, which is how
    live model output tends to arrive.
    """
    if strict:
        parsed = json.loads(text)
        if not isinstance(parsed, dict):
            raise ValueError("tool arguments must be a JSON object")
        return parsed
    for match in _JSON_BLOCK.finditer(text):
        depth = 0
        start = match.start()
        for i in range(start, len(text)):
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        parsed = json.loads(text[start : i + 1])
                    except json.JSONDecodeError:
                        break
                    if isinstance(parsed, dict):
                        return parsed
                    break
        # fall through to the next opening brace
    raise ValueError("no JSON object found in tool arguments")


class Backend:
    """Interface every backend implements."""

    def complete(self, req: CompletionRequest) -> ChatMessage:
        raise NotImplementedError


@dataclass(frozen=True)
class ScriptMatcher:
    """Predicate over a request: substring of last message, turn index, or always."""

    kind: str
    value: Any = None

    def __post_init__(self) -> None:
        if self.kind not in ("substring", "turn_index", "always"):
            raise ValueError(f"unknown matcher kind {self.kind!r}")

    def matches(self, req: CompletionRequest) -> bool:
        if self.kind == "always":
            return True
        if self.kind == "substring":
            return str(self.value) in req.last_message().content
        return req.assistant_turns() == int(self.value)


class MockBackend(Backend):
    """Deterministic scripted backend.

    Scripts are evaluated in registration order; the first whose matcher fires
    serves the call. A script holding a response sequence yields its next
    element on each successive match and errors once exhausted.
    """

    def __init__(self) -> None:
        self._scripts: list[tuple[ScriptMatcher, list[ChatMessage], list[int]]] = []

    def register_script(self, matcher: ScriptMatcher, responses: Sequence[ChatMessage]) -> int:
        responses = list(responses)
        if not responses:
            raise ValueError("a script needs at least one response")
        for msg in responses:
            if msg.role != "assistant":
                raise ValueError("script responses must be assistant messages")
        self._scripts.append((matcher, responses, [0]))
        return len(self._scripts) - 1

    def complete(self, req: CompletionRequest) -> ChatMessage:
        for matcher, responses, cursor in self._scripts:
            if matcher.matches(req):
                if cursor[0] >= len(responses):
                    raise GatewayError(
                        "NO_SCRIPT_MATCH",
                        f"matching script exhausted after {len(responses)} response(s)",
                    )
                msg = responses[cursor[0]]
                cursor[0] += 1
                return msg
        raise GatewayError("NO_SCRIPT_MATCH", "no registered script matches the request")

    @classmethod
    def from_script_file(cls, path: str | Path) -> "MockBackend":
        """Load scripts from a JSON file (see README for the schema)."""
        backend = cls()
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        for entry in payload:
            matcher = ScriptMatcher(kind=entry["matcher"]["kind"], value=entry["matcher"].get("value"))
            responses = []
            for raw in entry["responses"]:
                raw = dict(raw)
                raw.setdefault("role", "assistant")
                responses.append(ChatMessage.from_dict(raw))
            backend.register_script(matcher, responses)
        return backend


class ReplayBackend(Backend):
    """Cache-by-digest backend: record against an inner backend, then replay.

    The cache holds one JSON file per digest (``<digest>.json``) containing the
    canonical request and the response, so caches are diffable and portable.
    """

    def __init__(self, cache_dir: str | Path, inner: Backend | None = None, record: bool = False) -> None:
        self.cache_dir = Path(cache_dir)
        self.inner = inner
        self.record = record
        self._lock = threading.Lock()
        if record:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.cache_dir / f"{digest}.json"

    def complete(self, req: CompletionRequest) -> ChatMessage:
        digest = canonical_hash(req)
        path = self._path(digest)
        if path.exists():
            payload = json.loads(path.read_text(encoding="utf-8"))
            return ChatMessage.from_dict(payload["response"])
        if not self.record:
            raise GatewayError("CACHE_MISS", f"no cache entry for digest {digest}")
        if self.inner is None:
            raise GatewayError("CACHE_MISS", "recording mode requires an inner backend")
        response = self.inner.complete(req)
        with self._lock:
            if not path.exists():  # at-most-once entry per digest
                entry = {
                    "digest": digest,
                    "request": canonical_request(req),
                    "response": response.to_dict(),
                }
                path.write_text(canonical_json(entry), encoding="utf-8")
        return response


class HttpBackend(Backend):
    """POSTs to ``{base_url}/chat/completions`` with a bearer token.

    Transient failures (connection errors, 5xx) get a single linear retry.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        retry_delay: float = 1.0,
        strict_tool_args: bool = False,
    ) -> None:
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.retry_delay = retry_delay
        self.strict_tool_args = strict_tool_args

    def _payload(self, req: CompletionRequest) -> dict:
        payload: dict = {
            "model": req.model_ref,
            "messages": [],
            "temperature": req.temperature,
        }
        for m in req.messages:
            entry: dict = {"role": m.role, "content": m.content}
            if m.tool_calls:
                entry["tool_calls"] = [
                    {
                        "id": c.id,
                        "type": "function",
                        "function": {"name": c.tool_name, "arguments": json.dumps(c.arguments)},
                    }
                    for c in m.tool_calls
                ]
            if m.tool_call_id is not None:
                entry["tool_call_id"] = m.tool_call_id
            payload["messages"].append(entry)
        if req.tool_specs:
            payload["tools"] = [spec_to_openai(dict(s)) for s in req.tool_specs]
        return payload

    def _parse_response(self, body: Mapping[str, Any]) -> ChatMessage:
        try:
            message = body["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError("HTTP_ERROR", f"malformed completion body: {exc}", status=200) from exc
        calls = []
        for raw in message.get("tool_calls") or ():
            fn = raw.get("function", {})
            raw_args = fn.get("arguments", "{}")
            if isinstance(raw_args, str):
                try:
                    args = parse_tool_arguments(raw_args, strict=self.strict_tool_args)
                except ValueError as exc:
                    raise GatewayError("HTTP_ERROR", f"unparseable tool arguments: {exc}", status=200) from exc
            else:
                args = dict(raw_args)
            calls.append(ToolCallRequest(id=raw.get("id", f"call_{len(calls)}"), tool_name=fn.get("name", ""), arguments=args))
        return ChatMessage(role="assistant", content=message.get("content") or "", tool_calls=tuple(calls))

    def complete(self, req: CompletionRequest) -> ChatMessage:
        import requests

        if not self.base_url:
            raise GatewayError("HTTP_ERROR", f"no base URL configured (set {BASE_URL_ENV})", status=0)
        url = f"{self.base_url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._payload(req)

        last_error: Exception | None = None
        for attempt in (0, 1):
            if attempt:
                time.sleep(self.retry_delay)
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                log.debug("http attempt %d failed: %s", attempt, exc)
                continue
            if resp.status_code >= 500:
                last_error = GatewayError("HTTP_ERROR", f"server error {resp.status_code}", status=resp.status_code)
                continue
            if resp.status_code != 200:
                raise GatewayError("HTTP_ERROR", f"unexpected status {resp.status_code}", status=resp.status_code)
            return self._parse_response(resp.json())
        if isinstance(last_error, GatewayError):
            raise last_error
        raise GatewayError("HTTP_ERROR", f"request failed: {last_error}", status=0)


def spec_to_openai(spec: Mapping[str, Any]) -> dict:
    """Render a tool-spec summary into the chat-completions tools shape."""
    kinds = {
        "string": {"type": "string"},
        "integer": {"type": "integer"},
        "number": {"type": "number"},
        "boolean": {"type": "boolean"},
        "string_list": {"type": "array", "items": {"type": "string"}},
    }
    properties = {}
    required = []
    for param in spec.get("params", ()):
        schema = dict(kinds[param["kind"]])
        if param.get("doc"):
            schema["description"] = param["doc"]
        properties[param["name"]] = schema
        if param.get("required"):
            required.append(param["name"])
    return {
        "type": "function",
        "function": {
            "name": spec["name"],
            "description": spec.get("description", ""),
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
                "additionalProperties": False,
            },
        },
    }
