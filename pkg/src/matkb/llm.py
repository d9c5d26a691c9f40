"""OpenAI-compatible chat-completions client.

Any server speaking POST {base}/v1/chat/completions works, remote or
local. A `ChatClient` is anything with `complete(messages, **kwargs)`;
tests inject scripted clients instead of touching the network.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Protocol

import httpx


class TransportError(Exception):
    """Endpoint unreachable or persistently erroring."""


class ChatClient(Protocol):
    def complete(self, messages: list[dict], **kwargs) -> str: ...


@dataclass
class HttpChatClient:
    base_url: str
    model: str
    api_key_env: str = "MATKB_API_KEY"
    temperature: float = 0.0
    seed: int | None = 0
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 1.0

    def complete(self, messages: list[dict], **kwargs) -> str:
        url = f"{self.base_url.rstrip('/')}/v1/chat/completions"
        body = {
            "model": kwargs.get("model", self.model),
            "messages": messages,
            "temperature": kwargs.get("temperature", self.temperature),
        }
        if self.seed is not None:
            body["seed"] = self.seed
        headers = {}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = httpx.post(url, json=body, headers=headers, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise httpx.HTTPStatusError(
                        f"server error {resp.status_code}", request=resp.request, response=resp
                    )
                resp.raise_for_status()
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_base * (2**attempt))
        raise TransportError(f"chat completion failed after retries: {last}")


@dataclass
class ScriptedChatClient:
    """Deterministic test double: returns queued responses in order.

    A queued `TransportError` instance is raised instead of returned.
    When the queue runs dry the last response repeats (or `default`
    if the queue started empty).
    """

    responses: list[str | TransportError] = field(default_factory=list)
    default: str = ""
    calls: list[list[dict]] = field(default_factory=list)

    def complete(self, messages: list[dict], **kwargs) -> str:
        self.calls.append(messages)
        if self.responses:
            item = self.responses.pop(0)
            self._last = item
        else:
            item = getattr(self, "_last", self.default)
        if isinstance(item, TransportError):
            raise item
        return item
