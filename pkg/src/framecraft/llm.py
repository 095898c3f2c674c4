"""Minimal chat-completion client with caching and retries.

Only the common ``POST {"model", "messages", "temperature"}`` request shape
is supported, answered by ``{"choices": [{"message": {"content": ...}}]}``.
The API key is read from ``FRAMECRAFT_LLM_KEY``.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import Future

import httpx

from .oracle import OracleEndpointError

API_KEY_ENV = "FRAMECRAFT_LLM_KEY"
_RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class ChatClient:
    """Thread-safe chat client.

    Replies are cached by a hash of (messages, model, whether the
    temperature is zero, draw index).  Concurrent requests for the same key
    share one network call.

    Parameters
    ----------
    endpoint : str
        Full URL of the chat-completions route.
    model : str
    temperature : float, default 0.7
    timeout : float
        Per-request timeout in seconds.
    retries : int
        Extra attempts after the first on transport errors, 408/429 and
        5xx answers.
    backoff : float
        Base delay in seconds; attempt ``k`` waits ``backoff * 2**k``.
    transport : httpx.BaseTransport, optional
        Injected transport (tests use ``httpx.MockTransport``).
    """

    def __init__(self, endpoint: str, model: str, temperature: float = 0.7, timeout: float = 60.0,
                 retries: int = 3, backoff: float = 0.5, api_key: str | None = None,
                 transport: httpx.BaseTransport | None = None, cache: bool = True):
        self.endpoint = endpoint
        self.model = model
        self.temperature = float(temperature)
        self.retries = int(retries)
        self.backoff = float(backoff)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.use_cache = cache
        self._http = httpx.Client(timeout=timeout, transport=transport)
        self._cache: dict[str, str] = {}
        self._inflight: dict[str, Future] = {}
        self._lock = threading.Lock()
        self.network_calls = 0

    def close(self):
        self._http.close()

    def cache_key(self, messages, draw: int = 0) -> str:
        blob = json.dumps({"m": messages, "model": self.model, "t0": self.temperature == 0.0, "draw": draw},
                          sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode()).hexdigest()

    def complete(self, messages, draw: int = 0) -> str:
        """Reply text for ``messages``; ``draw`` separates repeated samples."""
        if not self.use_cache:
            return self._request(messages)
        key = self.cache_key(messages, draw)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
            fut = self._inflight.get(key)
            owner = fut is None
            if owner:
                fut = Future()
                self._inflight[key] = fut
        if not owner:
            return fut.result()
        try:
            text = self._request(messages)
        except BaseException as exc:
            with self._lock:
                del self._inflight[key]
            fut.set_exception(exc)
            raise
        with self._lock:
            self._cache[key] = text
            del self._inflight[key]
        fut.set_result(text)
        return text

    def _request(self, messages) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = {"model": self.model, "messages": messages, "temperature": self.temperature}
        last = None
        for attempt in range(self.retries + 1):
            if attempt and self.backoff > 0:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            with self._lock:
                self.network_calls += 1
            try:
                resp = self._http.post(self.endpoint, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in _RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise OracleEndpointError(f"endpoint answered HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise OracleEndpointError("endpoint reply is not a chat-completion object") from None
        raise OracleEndpointError(f"endpoint failed after {self.retries + 1} attempts ({last})")
