"""Shared HTTP plumbing for model-serving endpoints.

Retries are safe here because every call is stateless; 4xx responses are
configuration problems and are never retried.
"""

from __future__ import annotations

import os
import time

import requests

from .errors import ConfigurationError, TransportError


def auth_headers(api_key_env_var: str | None) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if api_key_env_var:
        key = os.environ.get(api_key_env_var, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    return headers


def post_json(
    url: str,
    payload: dict,
    headers: dict[str, str],
    timeout: float,
    max_retries: int = 2,
    backoff: float = 0.5,
) -> dict:
    last_exc: Exception | None = None
    for attempt in range(max_retries + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_exc = exc
        else:
            if resp.status_code >= 500:
                last_exc = TransportError(f"backend returned {resp.status_code}")
            elif resp.status_code >= 400:
                raise ConfigurationError(
                    f"backend rejected request with {resp.status_code}: {resp.text[:200]}"
                )
            else:
                return resp.json()
        if attempt < max_retries:
            time.sleep(backoff * (2**attempt))
    raise TransportError(f"backend unreachable after {max_retries + 1} attempts: {last_exc}")
