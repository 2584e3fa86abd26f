"""Remote chat-completion transport shared by the judge and the generator.

Configuration comes from environment variables:

* ``CITEREC_ENDPOINT``     chat-completion URL
* ``CITEREC_API_KEY``      bearer credential (optional)
* ``CITEREC_JUDGE_MODEL``  model name for CITEVAL judging
* ``CITEREC_GEN_MODEL``    model name for citation generation
"""

from __future__ import annotations

import logging
import os

from .errors import BackendError

log = logging.getLogger(__name__)

ENV_ENDPOINT = "CITEREC_ENDPOINT"
ENV_API_KEY = "CITEREC_API_KEY"
ENV_JUDGE_MODEL = "CITEREC_JUDGE_MODEL"
ENV_GEN_MODEL = "CITEREC_GEN_MODEL"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ChatCompletionClient:
    """Minimal chat-completion caller with bounded retries.

    ``session`` only needs a ``post(url, json=..., headers=..., timeout=...)``
    returning an object with ``status_code`` and ``json()``; tests inject a
    fake, production uses requests.
    """

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 timeout: float = 60.0, retries: int = 3,
                 backoff: float = 0.5, session=None, sleep=None):
        import time

        if not endpoint:
            raise BackendError("remote backend needs an endpoint URL")
        if not model:
            raise BackendError("remote backend needs a model name")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session
        self._sleep = sleep if sleep is not None else time.sleep

    def _post(self, body):
        if self._session is None:
            import requests

            self._session = requests.Session()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return self._session.post(self.endpoint, json=body, headers=headers,
                                  timeout=self.timeout)

    def complete(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        last_error = None
        for attempt in range(1, self.retries + 1):
            try:
                response = self._post(body)
            except Exception as exc:  # requests raises library-specific types
                last_error = f"transport error: {exc}"
            else:
                status = getattr(response, "status_code", 0)
                if status == 200:
                    try:
                        payload = response.json()
                        return payload["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError, ValueError) as exc:
                        raise BackendError(
                            f"malformed chat-completion payload: {exc}") from exc
                last_error = f"HTTP {status}"
                if status not in _RETRYABLE_STATUS:
                    break
            if attempt < self.retries:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
        raise BackendError(f"chat completion failed after {self.retries} "
                           f"attempts ({last_error})")


def _client_from_env(model_var: str) -> ChatCompletionClient:
    endpoint = os.environ.get(ENV_ENDPOINT, "")
    model = os.environ.get(model_var, "")
    if not endpoint or not model:
        raise BackendError(
            f"remote backend needs {ENV_ENDPOINT} and {model_var} set")
    return ChatCompletionClient(endpoint=endpoint, model=model,
                                api_key=os.environ.get(ENV_API_KEY))


def judge_client_from_env() -> ChatCompletionClient:
    return _client_from_env(ENV_JUDGE_MODEL)


def generation_client_from_env() -> ChatCompletionClient:
    return _client_from_env(ENV_GEN_MODEL)
