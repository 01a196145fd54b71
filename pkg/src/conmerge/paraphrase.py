"""Semantic paraphrases via an external chat-completions endpoint.

The client POSTs a fixed instruction template to an OpenAI-style JSON API,
retries transient failures with exponential backoff, and redacts the auth
token from logs.  The endpoint URL comes from configuration; the token from
the CONMERGE_ENDPOINT_TOKEN environment variable unless passed explicitly.
"""

import json
import logging
import os
import time

import requests

from .errors import EndpointError
from .metrics import VariationType
from .variations import QueryRecord, VariationRecord

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "CONMERGE_ENDPOINT_TOKEN"

PARAPHRASE_PROMPT = (
    "Rewrite the following question so that it keeps exactly the same meaning "
    "but uses different wording. Reply with only the rewritten question, "
    "nothing else.\n\nQuestion: {query}"
)


class EndpointClient:
    """Minimal chat-completions client with bounded retries."""

    def __init__(self, url, token=None, model=None, timeout=30.0, max_retries=3, backoff=0.5):
        if not url:
            raise EndpointError("no endpoint URL configured")
        self.url = url
        self.token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def complete(self, prompt: str) -> str:
        payload = {"messages": [{"role": "user", "content": prompt}]}
        if self.model:
            payload["model"] = self.model
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        logger.debug("POST %s headers=%s body=%s", self.url, _redact(headers), json.dumps(payload))

        last_error = None
        for attempt in range(self.max_retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"endpoint unreachable ({exc})"
                continue
            logger.debug("response %s: %s", resp.status_code, resp.text[:500])
            if resp.status_code >= 500:
                last_error = f"server error {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise EndpointError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
            return _extract_text(resp)
        raise EndpointError(f"exhausted retries ({self.max_retries} attempts): {last_error}")


def _redact(headers: dict) -> dict:
    return {k: ("Bearer ***" if k == "Authorization" else v) for k, v in headers.items()}


def _extract_text(resp) -> str:
    try:
        body = resp.json()
        choice = body["choices"][0]
        text = choice["message"]["content"] if "message" in choice else choice["text"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise EndpointError(f"non-parseable completion ({exc}): {resp.text[:200]}") from exc
    if not isinstance(text, str):
        raise EndpointError("non-parseable completion (content is not a string)")
    return text


def gen_paraphrases(q: QueryRecord, client: EndpointClient, n: int = 1) -> list:
    """Up to n paraphrases of one query, deduplicated against the source and each other."""
    records = []
    seen = {_normalize(q.query)}
    for i in range(n):
        try:
            text = client.complete(PARAPHRASE_PROMPT.format(query=q.query))
        except EndpointError as exc:
            raise EndpointError(f"query {q.id!r}: {exc}") from exc
        text = _clean(text)
        if not text or _normalize(text) in seen:
            continue
        seen.add(_normalize(text))
        records.append(
            VariationRecord(
                id=f"{q.id}-sem{len(records)}",
                source_id=q.id,
                variation_type=VariationType.SEMANTIC,
                query=text,
            )
        )
    return records


def _clean(text: str) -> str:
    cleaned = text.strip().splitlines()[0].strip() if text.strip() else ""
    return cleaned.strip('"').strip()


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())
