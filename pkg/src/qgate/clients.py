"""OpenAI-compatible chat and embedding clients, and query entity extraction."""
from __future__ import annotations

import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import httpx
import numpy as np

from .core import QGateError, Query
from .gate import ChatFn, extract_json_object
from .streams import PREDICATES, GroundingSpec

logger = logging.getLogger(__name__)

API_KEY_ENV = "QGATE_API_KEY"
API_BASE_ENV = "QGATE_API_BASE"


class ClientError(QGateError):
    pass


class TransportError(ClientError):
    pass


class RequestTimeout(TransportError):
    pass


class HttpStatusError(ClientError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class EmptyChoice(ClientError):
    pass


class DimensionInconsistency(ClientError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000"
    model_name: str = "gpt-4o"
    api_key: Optional[str] = field(default=None, repr=False)
    timeout: float = 30.0
    max_retries: int = 1
    temperature: float = 0.0
    backoff: float = 0.5
    max_concurrency: int = 4

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        overrides.setdefault("api_key", os.environ.get(API_KEY_ENV))
        base = os.environ.get(API_BASE_ENV)
        if base and "base_url" not in overrides:
            overrides["base_url"] = base
        return cls(**overrides)


def redact(text: str, secret: Optional[str]) -> str:
    return text.replace(secret, "***") if secret else text


class OpenAICompatClient:
    """Minimal client for ``/v1/chat/completions`` and ``/v1/embeddings``.

    Transport errors and 5xx responses are retried up to ``max_retries`` times
    with exponential backoff; 4xx responses fail immediately. Instances are
    shareable across threads, with in-flight requests capped at
    ``max_concurrency``.
    """

    def __init__(self, cfg: EndpointConfig, transport: Optional[httpx.BaseTransport] = None):
        self.cfg = cfg
        self._http = httpx.Client(
            base_url=cfg.base_url.rstrip("/"), timeout=cfg.timeout, transport=transport
        )
        self._slots = threading.BoundedSemaphore(cfg.max_concurrency)

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        return headers

    def _post(self, path: str, body: dict) -> dict:
        attempts = self.cfg.max_retries + 1
        for attempt in range(attempts):
            last_try = attempt == attempts - 1
            try:
                with self._slots:
                    resp = self._http.post(path, json=body, headers=self._headers())
            except httpx.TimeoutException as exc:
                err: ClientError = RequestTimeout(f"timeout calling {path}")
                cause = exc
            except httpx.TransportError as exc:
                err = TransportError(redact(f"{type(exc).__name__}: {exc}", self.cfg.api_key))
                cause = exc
            else:
                if resp.status_code < 400:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise TransportError(f"non-JSON response from {path}") from exc
                err = HttpStatusError(resp.status_code, redact(resp.text, self.cfg.api_key))
                if resp.status_code < 500:
                    raise err
                cause = None
            if last_try:
                raise err from cause
            delay = self.cfg.backoff * (2 ** attempt)
            logger.warning("%s failed (%s); retry %d/%d in %.2fs", path, err, attempt + 1, self.cfg.max_retries, delay)
            time.sleep(delay)
        raise AssertionError("unreachable")

    def chat_complete(self, system_text: str, user_text: str) -> str:
        body = {
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": self.cfg.temperature,
        }
        data = self._post("/v1/chat/completions", body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EmptyChoice("response has no choices") from exc
        if not isinstance(content, str):
            raise EmptyChoice("first choice has no text content")
        return content

    __call__ = chat_complete

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        texts = list(texts)
        if not texts:
            raise ValueError("embed_texts needs at least one input")
        data = self._post("/v1/embeddings", {"model": self.cfg.model_name, "input": texts})
        try:
            items = sorted(data["data"], key=lambda d: d.get("index", 0))
            vecs = [np.asarray(d["embedding"], dtype=float) for d in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise ClientError("malformed embeddings response") from exc
        if len(vecs) != len(texts):
            raise ClientError(f"asked for {len(texts)} embeddings, got {len(vecs)}")
        if len({v.shape for v in vecs}) != 1 or vecs[0].ndim != 1:
            raise DimensionInconsistency("embeddings have mixed dimensions")
        return vecs


# --- entity extraction -------------------------------------------------------

ENTITY_PROMPT = (
    "Extract the concrete visual entities a detector should look for to answer the "
    "question: objects, people, animals, or short noun phrases with attributes "
    "(e.g. \"woman\", \"red car\"). Optionally list spatial relations between them "
    f"using only these predicates: {', '.join(PREDICATES)}.\n"
    "Reply with a single JSON object and nothing else:\n"
    '{"entities": ["..."], "relations": [["subject", "predicate", "object"]]}'
)

STOPWORDS = frozenset(
    """a an the is are was were be been being am do does did doing have has had having
    of in on at to from by with for about into over under after before during between
    and or but if then than so as that this these those it its it's there here
    i you he she we they me him her us them my your his our their
    not no can could would should will shall may might must
    up down out off again further once all any both each few more most other some such
    only own same too very just also video clip frame frames image shown show shows""".split()
)

QUESTION_WORDS = frozenset(
    """what which who whom whose when where why how many much color colour kind type
    happen happens happened describe tell""".split()
)


def fallback_entities(text: str, stopwords=STOPWORDS) -> GroundingSpec:
    """Crude keyword extractor: drop stopwords and question vocabulary, merge adjacent survivors."""
    tokens = re.findall(r"[a-z0-9]+(?:'[a-z]+)?", text.lower())
    groups: list[list[str]] = [[]]
    for tok in tokens:
        if tok in stopwords or tok in QUESTION_WORDS:
            if groups[-1]:
                groups.append([])
        else:
            groups[-1].append(tok)
    entities = []
    for g in groups:
        # adjacent content words pair up into bigrams; an odd tail stays a unigram
        for i in range(0, len(g), 2):
            entities.append(" ".join(g[i:i + 2]))
    if not entities:
        entities = [tokens[-1]] if tokens else ["object"]
    return GroundingSpec(tuple(entities))


def sanitize_grounding(obj: dict) -> GroundingSpec:
    ents = obj.get("entities")
    if not isinstance(ents, list):
        raise ValueError("entities must be a list")
    names = [e.strip().lower() for e in ents if isinstance(e, str) and e.strip()]
    if not names:
        raise ValueError("no entities")
    known = set(names)
    rels = []
    for r in obj.get("relations") or []:
        if not (isinstance(r, (list, tuple)) and len(r) == 3 and all(isinstance(x, str) for x in r)):
            continue
        subj, pred, o = (x.strip().lower() for x in r)
        if subj in known and o in known and pred in PREDICATES:
            rels.append((subj, pred, o))
    return GroundingSpec(tuple(names), tuple(rels))


def extract_entities(query: Query, chat: Optional[ChatFn] = None, stopwords=STOPWORDS) -> GroundingSpec:
    """Visual entities for the grounding expert, from the chat model when possible.

    One retry on an unusable reply, then the rule-based fallback, so this
    always returns a valid spec.
    """
    if chat is not None:
        for attempt in range(2):
            try:
                reply = chat(ENTITY_PROMPT, f"Question: {query.text.strip()}")
            except Exception as exc:
                logger.warning("entity extraction request failed (%s); using fallback", exc)
                break
            obj = extract_json_object(reply)
            try:
                if obj is None:
                    raise ValueError("no JSON object")
                return sanitize_grounding(obj)
            except ValueError as exc:
                logger.warning("entity extraction attempt %d unusable: %s", attempt + 1, exc)
    return fallback_entities(query.text, stopwords)
