"""Model backends behind one wire protocol, plus a deterministic mock.

Every model call in the pipeline goes through the same JSON-over-HTTP
surface so any of the verbalizers, the LLM, or an external critic can be
swapped without touching pipeline code:

    POST /v1/embed    {texts?: [str], image_b64?: str}        -> {vectors: [[float]]}
    POST /v1/chat     {messages: [{role, content}], temperature, seed?} -> {text}
    POST /v1/caption  {image_b64, box?: {x,y,w,h}}            -> {text}
    POST /v1/vqa      {image_b64, question}                   -> {answer}
    POST /v1/score    {payload}                               -> {score}

Clients are stateless and safe to share across threads. The mock derives
every reply from a sha256 of the request plus a seed, so runs with the
same seed are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from typing import Protocol

import httpx
import numpy as np


class BackendError(RuntimeError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class ModelBackend(Protocol):
    def embed(self, texts: list[str] | None = None, image_b64: str | None = None) -> list[list[float]]: ...

    def chat(self, messages: list[dict], temperature: float = 1.0, seed: int | None = None) -> str: ...

    def caption(self, image_b64: str, box: dict | None = None) -> str: ...

    def vqa(self, image_b64: str, question: str) -> str: ...

    def score(self, payload: dict) -> float: ...


class HttpBackend:
    """Talks to a model server implementing the /v1/* protocol."""

    def __init__(self, base_url: str, max_retries: int = 3, timeout: float = 60.0,
                 backoff: float = 0.5, api_key: str = ""):
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff = backoff
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers)

    def _post(self, route: str, payload: dict) -> dict:
        last_err = None
        for attempt in range(1, self.max_retries + 1):
            try:
                resp = self._client.post(f"{self.base_url}{route}", json=payload)
                resp.raise_for_status()
                return resp.json()
            except Exception as exc:
                last_err = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff * (2 ** (attempt - 1)))
        raise BackendError(
            f"{route} failed after {self.max_retries} attempts: {last_err}",
            attempts=self.max_retries,
        )

    def embed(self, texts=None, image_b64=None):
        payload = {}
        if texts is not None:
            payload["texts"] = list(texts)
        if image_b64 is not None:
            payload["image_b64"] = image_b64
        return self._post("/v1/embed", payload)["vectors"]

    def chat(self, messages, temperature=1.0, seed=None):
        payload = {"messages": messages, "temperature": temperature}
        if seed is not None:
            payload["seed"] = seed
        return self._post("/v1/chat", payload)["text"]

    def caption(self, image_b64, box=None):
        payload = {"image_b64": image_b64}
        if box is not None:
            payload["box"] = box
        return self._post("/v1/caption", payload)["text"]

    def vqa(self, image_b64, question):
        return self._post("/v1/vqa", {"image_b64": image_b64, "question": question})["answer"]

    def score(self, payload):
        return self._post("/v1/score", {"payload": payload})["score"]


# --------------------------------------------------------------------------
# deterministic mock
# --------------------------------------------------------------------------

_WORDS = (
    "lamp", "tree", "dog", "bench", "window", "coat", "bottle", "road",
    "cloud", "table", "book", "cup", "door", "hat", "bike", "flower",
    "sign", "chair", "phone", "bag", "boat", "kite", "plate", "shoe",
    "wall", "fence", "grass", "stone", "light", "glove", "scarf", "clock",
)

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11,
    "twelve": 12, "thirteen": 13, "fourteen": 14, "fifteen": 15,
    "sixteen": 16, "seventeen": 17, "eighteen": 18, "nineteen": 19,
    "twenty": 20,
}

_QUESTION_COUNT_RE = re.compile(r"ask (\w+) interesting but simple questions")
_REGION_LINE_RE = re.compile(r"^\[(\d+)\] \(", re.MULTILINE)
_QAR_MARKER = "Rationale:"


def _digest(*parts) -> int:
    payload = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def hash_unit_vector(key: str, dim: int, seed: int = 0) -> list[float]:
    """Deterministic pseudo-embedding: unit vector derived from a text key."""
    rng = np.random.default_rng(_digest("embed", key, seed) % (2**63))
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).tolist()


class MockBackend:
    """Stands in for every model endpoint with hash-derived replies.

    Chat replies are shaped by what the prompt asks for: a numbered
    question list, a Question/Answer/Rationale block (mentioning bracketed
    region ids only when the prompt itself lists them), or a one-line
    narrative. Caption replies embed the request's box coordinates so
    per-region request isolation is observable from the output.
    """

    def __init__(self, seed: int = 0, embed_dim: int = 32):
        self.seed = seed
        self.embed_dim = embed_dim

    def _words(self, key, n: int) -> list[str]:
        h = _digest(key, self.seed)
        return [_WORDS[(h // (31 ** i) + i) % len(_WORDS)] for i in range(n)]

    def embed(self, texts=None, image_b64=None):
        keys = list(texts) if texts is not None else []
        if image_b64 is not None:
            keys.append("image:" + hashlib.sha256(image_b64.encode("utf-8")).hexdigest())
        return [hash_unit_vector(k, self.embed_dim, self.seed) for k in keys]

    def chat(self, messages, temperature=1.0, seed=None):
        prompt = "\n".join(str(m.get("content", "")) for m in messages)
        key = ("chat", prompt, temperature, seed)

        m = _QUESTION_COUNT_RE.search(prompt)
        if m:
            word = m.group(1).lower()
            n = _NUMBER_WORDS.get(word, int(word) if word.isdigit() else 15)
            words = self._words(key, 2 * n)
            return "\n".join(
                f"{i + 1}. What is the {words[2 * i]} near the {words[2 * i + 1]}?"
                for i in range(n)
            )

        if _QAR_MARKER in prompt:
            return self._qar_reply(prompt, key)

        w = self._words(key, 3)
        return f"A {w[0]} sits beside a {w[1]} while a {w[2]} rests nearby."

    def _qar_reply(self, prompt: str, key) -> str:
        ids = sorted({int(t) for t in _REGION_LINE_RE.findall(prompt)})
        w = self._words(key, 4)
        h = _digest(key, self.seed)
        if ids:
            first = ids[h % len(ids)]
            second = ids[(h // 7) % len(ids)]
            subject = f"[{first}]" if first == second else f"[{first}] and [{second}]"
            return (
                f"Question: What might {subject} be doing with the {w[0]}?\n"
                f"Answer: {subject.capitalize()} seems occupied with the {w[1]}.\n"
                f"Rationale: The {w[2]} next to the {w[3]} suggests this activity."
            )
        return (
            f"Question: What might the {w[0]} near the {w[1]} be used for?\n"
            f"Answer: It is likely used together with the {w[2]}.\n"
            f"Rationale: The {w[3]} nearby makes that use the most plausible one."
        )

    def caption(self, image_b64, box=None):
        key = ("caption", hashlib.sha256(image_b64.encode("utf-8")).hexdigest(), box)
        w = self._words(key, 2)
        if box is not None:
            coords = f"({box['x']:.3f}, {box['y']:.3f}, {box['w']:.3f}, {box['h']:.3f})"
            return f"a {w[0]} with a {w[1]} at {coords}"
        return f"a {w[0]} near a {w[1]}"

    def vqa(self, image_b64, question):
        key = ("vqa", hashlib.sha256(image_b64.encode("utf-8")).hexdigest(), question)
        w = self._words(key, 2)
        return f"the {w[0]} by the {w[1]}"

    def score(self, payload):
        return (_digest("score", payload, self.seed) % 10_000) / 10_000.0


def resolve_backend(endpoint: str, seed: int = 0, max_retries: int = 3) -> ModelBackend:
    """Map a config value to a backend: "mock" or an http(s) base URL."""
    if endpoint == "mock":
        return MockBackend(seed=seed)
    if endpoint.startswith("http://") or endpoint.startswith("https://"):
        return HttpBackend(endpoint, max_retries=max_retries)
    raise ValueError(f"backend endpoint must be 'mock' or an http(s) URL, got {endpoint!r}")
