"""Completion backends: deterministic mocks and a minimal HTTP completion contract.

HTTP wire format (one endpoint, UTF-8 JSON bodies)::

    request:  {"prompt": str, "max_new_tokens": int, "temperature": 0.0}
    response: {"text": str}

Any non-2xx status, timeout or connection failure is a ``BackendError``
naming the sample address.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from importlib import resources
from typing import Callable, Iterable, Sequence

import httpx

from .prompt import MAIN_INSTRUCTION, PromptSample
from .retrieval import tokenize
from .unify import LabelMapping, default_mapping

MOCK_ECHO = "mock_echo"
MOCK_RULE = "mock_rule"
HTTP = "http"
KINDS = (MOCK_ECHO, MOCK_RULE, HTTP)

_MAIN_QUERY = re.compile(r'Please select the emotional label of <[^<>\n]*?: "(?P<text>[^\n]*)"> from <(?P<labels>[^<>\n]*)>:')
_IMPACT_QUERY = re.compile(r"please predict the emotion states of <[^<>\n]*> from <(?P<labels>[^<>\n]*)>:")


class BackendError(RuntimeError):
    def __init__(self, message: str, address=None):
        self.address = address
        if address is not None:
            message = f"{message} (sample {address})"
        super().__init__(message)


@dataclass(frozen=True)
class BackendConfig:
    kind: str = MOCK_ECHO
    endpoint: str | None = None
    max_new_tokens: int = 16
    temperature: float = 0.0
    timeout: float = 30.0
    concurrency: int = 4
    retries: int = 1
    lexicon: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == HTTP and not self.endpoint:
            raise ValueError("http backend needs an endpoint")
        if self.temperature != 0.0:
            raise ValueError("only greedy decoding (temperature 0) is supported")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)


def _sample_address(prompt):
    if isinstance(prompt, PromptSample):
        m = prompt.meta
        return (m.get("dataset_id"), m.get("conv_id"), m.get("index"))
    return None


class EchoBackend:
    """Returns the sample's gold label; a perfect-prediction oracle."""

    def complete(self, prompt) -> str:
        if not isinstance(prompt, PromptSample) or "gold" not in prompt.meta:
            raise BackendError("mock_echo needs a sample carrying its gold label")
        return prompt.meta["gold"]


class RuleBackend:
    """Keyword-lexicon classifier.

    The first token of the queried utterance found in the lexicon picks a
    unified emotion; with no hit the fallback emotion is used. The emotion is
    then rendered as the first candidate label (in prompt order) that equals it
    or maps to it in the label mapping, so it answers in a dataset's native
    label space as well as the unified one.
    """

    def __init__(self, lexicon: dict | None = None, mapping: LabelMapping | None = None):
        if lexicon is None:
            lexicon = json.loads(resources.files("ercgen.data").joinpath("lexicon.json").read_text(encoding="utf-8"))
        self.fallback = lexicon["fallback"]
        self.keywords: dict[str, str] = {}
        for emotion, words in lexicon["keywords"].items():
            for w in words:
                if w in self.keywords:
                    raise ValueError(f"keyword {w!r} listed under two emotions")
                self.keywords[w] = emotion
        mapping = mapping or default_mapping()
        self.aliases: dict[str, set[str]] = {}
        for (_, src), uni in mapping.rows.items():
            self.aliases.setdefault(uni, {uni}).add(src)

    @classmethod
    def from_path(cls, path) -> RuleBackend:
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def classify(self, text: str) -> str:
        for tok in tokenize(text):
            hit = self.keywords.get(tok)
            if hit is not None:
                return hit
        return self.fallback

    def resolve(self, emotion: str, candidates: Sequence[str] | None) -> str:
        if not candidates:
            return emotion
        names = self.aliases.get(emotion, {emotion})
        for c in candidates:
            if c in names:
                return c
        if emotion != self.fallback:
            return self.resolve(self.fallback, candidates)
        return candidates[0]

    def complete(self, prompt) -> str:
        text = prompt.input_text if isinstance(prompt, PromptSample) else prompt
        candidates = None
        m = _MAIN_QUERY.search(text)
        if m:
            query, candidates = m.group("text"), m.group("labels").split(", ")
        else:
            m = _IMPACT_QUERY.search(text)
            if m:
                candidates = m.group("labels").split(", ")
                query = text[: m.start()].replace(MAIN_INSTRUCTION, "")
            else:
                query = text
        return self.resolve(self.classify(query), candidates)


class HttpBackend:
    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)

    def complete(self, prompt) -> str:
        text = prompt.input_text if isinstance(prompt, PromptSample) else prompt
        body = {"prompt": text, "max_new_tokens": self.config.max_new_tokens, "temperature": 0.0}
        addr = _sample_address(prompt)
        last = None
        for _ in range(self.config.retries + 1):
            try:
                resp = self._client.post(self.config.endpoint, json=body)
            except httpx.TimeoutException as exc:
                last = BackendError(f"timeout: {exc}", addr)
                continue
            except httpx.HTTPError as exc:
                last = BackendError(f"transport failure: {exc}", addr)
                continue
            if 500 <= resp.status_code < 600:
                last = BackendError(f"HTTP {resp.status_code}", addr)
                continue
            if not 200 <= resp.status_code < 300:
                raise BackendError(f"HTTP {resp.status_code}", addr)
            try:
                return resp.json()["text"]
            except (ValueError, KeyError, TypeError):
                raise BackendError("response lacks a 'text' field", addr) from None
        raise last


def make_backend(config: BackendConfig, *, client: httpx.Client | None = None):
    if config.kind == MOCK_ECHO:
        return EchoBackend()
    if config.kind == MOCK_RULE:
        return RuleBackend.from_path(config.lexicon) if config.lexicon else RuleBackend()
    return HttpBackend(config, client)


def generate(prompt, config: BackendConfig, *, backend=None) -> str:
    return (backend or make_backend(config)).complete(prompt)


def generate_many(
    prompts: Sequence,
    config: BackendConfig,
    *,
    backend=None,
    on_result: Callable[[int, str], None] | None = None,
) -> list[str]:
    """Complete every prompt; results come back in input order.

    ``on_result`` fires in order as each completion becomes available, so a
    failure at item k leaves items 0..k-1 already reported.
    """
    backend = backend or make_backend(config)
    out: list[str] = []
    if config.kind != HTTP or config.concurrency == 1:
        results: Iterable[str] = (backend.complete(p) for p in prompts)
        for i, text in enumerate(results):
            out.append(text)
            if on_result:
                on_result(i, text)
        return out
    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        futures = [pool.submit(backend.complete, p) for p in prompts]
        try:
            for i, fut in enumerate(futures):
                text = fut.result()
                out.append(text)
                if on_result:
                    on_result(i, text)
        except BaseException:
            for fut in futures:
                fut.cancel()
            raise
    return out
