import json
import threading
import time

import httpx
import pytest

from ercgen.backend import (
    BackendConfig,
    BackendError,
    EchoBackend,
    HttpBackend,
    RuleBackend,
    generate,
    generate_many,
)
from ercgen.prompt import PromptSample, WindowSpec, build_impact_prompt, build_main_prompt
from ercgen.unify import UNIFIED_LABELS

from conftest import make_corpus


def sample(text="hello", gold="joyful", index=0):
    return PromptSample("main", text, gold, 1.0, {"dataset_id": "D", "conv_id": "c", "index": index, "gold": gold})


def test_echo_returns_gold():
    assert generate(sample(gold="sad"), BackendConfig()) == "sad"
    with pytest.raises(BackendError):
        EchoBackend().complete("plain prompt")


def test_rule_examples():
    rule = RuleBackend()
    assert rule.complete("I am so happy today") == "joyful"
    assert rule.complete("the bus leaves at noon") == "neutral"
    assert rule.classify("Eww, that is gross") == "disgust"


def test_rule_answers_in_prompt_vocabulary():
    corpus = make_corpus([2], labels=("neutral", "angry"), texts=["hi", "I am so angry"], dataset="IEMOCAP")
    conv = corpus.conversations[0]
    native = ("happy", "sad", "neutral", "angry", "excited", "scared")
    prompt = build_main_prompt(conv, 1, WindowSpec(), None, native)
    assert RuleBackend().complete(prompt) == "angry"
    prompt = build_main_prompt(conv, 1, WindowSpec(), None, UNIFIED_LABELS)
    assert RuleBackend().complete(prompt) == "mad"


def test_rule_reads_only_the_query_utterance():
    texts = ["I am so happy", "the meeting is at three"]
    conv = make_corpus([2], labels=("joyful", "neutral"), texts=texts).conversations[0]
    prompt = build_main_prompt(conv, 1, WindowSpec(), None, ("joyful", "neutral"))
    assert RuleBackend().complete(prompt) == "neutral"
    impact = build_impact_prompt(conv, 1, WindowSpec(), ("joyful", "neutral"))
    assert RuleBackend().complete(impact) == "joyful"


def test_rule_falls_back_when_candidate_missing():
    rule = RuleBackend({"fallback": "neutral", "keywords": {"disgust": ["gross"]}})
    main = 'Please select the emotional label of <Speaker_A: "gross"> from <happy, neutral>:'
    assert rule.complete(main) == "neutral"
    with pytest.raises(ValueError):
        RuleBackend({"fallback": "neutral", "keywords": {"a": ["x"], "b": ["x"]}})


def test_config_rejects_sampling():
    with pytest.raises(ValueError):
        BackendConfig(temperature=0.7)
    with pytest.raises(ValueError):
        BackendConfig(kind="http")
    with pytest.raises(ValueError):
        BackendConfig(kind="gpt")


def http_backend(handler, **kw):
    cfg = BackendConfig(kind="http", endpoint="http://model/", **kw)
    return cfg, HttpBackend(cfg, httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_wire_format():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json={"text": " joyful\n"})

    cfg, backend = http_backend(handler, max_new_tokens=8)
    assert backend.complete(sample("prompt text")) == " joyful\n"
    assert seen == [{"prompt": "prompt text", "max_new_tokens": 8, "temperature": 0.0}]


def test_http_retries_server_errors_then_fails_with_address():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    _, backend = http_backend(handler, retries=2)
    with pytest.raises(BackendError, match=r"\('D', 'c', 4\)"):
        backend.complete(sample(index=4))
    assert len(calls) == 3


def test_http_client_error_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400)

    _, backend = http_backend(handler, retries=3)
    with pytest.raises(BackendError, match="HTTP 400"):
        backend.complete(sample())
    assert len(calls) == 1


def test_http_timeout_and_bad_body():
    def timeout(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(BackendError, match="timeout"):
        http_backend(timeout, retries=0)[1].complete(sample())
    with pytest.raises(BackendError, match="text"):
        http_backend(lambda r: httpx.Response(200, json={"out": 1}))[1].complete(sample())


def test_concurrent_results_keep_input_order():
    lock = threading.Lock()
    active = [0, 0]

    def handler(request):
        body = json.loads(request.content)
        with lock:
            active[0] += 1
            active[1] = max(active[1], active[0])
        time.sleep(0.01 * (5 - int(body["prompt"]) % 5))
        with lock:
            active[0] -= 1
        return httpx.Response(200, json={"text": body["prompt"]})

    cfg, backend = http_backend(handler, concurrency=4)
    prompts = [str(i) for i in range(12)]
    order = []
    out = generate_many(prompts, cfg, backend=backend, on_result=lambda i, t: order.append(i))
    assert out == prompts
    assert order == list(range(12))
    assert active[1] > 1
