import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import RaisingTransport, chat_body
from tablap.gateway import (
    ApiError,
    CacheMiss,
    CompletionCache,
    Gateway,
    ModelRole,
    PromptTemplate,
    UnboundSlot,
    cache_key,
    render,
)
from tablap.prompts import ANS_SELECTOR_TEMPLATE, DEFAULT_TEMPLATES, NUMSOLVER_TEMPLATE


def test_render_substitutes_slots():
    out = render(NUMSOLVER_TEMPLATE, {"table_flat": "a | b", "question": "q?"})
    assert "a | b" in out and "q?" in out
    assert "{table_flat}" not in out and "{question}" not in out


def test_render_missing_slot_raises():
    with pytest.raises(UnboundSlot) as err:
        render(ANS_SELECTOR_TEMPLATE, {"table_schema": "s", "question": "q", "ans_a": "1", "rsn_a": "r"})
    assert err.value.name in ("ans_b", "rsn_b")


def test_render_schema_only_prompt_excludes_cells():
    slots = {
        "table_schema": "Title: Medals\nColumns: Nation | Gold",
        "question": "who?",
        "ans_a": "x",
        "rsn_a": "ra",
        "ans_b": "y",
        "rsn_b": "rb",
    }
    out = render(ANS_SELECTOR_TEMPLATE, slots)
    assert "Nation | Gold" in out and "Japan" not in out


def test_render_keeps_literal_braces():
    template = PromptTemplate(id="numsolver", body="code {{x: 1}} and {question}")
    assert render(template, {"question": "q"}) == "code {x: 1} and q"


def test_render_does_not_rescan_substituted_values():
    template = PromptTemplate(id="numsolver", body="{question}")
    assert render(template, {"question": "literal {table_flat}"}) == "literal {table_flat}"


def test_template_rejects_unknown_slots():
    with pytest.raises(ValueError):
        PromptTemplate(id="x", body="hello {tabel_flat}")


def test_default_templates_reference_known_slots():
    for name, template in DEFAULT_TEMPLATES.items():
        assert template.slots, name


def test_model_role_validation():
    ModelRole(role="sota_branch", model_name="m", n_samples=5)
    with pytest.raises(ValueError):
        ModelRole(role="numsolver", model_name="m", n_samples=2)
    with pytest.raises(ValueError):
        ModelRole(role="bogus", model_name="m")
    with pytest.raises(ValueError):
        ModelRole(role="numsolver", model_name="m", temperature=-1)


def test_cache_key_changes_with_inputs():
    base = cache_key("m", 0.0, 100, "prompt", 0)
    assert cache_key("m", 0.0, 100, "prompt", 0) == base
    assert cache_key("m", 0.7, 100, "prompt", 0) != base
    assert cache_key("m", 0.0, 100, "prompt", 1) != base
    assert cache_key("m", 0.0, 101, "prompt", 0) != base
    assert cache_key("m2", 0.0, 100, "prompt", 0) != base


@settings(max_examples=1000, deadline=None)
@given(st.text(max_size=200), st.integers(min_value=0, max_value=10))
def test_cache_key_stable_over_random_prompts(prompt, sample_index):
    k1 = cache_key("model", 0.5, 256, prompt, sample_index)
    k2 = cache_key("model", 0.5, 256, prompt, sample_index)
    assert k1 == k2 and len(k1) == 64


def test_cache_put_get_atomic(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = CompletionCache(path)
    cache.put({"key": "k1", "role": "numsolver", "prompt_sha": "x", "text": "hello", "meta": {}})
    assert not path.with_name(path.name + ".tmp").exists()
    reloaded = CompletionCache(path)
    assert reloaded.get("k1")["text"] == "hello"
    with pytest.raises(CacheMiss):
        reloaded.get("nope")


class QueueTransport:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def post_chat(self, payload):
        self.calls += 1
        return self.responses.pop(0)


def _roles():
    return {"numsolver": ModelRole(role="numsolver", model_name="m")}


def test_record_then_replay_round_trip(tmp_path):
    cache = CompletionCache(tmp_path / "c.jsonl")
    transport = QueueTransport([(200, chat_body("answer text"))])
    recorder = Gateway(_roles(), mode="record", cache=cache, transport=transport)
    first = recorder.complete("numsolver", "the prompt")
    assert first.text == "answer text" and not first.from_cache

    replayer = Gateway(_roles(), mode="replay", cache=CompletionCache(tmp_path / "c.jsonl"),
                       transport=RaisingTransport())
    second = replayer.complete("numsolver", "the prompt")
    assert second.text == "answer text"
    assert second.from_cache and second.latency_ms == 0
    assert second.cache_key == first.cache_key


def test_replay_mode_never_touches_network(tmp_path):
    cache = CompletionCache(tmp_path / "c.jsonl")
    cache.put({"key": cache_key("m", 0.0, 1024, "p", 0), "role": "numsolver",
               "prompt_sha": "s", "text": "cached", "meta": {}})
    transport = RaisingTransport()
    gateway = Gateway(_roles(), mode="replay", cache=cache, transport=transport)
    assert gateway.complete("numsolver", "p").text == "cached"
    with pytest.raises(CacheMiss):
        gateway.complete("numsolver", "unknown prompt")
    assert transport.calls == 0


def test_record_mode_reuses_existing_cache_entry(tmp_path):
    cache = CompletionCache(tmp_path / "c.jsonl")
    transport = QueueTransport([(200, chat_body("one"))])
    gateway = Gateway(_roles(), mode="record", cache=cache, transport=transport)
    gateway.complete("numsolver", "p")
    again = gateway.complete("numsolver", "p")
    assert again.from_cache and transport.calls == 1


def test_retry_on_server_errors():
    sleeps = []
    transport = QueueTransport([(500, "boom"), (503, "busy"), (200, chat_body("ok"))])
    gateway = Gateway(_roles(), mode="live", transport=transport, sleep=sleeps.append)
    assert gateway.complete("numsolver", "p").text == "ok"
    assert transport.calls == 3 and sleeps == [0.5, 1.0]


def test_retry_on_429():
    transport = QueueTransport([(429, "slow down"), (200, chat_body("ok"))])
    gateway = Gateway(_roles(), mode="live", transport=transport, sleep=lambda s: None)
    assert gateway.complete("numsolver", "p").text == "ok"


def test_client_error_fails_fast():
    transport = QueueTransport([(400, "bad request")])
    gateway = Gateway(_roles(), mode="live", transport=transport, sleep=lambda s: None)
    with pytest.raises(ApiError) as err:
        gateway.complete("numsolver", "p")
    assert err.value.status == 400 and transport.calls == 1


def test_exhausted_retries_raise():
    transport = QueueTransport([(500, "a"), (500, "b"), (500, "c")])
    gateway = Gateway(_roles(), mode="live", transport=transport, sleep=lambda s: None)
    with pytest.raises(ApiError) as err:
        gateway.complete("numsolver", "p")
    assert err.value.status == 500 and transport.calls == 3


def test_gateway_mode_validation(tmp_path):
    with pytest.raises(ValueError):
        Gateway(_roles(), mode="replay", cache=None)
    with pytest.raises(ValueError):
        Gateway(_roles(), mode="live", transport=None)
    with pytest.raises(ValueError):
        Gateway(_roles(), mode="bogus")
