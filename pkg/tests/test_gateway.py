import json

import pytest

from cogtutor.errors import (
    EmbeddingDimensionMismatch,
    EmptyInput,
    FixtureMiss,
    ProviderUnreachable,
)
from cogtutor.gateway import (
    ChatRequest,
    LLMGateway,
    canonical_request_hash,
)

from conftest import (
    FailingTransport,
    FlakyTransport,
    HashEmbedTransport,
    hash_vector,
    replay_gateway,
    seed_chat,
    seed_embed,
)


def req(user="hello", **kwargs):
    return ChatRequest(system_prompt="sys", user_prompt=user, **kwargs)


class TestCanonicalHash:
    def test_structurally_equal_requests_hash_equal(self):
        a = ChatRequest("sys", "do it", few_shot_examples=(("i", "o"),), temperature=0.3)
        b = ChatRequest("sys", "do it", few_shot_examples=(("i", "o"),), temperature=0.3)
        assert canonical_request_hash(a) == canonical_request_hash(b)

    def test_temperature_changes_hash(self):
        assert canonical_request_hash(req(temperature=0.3)) != canonical_request_hash(
            req(temperature=0.4)
        )

    def test_trailing_whitespace_is_normalized(self):
        assert canonical_request_hash(req("do it")) == canonical_request_hash(req("do it   \n"))
        assert canonical_request_hash(req("do   it")) == canonical_request_hash(req("do it"))

    def test_serialize_roundtrip_hash_stable(self):
        original = ChatRequest("sys", "do it", few_shot_examples=(("a", "b"),), max_tokens=64)
        revived = ChatRequest.from_dict(json.loads(json.dumps(original.to_dict())))
        assert canonical_request_hash(original) == canonical_request_hash(revived)

    def test_few_shot_order_matters(self):
        a = ChatRequest("sys", "u", few_shot_examples=(("1", "a"), ("2", "b")))
        b = ChatRequest("sys", "u", few_shot_examples=(("2", "b"), ("1", "a")))
        assert canonical_request_hash(a) != canonical_request_hash(b)


class TestChatRequestValidation:
    @pytest.mark.parametrize("temperature", [-0.1, 1.5])
    def test_temperature_out_of_range(self, temperature):
        with pytest.raises(ValueError):
            req(temperature=temperature)

    def test_max_tokens_positive(self):
        with pytest.raises(ValueError):
            req(max_tokens=0)


class TestReplay:
    def test_replay_is_a_table_lookup(self, fixture_dir):
        request = req("summarize the goal")
        seed_chat(fixture_dir, request, "segment summary S")
        gw = replay_gateway(fixture_dir)
        response = gw.complete(request)
        assert response.text == "segment summary S"
        assert response.cached is True

    def test_same_request_twice_is_byte_identical(self, fixture_dir):
        request = req("summarize")
        seed_chat(fixture_dir, request, "answer text")
        gw = replay_gateway(fixture_dir)
        assert gw.complete(request).text == gw.complete(request).text

    def test_missing_entry_raises_fixture_miss(self, fixture_dir):
        gw = replay_gateway(fixture_dir)
        with pytest.raises(FixtureMiss):
            gw.complete(req("never recorded"))

    def test_replay_never_touches_network(self, fixture_dir):
        transport = FailingTransport()
        request = req("cached")
        seed_chat(fixture_dir, request, "cached answer")
        seed_embed(fixture_dir, "text", hash_vector("text"))
        gw = replay_gateway(fixture_dir, chat_transport=transport, embed_transport=transport)
        gw.complete(request)
        gw.embed(["text"])
        assert transport.used is False


class TestRecordReplayRoundtrip:
    def test_recorded_text_replays_verbatim(self, fixture_dir):
        request = req("what is fct_reorder")
        recorder = LLMGateway(
            mode="record", fixture_dir=str(fixture_dir),
            chat_transport=FlakyTransport(0, text="fct_reorder sorts factor levels"),
            sleep=lambda _s: None,
        )
        live = recorder.complete(request)
        assert live.cached is False

        replayer = replay_gateway(fixture_dir)
        replayed = replayer.complete(request)
        assert replayed.text == live.text
        assert replayed.cached is True


class TestRetries:
    def test_two_failures_then_success(self, fixture_dir):
        sleeps = []
        transport = FlakyTransport(2, text="recovered")
        gw = LLMGateway(mode="live", fixture_dir=str(fixture_dir),
                        chat_transport=transport, sleep=sleeps.append)
        assert gw.complete(req()).text == "recovered"
        assert transport.attempts == 3
        assert sleeps == [0.5, 1.0]

    def test_three_failures_raise_provider_unreachable(self, fixture_dir):
        transport = FlakyTransport(99)
        gw = LLMGateway(mode="live", fixture_dir=str(fixture_dir),
                        chat_transport=transport, sleep=lambda _s: None)
        with pytest.raises(ProviderUnreachable):
            gw.complete(req())
        assert transport.attempts == 3

    def test_empty_provider_text_treated_as_failure(self, fixture_dir):
        transport = FlakyTransport(0, text="   ")
        gw = LLMGateway(mode="live", fixture_dir=str(fixture_dir),
                        chat_transport=transport, sleep=lambda _s: None)
        with pytest.raises(ProviderUnreachable):
            gw.complete(req())


class TestEmbeddings:
    def test_identical_texts_identical_vectors(self, fixture_dir):
        seed_embed(fixture_dir, "a", hash_vector("a"))
        gw = replay_gateway(fixture_dir)
        first, second = gw.embed(["a", "a"])
        assert first.values == second.values

    def test_empty_input_rejected(self, fixture_dir):
        with pytest.raises(EmptyInput):
            replay_gateway(fixture_dir).embed([])

    def test_fixture_vector_replays(self, fixture_dir):
        vector = hash_vector("fct_reorder ordering")
        seed_embed(fixture_dir, "fct_reorder ordering", vector)
        gw = replay_gateway(fixture_dir)
        assert list(gw.embed(["fct_reorder ordering"])[0].values) == pytest.approx(vector)

    def test_order_preserved(self, fixture_dir):
        for text in ("x", "y"):
            seed_embed(fixture_dir, text, hash_vector(text))
        gw = replay_gateway(fixture_dir)
        vx, vy = gw.embed(["x", "y"])
        assert list(vx.values) == pytest.approx(hash_vector("x"))
        assert list(vy.values) == pytest.approx(hash_vector("y"))

    def test_dimension_validated_per_response(self, fixture_dir):
        seed_embed(fixture_dir, "ok", hash_vector("ok", dim=8))
        seed_embed(fixture_dir, "bad", hash_vector("bad", dim=4))
        gw = replay_gateway(fixture_dir, embed_dim=8)
        gw.embed(["ok"])
        with pytest.raises(EmbeddingDimensionMismatch):
            gw.embed(["bad"])

    def test_record_mode_fetches_and_replays(self, fixture_dir):
        transport = HashEmbedTransport(dim=6)
        recorder = LLMGateway(mode="record", fixture_dir=str(fixture_dir),
                              embed_transport=transport, sleep=lambda _s: None)
        recorded = recorder.embed(["alpha", "beta"])
        assert transport.calls == 1

        replayed = replay_gateway(fixture_dir).embed(["alpha", "beta"])
        assert [v.values for v in replayed] == [v.values for v in recorded]
