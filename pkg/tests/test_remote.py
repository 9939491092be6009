from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from paralow.errors import ModelUnavailableError, ProtocolViolationError
from paralow.remote import connect
from paralow.toy import table_lm_from_fixture

from stubserver import Faults, StubLMServer

FIXTURE = {
    "vocab": ["a", "b", "c", "eos"],
    "order": 1,
    "rows": {"a": {"a": 0.1, "b": 0.6, "c": 0.2, "eos": 0.1}},
    "default_row": {"a": 0.5, "b": 0.3, "c": 0.15, "eos": 0.05},
}


@pytest.fixture
def model():
    return table_lm_from_fixture(FIXTURE)


class TestConnect:
    def test_vocab_round_trip(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url)
            assert remote.vocabulary.tokens == model.vocabulary.tokens
            assert remote.vocabulary.eos_id == model.vocabulary.eos_id
            assert remote.vocabulary.vocab_hash == model.vocabulary.vocab_hash

    def test_bad_hash_rejected(self, model):
        with StubLMServer(model, faults=Faults(bad_hash=True)) as server:
            with pytest.raises(ProtocolViolationError, match="hash"):
                connect(server.url)

    def test_unreachable_server(self):
        with pytest.raises(ModelUnavailableError):
            connect("http://127.0.0.1:9", timeout_ms=300, retry_limit=0)


class TestNextLogProbs:
    def test_matches_direct_query_exactly(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url)
            for ctx in [(), (0,), (0, 1), (2, 2, 2)]:
                np.testing.assert_array_equal(remote.next_log_probs(ctx), model.next_log_probs(ctx))

    def test_two_clients_agree(self, model):
        with StubLMServer(model) as server:
            one = connect(server.url)
            two = connect(server.url)
            np.testing.assert_array_equal(one.next_log_probs((0, 1)), two.next_log_probs((0, 1)))

    def test_wrong_length_rejected(self, model):
        with StubLMServer(model, faults=Faults(wrong_length=True)) as server:
            remote = connect(server.url)
            with pytest.raises(ProtocolViolationError, match="length"):
                remote.next_log_probs((0,))

    def test_denormalized_rejected(self, model):
        with StubLMServer(model, faults=Faults(denormalize=True)) as server:
            remote = connect(server.url)
            with pytest.raises(ProtocolViolationError, match="normalization"):
                remote.next_log_probs((0,))

    def test_http_400_is_protocol_violation(self, model):
        with StubLMServer(model, faults=Faults(reject_all=True)) as server:
            remote = connect(server.url)
            with pytest.raises(ProtocolViolationError, match="400"):
                remote.next_log_probs((0,))

    def test_out_of_range_context_rejected_client_side(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url)
            with pytest.raises(Exception, match="out of range"):
                remote.next_log_probs((42,))

    def test_queries_are_cached(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url)
            first = remote.next_log_probs((0, 1))
            n_requests = len(server.request_log)
            second = remote.next_log_probs((0, 1))
            assert len(server.request_log) == n_requests
            np.testing.assert_array_equal(first, second)


class TestBosHandling:
    def test_bos_prepended_client_side(self, model):
        with StubLMServer(model, bos_id=0) as server:
            remote = connect(server.url)
            remote.next_log_probs((1, 2))
            remote.next_log_probs(())
            bodies = [r["body"]["tokens"] for r in server.request_log if r["path"] == "/v1/logprobs"]
            assert bodies == [[0, 1, 2], [0]]

    def test_no_bos_means_raw_context(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url)
            remote.next_log_probs((1, 2))
            bodies = [r["body"]["tokens"] for r in server.request_log if r["path"] == "/v1/logprobs"]
            assert bodies == [[1, 2]]


class TestRetries:
    def test_retry_succeeds_and_matches_first_try(self, model):
        with StubLMServer(model) as clean_server:
            baseline = connect(clean_server.url).next_log_probs((0,))
        with StubLMServer(model) as server:
            remote = connect(server.url)
            server.faults.fail_first = 2
            got = remote.next_log_probs((0,))
            np.testing.assert_array_equal(got, baseline)

    def test_retries_exhausted(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url, retry_limit=1)
            server.faults.fail_first = 10
            with pytest.raises(ModelUnavailableError):
                remote.next_log_probs((0,))


class TestTextEndpoints:
    def test_tokenize_detokenize_round_trip(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url)
            ids = remote.tokenize("b a c")
            assert ids == [1, 0, 2]
            assert remote.detokenize(ids) == "b a c"


class TestConcurrency:
    def test_concurrent_queries_consistent(self, model):
        with StubLMServer(model) as server:
            remote = connect(server.url, max_concurrency=3)
            contexts = [(i % 4,) for i in range(24)]
            with ThreadPoolExecutor(max_workers=8) as pool:
                results = list(pool.map(remote.next_log_probs, contexts))
            for ctx, got in zip(contexts, results):
                np.testing.assert_array_equal(got, model.next_log_probs(ctx))
