import json
import struct
import threading

import httpx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risktext.embed import (
    CachedProvider,
    MockProvider,
    RateLimiter,
    RegexTokenizer,
    RemoteProvider,
    daily_embedding_features,
    gpt_features,
    gpt_riskm_features,
    gpt_riskw_features,
    join_strings_list,
    make_provider,
)
from risktext.embed.cache import read_vector
from risktext.errors import ConfigError, DomainError, ProviderError
from risktext.ingest import UserCorpus
from risktext.lexfeat import RiskLexicon

from conftest import corpus_from


class CountingProvider(MockProvider):
    """Mock whose token counts come from a lookup table."""

    def __init__(self, counts, limit):
        super().__init__(dimension=4, token_limit=limit)
        self.counts = counts

    def count_tokens(self, text):
        return self.counts.get(text, super().count_tokens(text))


def test_greedy_packing_hand_case():
    p = CountingProvider({"t1": 4, "t2": 4, "t3": 4}, limit=10)
    assert join_strings_list(["t1", "t2", "t3"], p) == [["t1", "t2"], ["t3"]]


def test_packing_exact_fit_and_identity():
    p = CountingProvider({"a": 5, "b": 5, "c": 1}, limit=10)
    assert join_strings_list(["a", "b", "c"], p) == [["a", "b"], ["c"]]
    assert join_strings_list(["a"], p) == [["a"]]
    assert join_strings_list([], p) == []


def test_oversized_text_is_split_into_maximal_chunks():
    p = MockProvider(dimension=4, token_limit=3)
    batches = join_strings_list(["one two", "a b c d e f g", "z"], p)
    flat = [t for b in batches for t in b]
    assert "".join(flat[1:-1]) == "a b c d e f g"
    assert [p.count_tokens(t) for t in flat[1:-1]] == [3, 3, 1]
    assert batches == [["one two"], ["a b c "], ["d e f "], ["g", "z"]]


@given(st.lists(st.text(alphabet="ab .!\n", max_size=30), max_size=12), st.integers(1, 8))
@settings(max_examples=200)
def test_batching_property(texts, limit):
    p = MockProvider(dimension=4, token_limit=limit)
    batches = join_strings_list(texts, p)
    for b in batches:
        assert sum(p.count_tokens(t) for t in b) <= limit
    assert "".join(t for b in batches for t in b) == "".join(texts)
    # greedy: the first piece of every later batch would have overflowed the previous one
    for prev, nxt in zip(batches, batches[1:]):
        assert sum(p.count_tokens(t) for t in prev) + p.count_tokens(nxt[0]) > limit


def test_regex_tokenizer():
    tok = RegexTokenizer()
    assert tok.count("") == 0
    assert tok.count("Hello, world!") == 4
    assert tok.split("a b c", 2) == ["a b ", "c"]
    assert tok.words("Hi THERE") == ["hi", "there"]


def test_mock_is_pure_and_unit_norm():
    a, b = MockProvider(seed=3), MockProvider(seed=3)
    va, vb = a.embed(["same text"])[0], b.embed(["same text"])[0]
    assert np.array_equal(va, vb)
    assert np.linalg.norm(va) == pytest.approx(1.0)
    assert not np.array_equal(va, MockProvider(seed=4).embed(["same text"])[0])
    assert len(a.embed(["x", "y", "z"])) == 3


def test_mock_alignment_via_decode():
    p = MockProvider(record=True)
    texts = [f"message number {i}" for i in range(20)] + ["!!", "?"]
    for t, v in zip(texts, p.embed(texts)):
        assert p.decode(v) == t


def test_rate_limiter_sliding_window():
    now = [0.0]
    dispatched = []

    def sleep(dt):
        now[0] += dt

    lim = RateLimiter(5, clock=lambda: now[0], sleep=sleep)
    rng = np.random.default_rng(0)
    for _ in range(60):
        now[0] += float(rng.exponential(3.0))
        dispatched.append(lim.acquire())
    times = np.array(dispatched)
    assert np.all(np.diff(times) >= 0)
    for t in times:
        assert np.sum((times >= t) & (times < t + 60.0)) <= 5


def test_rate_limiter_threads():
    now = [0.0]
    lock = threading.Lock()

    def sleep(dt):
        with lock:
            now[0] += dt

    lim = RateLimiter(3, clock=lambda: now[0], sleep=sleep)
    out = []
    threads = [threading.Thread(target=lambda: out.append(lim.acquire())) for _ in range(9)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    times = np.sort(out)
    for t in times:
        assert np.sum((times >= t) & (times < t + 60.0)) <= 3


def _remote(handler, **kw):
    sleeps = []
    clock = [0.0]

    def sleep(dt):
        sleeps.append(dt)
        clock[0] += dt

    p = RemoteProvider("https://embed.test/v1/embeddings", dimension=3, transport=httpx.MockTransport(handler),
                       clock=lambda: clock[0], sleep=sleep, api_key="k", **kw)
    return p, sleeps


def _ok(request):
    body = json.loads(request.content)
    data = [{"index": i, "embedding": [float(len(t)), float(i), 1.0]} for i, t in enumerate(body["input"])]
    return httpx.Response(200, json={"data": list(reversed(data))})


def test_remote_wire_format_and_alignment():
    seen = []

    def handler(request):
        seen.append(request)
        return _ok(request)

    p, _ = _remote(handler, inputs_per_request=2)
    vecs = p.embed(["a", "bbb", "cc"])
    assert [v[0] for v in vecs] == [1.0, 3.0, 2.0]
    assert len(seen) == 2
    body = json.loads(seen[0].content)
    assert body == {"model": "text-embedding-ada-002", "input": ["a", "bbb"]}
    assert seen[0].headers["authorization"] == "Bearer k"


def test_remote_retries_with_capped_backoff():
    calls = [0]

    def handler(request):
        calls[0] += 1
        return httpx.Response(429) if calls[0] <= 4 else _ok(request)

    p, sleeps = _remote(handler, max_retries=5, backoff_base=1.0, backoff_max=3.0)
    assert p.embed(["x"])[0][0] == 1.0
    assert sleeps == [1.0, 2.0, 3.0, 3.0]


def test_remote_gives_up_and_reports_context():
    p, _ = _remote(lambda r: httpx.Response(503), max_retries=2)
    with pytest.raises(ProviderError, match="3 attempts"):
        p.embed(["x"])
    corpus = corpus_from({0: ["hello"]})
    with pytest.raises(ProviderError) as info:
        gpt_features(corpus, p)
    assert info.value.user_id == "u1" and info.value.batch_index == 0


def test_remote_client_errors_are_not_retried():
    calls = [0]

    def handler(request):
        calls[0] += 1
        return httpx.Response(401, text="bad key")

    p, _ = _remote(handler)
    with pytest.raises(ProviderError, match="401"):
        p.embed(["x"])
    assert calls[0] == 1


def test_remote_shape_checks():
    p, _ = _remote(lambda r: httpx.Response(200, json={"embeddings": [[1.0, 2.0]]}))
    with pytest.raises(ProviderError, match="shape"):
        p.embed(["x"])
    p, _ = _remote(lambda r: httpx.Response(200, json={"oops": 1}))
    with pytest.raises(ProviderError):
        p.embed(["x"])


def test_remote_api_key_from_env(monkeypatch):
    monkeypatch.setenv("EMBED_API_KEY", "from-env")
    p = RemoteProvider("https://e.test", transport=httpx.MockTransport(_ok))
    assert p.api_key == "from-env"


def test_make_provider():
    assert isinstance(make_provider({"kind": "mock", "dimension": 8}), MockProvider)
    with pytest.raises(ConfigError):
        make_provider({"kind": "mock", "colour": 1})
    with pytest.raises(ConfigError):
        make_provider({"kind": "remote"})
    with pytest.raises(ConfigError):
        make_provider({"kind": "psychic"})


def test_cache_layout_and_hits(tmp_path):
    inner = MockProvider(dimension=5)
    cached = CachedProvider(inner, tmp_path)
    first = cached.embed(["a b", "c"])
    assert (cached.misses, cached.hits, inner.requests) == (2, 0, 1)
    raw = cached.path_for("a b").read_bytes()
    assert struct.unpack("<I", raw[:4]) == (5,) and len(raw) == 4 + 5 * 4
    again = CachedProvider(MockProvider(dimension=5), tmp_path)
    second = again.embed(["a b", "c"])
    assert again.inner.requests == 0 and again.hits == 2
    assert all(np.array_equal(x, y) for x, y in zip(first, second))
    np.testing.assert_array_equal(read_vector(cached.path_for("c")), first[1])
    # a different provider config never reads these entries
    other = CachedProvider(MockProvider(dimension=5, seed=9), tmp_path)
    other.embed(["c"])
    assert other.misses == 1


def test_cache_ignores_corrupt_entries(tmp_path):
    cached = CachedProvider(MockProvider(dimension=3), tmp_path)
    cached.path_for("x").write_bytes(b"\x03\x00")
    cached.embed(["x"])
    assert cached.misses == 1 and read_vector(cached.path_for("x")) is not None


LEX = RiskLexicon.from_mapping({"d": ["meth", "party"], "a": ["beer"]})


def test_gpt_single_and_two_batches():
    p = MockProvider(record=True, token_limit=1000)
    c = corpus_from({0: ["hello there", "beer time"], 1: ["bye"]})
    (single,) = p.embed(["hello there\nbeer time\nbye"])
    np.testing.assert_allclose(gpt_features(c, p), single)
    p2 = MockProvider(token_limit=4)
    v1, v2 = p2.embed(["hello there\nbeer time", "bye"])
    np.testing.assert_allclose(gpt_features(c, p2), (v1 + v2) / 2)


def test_gpt_applies_replication():
    p = MockProvider()
    c = corpus_from({0: [("a", "grindr"), ("b", "tinder")]}, weights={"grindr": 2})
    gpt_features(c, p)
    assert p.inputs[-1] == "a\na\nb"


def test_gpt_requires_messages():
    with pytest.raises(DomainError):
        gpt_features(UserCorpus("u", {}), MockProvider())


def test_riskw_stream():
    p = MockProvider()
    c = corpus_from({0: ["meth and a party", "hi"], 1: ["more meth"]})
    v = gpt_riskw_features(c, LEX, p)
    assert p.inputs == ["meth party meth"]
    np.testing.assert_array_equal(v, MockProvider().embed(["meth party meth"])[0])
    assert not gpt_riskw_features(corpus_from({0: ["hello"]}), LEX, p).any()
    same = corpus_from({0: ["meth party"], 3: ["meth"]}, user="other")
    np.testing.assert_array_equal(gpt_riskw_features(same, LEX, p), v)


def test_riskm_scaling():
    p = MockProvider()
    c = corpus_from({0: ["meth one", "beer two"] + [f"plain {i}" for i in range(8)]})
    (m,) = p.embed(["meth one\nbeer two"])
    np.testing.assert_allclose(gpt_riskm_features(c, LEX, p), 0.2 * m)
    allrisk = corpus_from({0: ["meth", "beer"]})
    np.testing.assert_allclose(gpt_riskm_features(allrisk, LEX, p), gpt_features(allrisk, p))
    assert not gpt_riskm_features(corpus_from({0: ["hi"]}), LEX, p).any()


def test_daily_embedding():
    p = MockProvider()
    one = corpus_from({0: ["a", "b"]})
    np.testing.assert_allclose(daily_embedding_features(one, p), p.embed(["a\nb"])[0])
    two = corpus_from({0: ["a", "b"], 1: ["c"]})
    d1, d2 = p.embed(["a\nb", "c"])
    np.testing.assert_allclose(daily_embedding_features(two, p), (d1 + d2) / 2)
    moved = corpus_from({0: ["a"], 1: ["b", "c"]})
    assert not np.allclose(daily_embedding_features(moved, p), daily_embedding_features(two, p))


def test_scale_linearity():
    c = corpus_from({0: ["a b", "c"], 1: ["d"]})
    base = gpt_features(c, MockProvider(token_limit=2))
    scaled = gpt_features(c, MockProvider(token_limit=2, scale=3.0))
    np.testing.assert_allclose(scaled, 3.0 * base, rtol=1e-12)


def test_families_deterministic():
    c = corpus_from({0: ["meth party", "x"], 1: ["beer"]}, weights={"instagram": 2})
    for f in (lambda p: gpt_features(c, p), lambda p: gpt_riskm_features(c, LEX, p),
              lambda p: gpt_riskw_features(c, LEX, p), lambda p: daily_embedding_features(c, p)):
        assert f(MockProvider(seed=1)).tobytes() == f(MockProvider(seed=1)).tobytes()
