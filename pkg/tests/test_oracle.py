import json
import threading
import time
from types import SimpleNamespace

import httpx
import numpy as np
import pytest

from framecraft.llm import API_KEY_ENV, ChatClient
from framecraft.oracle import (
    BUILTIN_TEMPLATES,
    Framing,
    GeneratorExhausted,
    LLMGenerator,
    LLMOracle,
    LLMScorer,
    NoisyOracle,
    OracleConfig,
    OracleEndpointError,
    OracleLookupError,
    OracleParseError,
    OracleResponse,
    ScriptedGenerator,
    ScriptedScorer,
    TableOracle,
    extract_json_object,
    generate_framing,
    load_template,
    make_generator,
    make_oracle,
    make_scorer,
    parse_probability_vector,
    parse_soundness,
    perturb_belief,
    query_belief,
    render_template,
    score_soundness,
)
from framecraft.core import ValidationError

KEYS = ["good_cheap", "good_expensive", "bad_cheap", "bad_expensive"]


def chat_reply(content, status=200):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


class Endpoint:
    """Mock chat endpoint that records requests and answers from a script."""

    def __init__(self, *answers, delay=0.0):
        self.answers = list(answers)
        self.requests = []
        self.delay = delay
        self.lock = threading.Lock()

    def __call__(self, request):
        with self.lock:
            self.requests.append(json.loads(request.content))
            ans = self.answers.pop(0) if len(self.answers) > 1 else self.answers[0]
        if self.delay:
            time.sleep(self.delay)
        if isinstance(ans, Exception):
            raise ans
        if isinstance(ans, httpx.Response):
            return ans
        return chat_reply(ans)

    def client(self, **kw):
        kw.setdefault("backoff", 0.0)
        return ChatClient("http://llm.test/v1/chat/completions", "test-model",
                          transport=httpx.MockTransport(self), **kw)


def belief_json(p, reasoning="because"):
    return json.dumps({"reasoning": reasoning, "probabilities": dict(zip(KEYS, p))})


class TestParsing:
    def test_exact(self):
        raw = json.dumps(dict(zip(KEYS, [0.1, 0.2, 0.3, 0.4])))
        assert parse_probability_vector(raw, KEYS).tolist() == pytest.approx([0.1, 0.2, 0.3, 0.4])

    def test_key_order_follows_states(self):
        raw = json.dumps({"bad_expensive": 0.4, "good_cheap": 0.1, "bad_cheap": 0.3, "good_expensive": 0.2})
        assert parse_probability_vector(raw, KEYS) == pytest.approx([0.1, 0.2, 0.3, 0.4])

    def test_fenced(self):
        raw = "Here you go:\n```json\n" + belief_json([0.25] * 4) + "\n```\nThanks"
        assert parse_probability_vector(raw, KEYS) == pytest.approx([0.25] * 4)

    def test_renormalizes_inside_band(self):
        p = parse_probability_vector(belief_json([0.25, 0.25, 0.25, 0.249]), KEYS)
        assert p.sum() == pytest.approx(1.0)
        assert p[3] == pytest.approx(0.249 / 0.999)

    @pytest.mark.parametrize("vals,match", [
        ([0.2, 0.2, 0.2, 0.2], "outside"),
        ([0.5, 0.3, 0.3, -0.1], "negative"),
        ([0.5, 0.5, "x", 0.0], "not a number"),
    ])
    def test_rejects(self, vals, match):
        with pytest.raises(OracleParseError, match=match):
            parse_probability_vector(belief_json(vals), KEYS)

    def test_missing_key(self):
        with pytest.raises(OracleParseError, match="lacks"):
            parse_probability_vector(json.dumps({"good_cheap": 1.0}), KEYS)

    def test_no_json(self):
        with pytest.raises(OracleParseError):
            extract_json_object("no braces here")
        with pytest.raises(OracleParseError):
            extract_json_object("{broken: json}")

    def test_soundness(self):
        assert parse_soundness('{"reasoning": "ok", "correctness_score": 0.5}') == 0.5
        assert parse_soundness("reasoning: fine\ncorrectness_score: 1") == 1.0
        with pytest.raises(OracleParseError, match="outside"):
            parse_soundness("correctness_score: 1.5")
        with pytest.raises(OracleParseError, match="no correctness_score"):
            parse_soundness("looks good to me")


class TestTemplates:
    def test_render_leaves_other_braces(self):
        t = 'Say {"a": 1} about {framing} and {unknown}'
        assert render_template(t, framing="X") == 'Say {"a": 1} about X and {unknown}'

    @pytest.mark.parametrize("name", BUILTIN_TEMPLATES)
    def test_builtin_templates_load(self, name):
        text = load_template(name)
        assert "{context}" in text
        if name.startswith("belief") or name == "soundness":
            assert "{framing}" in text
        if name.startswith("belief"):
            assert "{state_keys}" in text

    def test_file_template(self, tmp_path):
        f = tmp_path / "t.txt"
        f.write_text("hello {framing}")
        assert load_template(str(f)) == "hello {framing}"

    def test_unknown_template(self):
        with pytest.raises(ValidationError):
            load_template("nope")


class TestPerturb:
    def test_zero_is_identity(self):
        assert perturb_belief([0.7, 0.3], 0.0, 5).tolist() == [0.7, 0.3]

    def test_golden(self):
        out = perturb_belief([0.7, 0.3], 0.1, 42)
        assert out.tolist() == [0.6582457179124295, 0.34175428208757047]

    def test_bound_and_determinism(self):
        rng = np.random.default_rng(0)
        for seed in range(300):
            b = rng.dirichlet(np.ones(3))
            eps = float(rng.uniform(0, 0.5))
            out = perturb_belief(b, eps, seed)
            assert np.abs(out - b).sum() <= eps + 1e-12
            assert out.min() >= 0 and out.sum() == pytest.approx(1.0)
            assert np.array_equal(out, perturb_belief(b, eps, seed))

    def test_negative_epsilon(self):
        with pytest.raises(ValidationError):
            perturb_belief([1.0], -0.1, 0)


class TestTableAndNoisy:
    def test_lookup(self):
        o = TableOracle({"f1": [0.25, 0.25, 0.25, 0.25]})
        r = query_belief(o, Framing("f1", "anything"))
        assert r.belief.tolist() == [0.25] * 4 and r.source == "table"

    def test_missing(self):
        with pytest.raises(OracleLookupError, match="f9"):
            TableOracle({}).query(Framing("f9", "t"))

    def test_noisy(self):
        o = NoisyOracle(TableOracle({"f1": [0.5, 0.5], "f2": [0.5, 0.5]}), 0.05, seed=7)
        a, b = o.query(Framing("f1", "t")), o.query(Framing("f1", "t"))
        assert a.source == "noisy" and np.array_equal(a.belief, b.belief)
        assert np.abs(a.belief - 0.5).sum() <= 0.05 + 1e-12
        assert not np.array_equal(a.belief, o.query(Framing("f2", "t")).belief)

    def test_response_validation(self):
        with pytest.raises(ValidationError):
            OracleResponse([0.5, 0.6])
        with pytest.raises(ValidationError):
            OracleResponse([1.0], source="magic")


class TestChatClient:
    def test_llm_oracle_round_trip(self):
        ep = Endpoint(belief_json([0.1, 0.2, 0.3, 0.4], "the copy stresses the garden"))
        o = LLMOracle(ep.client(), load_template("belief_realtor"), KEYS)
        r = o.query(Framing("g1", "Sunny garden"), "Henry, first-time buyer")
        assert r.belief == pytest.approx([0.1, 0.2, 0.3, 0.4])
        assert r.reasoning == "the copy stresses the garden" and r.source == "llm"
        req = ep.requests[0]
        assert req["model"] == "test-model" and req["temperature"] == 0.7
        prompt = req["messages"][0]["content"]
        assert "Sunny garden" in prompt and "Henry, first-time buyer" in prompt and "bad_expensive" in prompt

    def test_cache_one_call_per_key(self):
        ep = Endpoint(belief_json([0.25] * 4))
        client = ep.client()
        o = LLMOracle(client, "{framing} {context} {state_keys}", KEYS)
        for _ in range(3):
            o.query(Framing("g1", "same text"), "ctx")
        o.query(Framing("other-id", "same text"), "ctx")
        assert client.network_calls == 1
        o.query(Framing("g2", "new text"), "ctx")
        assert client.network_calls == 2

    def test_concurrent_identical_queries_share_one_call(self):
        ep = Endpoint(belief_json([0.25] * 4), delay=0.2)
        client = ep.client()
        o = LLMOracle(client, "{framing}", KEYS)
        out = []
        threads = [threading.Thread(target=lambda: out.append(o.query(Framing("g", "t")))) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert client.network_calls == 1 and len(out) == 8

    def test_retries_then_succeeds(self):
        ep = Endpoint(httpx.Response(503), httpx.ConnectError("down"), belief_json([0.25] * 4))
        client = ep.client(retries=3)
        LLMOracle(client, "{framing}", KEYS).query(Framing("g", "t"))
        assert client.network_calls == 3

    def test_gives_up_after_retries(self):
        ep = Endpoint(httpx.Response(429))
        client = ep.client(retries=2)
        with pytest.raises(OracleEndpointError, match="3 attempts"):
            client.complete([{"role": "user", "content": "hi"}])
        assert client.network_calls == 3

    def test_client_error_is_not_retried(self):
        ep = Endpoint(httpx.Response(401, text="bad key"))
        client = ep.client(retries=3)
        with pytest.raises(OracleEndpointError, match="401"):
            client.complete([{"role": "user", "content": "hi"}])
        assert client.network_calls == 1

    def test_malformed_reply(self):
        ep = Endpoint(httpx.Response(200, json={"nothing": True}))
        with pytest.raises(OracleEndpointError, match="chat-completion"):
            ep.client().complete([{"role": "user", "content": "hi"}])

    def test_unparseable_belief(self):
        ep = Endpoint("I would rather not say.")
        with pytest.raises(OracleParseError):
            LLMOracle(ep.client(), "{framing}", KEYS).query(Framing("g", "t"))

    def test_api_key_header(self, monkeypatch):
        seen = []

        def handler(request):
            seen.append(request.headers.get("authorization"))
            return chat_reply("ok")

        monkeypatch.setenv(API_KEY_ENV, "sk-test")
        ChatClient("http://x/", "m", transport=httpx.MockTransport(handler)).complete([])
        assert seen == ["Bearer sk-test"]

    def test_repeats_are_averaged(self):
        ep = Endpoint(belief_json([0.4, 0.2, 0.2, 0.2]), belief_json([0.2, 0.2, 0.2, 0.4]))
        client = ep.client()
        r = LLMOracle(client, "{framing}", KEYS, repeats=2).query(Framing("g", "t"))
        assert r.belief == pytest.approx([0.3, 0.2, 0.2, 0.3])
        assert client.network_calls == 2


class TestScorers:
    def test_scripted(self):
        s = ScriptedScorer([("Denver", 0.0), ("garden", 0.5)])
        assert score_soundness(s, Framing("x", "Jeremy works in denver")) == 0.0
        assert score_soundness(s, Framing("x", "A lovely garden")) == 0.5
        assert score_soundness(ScriptedScorer(), Framing("x", "anything")) == 1.0

    def test_rule_range(self):
        with pytest.raises(ValidationError):
            ScriptedScorer([("x", 2.0)])

    def test_llm_scorer(self):
        ep = Endpoint('{"reasoning": "fine", "correctness_score": 0.8}')
        s = LLMScorer(ep.client(), load_template("soundness"))
        assert s.score(Framing("x", "copy"), "facts") == 0.8
        bad = LLMScorer(Endpoint("correctness_score: 1.5").client(), "{framing}")
        with pytest.raises(OracleParseError):
            score_soundness(bad, Framing("x", "copy"))


class TestGenerators:
    def test_scripted_sequence(self):
        g = ScriptedGenerator(["first", "second"])
        h = []
        f1 = generate_framing(g, "", h)
        h.append(SimpleNamespace(framing=f1, feedback=""))
        f2 = generate_framing(g, "", h)
        h.append(SimpleNamespace(framing=f2, feedback=""))
        assert (f1.id, f1.text, f2.id, f2.text) == ("g1", "first", "g2", "second")
        with pytest.raises(GeneratorExhausted):
            generate_framing(g, "", h)

    def test_llm_cold_start(self):
        ep = Endpoint('{"framing": "Bright and quiet."}')
        g = LLMGenerator(ep.client(), load_template("generate_realtor"))
        f = g.generate("Henry's situation", [])
        assert f.text == "Bright and quiet." and f.id == "gen1"
        msgs = ep.requests[0]["messages"]
        assert len(msgs) == 1 and "Henry's situation" in msgs[0]["content"]

    def test_llm_history_is_replayed(self):
        ep = Endpoint('{"framing": "Fourth try."}')
        g = LLMGenerator(ep.client(), "base {context}")
        history = [SimpleNamespace(framing=Framing(f"gen{i}", f"text {i}"), feedback=f"feedback line {i}\nsecond")
                   for i in (1, 2, 3)]
        g.generate("ctx", history)
        payload = json.dumps(ep.requests[0])
        for i in (1, 2, 3):
            assert json.dumps(f"feedback line {i}\nsecond")[1:-1] in payload
        roles = [m["role"] for m in ep.requests[0]["messages"]]
        assert roles == ["user"] + ["assistant", "user"] * 3

    def test_llm_plain_text_reply(self):
        ep = Endpoint("Just a sentence.")
        assert LLMGenerator(ep.client(), "x").generate("", []).text == "Just a sentence."


class TestConfig:
    def test_table_and_noisy(self):
        o = make_oracle({"kind": "noisy", "epsilon": 0.1, "seed": 3,
                         "inner": {"kind": "table", "table": {"f": [0.5, 0.5]}}})
        assert isinstance(o, NoisyOracle) and isinstance(o.inner, TableOracle)

    def test_llm_needs_fields(self):
        with pytest.raises(ValidationError, match="lacks"):
            OracleConfig(kind="llm", endpoint="http://x")
        with pytest.raises(ValidationError, match="unknown oracle kind"):
            OracleConfig(kind="crystal-ball")
        with pytest.raises(ValidationError, match="unknown oracle config fields"):
            OracleConfig.from_dict({"kind": "table", "table": {}, "colour": 1})

    def test_llm_from_config(self):
        ep = Endpoint(belief_json([0.25] * 4))
        o = make_oracle({"kind": "llm", "endpoint": "http://llm.test/", "model": "m", "template": "belief_realtor",
                         "temperature": 0.0}, KEYS, transport=httpx.MockTransport(ep))
        assert o.query(Framing("g", "t")).belief == pytest.approx([0.25] * 4)
        assert ep.requests[0]["temperature"] == 0.0

    def test_scorer_and_generator_factories(self):
        assert isinstance(make_scorer({"kind": "scripted", "rules": [["x", 0.5]]}), ScriptedScorer)
        assert isinstance(make_generator({"kind": "scripted", "framings": ["a"]}), ScriptedGenerator)
        with pytest.raises(ValidationError):
            make_scorer({"kind": "oracle"})
        with pytest.raises(ValidationError):
            make_generator({})
