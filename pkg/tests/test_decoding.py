import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmstub import EOS, RandomLM, TableLM, enumerate_sequences
from paraproto.decoding import (
    ConstraintSet,
    DecodeConfig,
    SynonymBigramLM,
    beam_search,
    build_bigram_constraints,
    build_unigram_constraints,
    diverse_beam_search,
    generate_paraphrases,
    mask_probabilities,
    select_most_diverse,
    stub_backtranslate,
)
from paraproto.synth import default_synonym_table


class TestBeamSearch:
    def test_width_one_is_greedy(self):
        lm = RandomLM(("a", "b", "c"), seed=1, eos_weight=0.2)
        source = ["a", "b"]
        beams = beam_search(lm, source, beam_width=1, max_len=4)
        assert len(beams) == 1
        # replay greedily
        tokens = []
        score = 0.0
        for _ in range(4):
            logprobs, eos_lp = lm.next_logprobs(source, tokens)
            best = int(np.argmax(logprobs))
            candidates = [(logprobs[best], lm.vocab[best])]
            if tokens:
                candidates.append((eos_lp, EOS))
            best_lp, best_tok = max(candidates)
            score += best_lp
            if best_tok == EOS:
                break
            tokens.append(best_tok)
        assert [lm.vocab[i] for i in beams[0].tokens] == tokens
        assert beams[0].score == pytest.approx(score)

    def test_matches_exhaustive_enumeration(self):
        lm = RandomLM(("a", "b", "c"), seed=7, eos_weight=0.6)
        source = ["b", "c"]
        oracle = enumerate_sequences(lm, source, max_len=3, constraints=ConstraintSet.none())
        beams = beam_search(lm, source, beam_width=100, max_len=3)
        assert beams[0].tokens == oracle[0][1]
        assert beams[0].score == pytest.approx(oracle[0][0])
        # the whole frontier matches, not just the top
        got = [(b.tokens, b.finished) for b in beams]
        expected = [(tokens, fin) for _, tokens, fin in oracle[: len(got)]]
        assert got == expected

    def test_banned_first_token_changes_output(self):
        lm = RandomLM(("a", "b", "c"), seed=3, eos_weight=0.2)
        source = ["a"]
        free = beam_search(lm, source, 1, 3)
        first = free[0].tokens[0]
        banned = beam_search(
            lm, source, 1, 3, ConstraintSet(banned_unigrams=frozenset({lm.vocab[first]}))
        )
        assert banned[0].tokens[0] != first
        assert lm.vocab[first] not in [lm.vocab[i] for i in banned[0].tokens]

    def test_all_tokens_banned_errors(self):
        lm = RandomLM(("a", "b"), seed=0)
        constraints = ConstraintSet(banned_unigrams=frozenset({"a", "b"}))
        with pytest.raises(ValueError, match="exhaust"):
            beam_search(lm, ["a"], 2, 3, constraints)

    def test_invalid_arguments(self):
        lm = RandomLM(("a",), seed=0)
        with pytest.raises(ValueError):
            beam_search(lm, ["a"], 0, 3)
        with pytest.raises(ValueError):
            beam_search(lm, ["a"], 1, 0)

    def test_deterministic(self):
        lm = RandomLM(("a", "b", "c", "d"), seed=5)
        a = beam_search(lm, ["a", "d"], 4, 5)
        b = beam_search(lm, ["a", "d"], 4, 5)
        assert a == b


class TestDiverseBeamSearch:
    def test_single_group_equals_beam_search(self):
        lm = RandomLM(("a", "b", "c"), seed=11, eos_weight=0.4)
        source = ["c", "a"]
        for penalty in (0.0, 0.5, 2.0):
            groups = diverse_beam_search(
                lm, source, num_beams=4, num_groups=1, diversity_penalty=penalty, max_len=4
            )
            plain = beam_search(lm, source, beam_width=4, max_len=4)
            assert [b.tokens for b in groups[0].beams] == [b.tokens for b in plain]
            assert [b.score for b in groups[0].beams] == pytest.approx(
                [b.score for b in plain]
            )

    def test_zero_penalty_groups_collapse(self):
        lm = RandomLM(("a", "b", "c"), seed=13, eos_weight=0.4)
        groups = diverse_beam_search(
            lm, ["a", "b"], num_beams=6, num_groups=3, diversity_penalty=0.0, max_len=4
        )
        first = [b.tokens for b in groups[0].beams]
        for group in groups[1:]:
            assert [b.tokens for b in group.beams] == first

    def test_hand_traced_two_group_divergence(self):
        # two near-tied first tokens: log(0.55) - log(0.45) ~ 0.2 < penalty 0.5
        lm = TableLM(
            ("a", "b"),
            table={(): {"a": 0.55, "b": 0.45}},
            default={"a": 0.1, "b": 0.1, EOS: 0.8},
        )
        groups = diverse_beam_search(
            lm, ["a"], num_beams=2, num_groups=2, diversity_penalty=0.5, max_len=2
        )
        first_tokens = [group.beams[0].tokens[0] for group in groups]
        assert lm.vocab[first_tokens[0]] == "a"
        assert lm.vocab[first_tokens[1]] == "b"

    def test_low_penalty_keeps_groups_identical(self):
        lm = TableLM(
            ("a", "b"),
            table={(): {"a": 0.55, "b": 0.45}},
            default={"a": 0.1, "b": 0.1, EOS: 0.8},
        )
        groups = diverse_beam_search(
            lm, ["a"], num_beams=2, num_groups=2, diversity_penalty=0.05, max_len=2
        )
        firsts = [lm.vocab[group.beams[0].tokens[0]] for group in groups]
        assert firsts == ["a", "a"]

    def test_divisibility_enforced(self):
        lm = RandomLM(("a", "b"), seed=0)
        with pytest.raises(ValueError, match="multiple"):
            diverse_beam_search(lm, ["a"], num_beams=5, num_groups=2,
                                diversity_penalty=0.5, max_len=3)


class TestMaskProbabilities:
    def test_flat(self):
        np.testing.assert_allclose(mask_probabilities(10, 0.7, "flat"), 0.7)

    def test_down_ramp_endpoints(self):
        probs = mask_probabilities(10, 0.7, "down")
        assert probs[0] == pytest.approx(1.0)
        assert probs[-1] == pytest.approx(0.4)
        assert all(a >= b for a, b in zip(probs, probs[1:]))

    def test_up_is_mirror_of_down(self):
        down = mask_probabilities(7, 0.7, "down")
        up = mask_probabilities(7, 0.7, "up")
        np.testing.assert_allclose(up, down[::-1])

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(min_value=1, max_value=40),
        st.floats(min_value=0.0, max_value=1.0),
        st.sampled_from(["flat", "down", "up"]),
    )
    def test_mean_is_pmask_and_in_range(self, n, p, curve):
        probs = mask_probabilities(n, p, curve)
        assert probs.mean() == pytest.approx(p, abs=1e-9)
        assert np.all(probs >= -1e-12) and np.all(probs <= 1 + 1e-12)


class TestUnigramConstraints:
    def test_pmask_zero_bans_nothing(self):
        cs = build_unigram_constraints(["a", "b"], 0.0, "flat", np.random.default_rng(0))
        assert not cs.banned_unigrams

    def test_pmask_one_bans_everything(self):
        for curve in ("flat", "down", "up"):
            cs = build_unigram_constraints(
                ["a", "b", "c"], 1.0, curve, np.random.default_rng(0)
            )
            assert cs.banned_unigrams == {"a", "b", "c"}

    def test_monte_carlo_frequency(self):
        # p_mask found by the upstream linear search: 0.7
        tokens = [f"t{i}" for i in range(10)]
        rng = np.random.default_rng(123)
        total = 0
        trials = 10_000
        for _ in range(trials):
            cs = build_unigram_constraints(tokens, 0.7, "flat", rng)
            total += len(cs.banned_unigrams)
        assert total / (trials * 10) == pytest.approx(0.7, abs=0.02)

    def test_positional_curves_bias_positions(self):
        tokens = [f"t{i}" for i in range(8)]
        rng = np.random.default_rng(7)
        first, last = 0, 0
        for _ in range(4000):
            cs = build_unigram_constraints(tokens, 0.5, "down", rng)
            first += "t0" in cs.banned_unigrams
            last += "t7" in cs.banned_unigrams
        assert first / 4000 == pytest.approx(1.0, abs=0.03)  # ramp top = min(1, 2*0.5)
        assert last / 4000 == pytest.approx(0.0, abs=0.03)


class TestBigramConstraints:
    def test_adjacent_pairs(self):
        cs = build_bigram_constraints(["a", "b", "c"])
        assert cs.banned_bigrams == {("a", "b"), ("b", "c")}
        assert not cs.banned_unigrams

    def test_single_token_empty(self):
        assert not build_bigram_constraints(["a"]).banned_bigrams

    def test_repeated_bigram_once(self):
        cs = build_bigram_constraints(["a", "b", "a", "b"])
        assert cs.banned_bigrams == {("a", "b"), ("b", "a")}


class TestSelectMostDiverse:
    def test_verbatim_copy_loses(self):
        from paraproto.decoding import Beam

        vocab = ("x", "y", "z")
        copy = Beam(tokens=(0, 1), score=-1.0, raw_score=-1.0, finished=True)
        other = Beam(tokens=(2,), score=-2.0, raw_score=-2.0, finished=True)
        best = select_most_diverse([copy, other], ["x", "y"], vocab)
        assert best is other

    def test_all_identical_returns_that_beam(self):
        from paraproto.decoding import Beam

        vocab = ("x", "y")
        beams = [Beam(tokens=(0,), score=-1.0, raw_score=-1.0, finished=True)] * 3
        assert select_most_diverse(beams, ["x"], vocab).tokens == (0,)

    def test_lowest_bleu_wins_hand_computed(self):
        from paraproto.decoding import Beam
        from paraproto.metrics import bleu

        vocab = ("the", "cat", "sat", "dog", "ran")
        source = ["the", "cat", "sat"]
        seqs = [(0, 1, 2), (0, 3, 4), (0, 1, 4)]
        beams = [Beam(tokens=s, score=-1.0, raw_score=-1.0, finished=True) for s in seqs]
        bleus = [bleu([vocab[i] for i in s], [source], smooth=True) for s in seqs]
        best = select_most_diverse(beams, source, vocab)
        assert best.tokens == seqs[int(np.argmin(bleus))]

    def test_bleu_tie_broken_by_raw_score(self):
        from paraproto.decoding import Beam

        vocab = ("p", "q", "r")
        source = ["zzz"]
        low = Beam(tokens=(0,), score=-5.0, raw_score=-5.0, finished=True)
        high = Beam(tokens=(1,), score=-1.0, raw_score=-1.0, finished=True)
        assert select_most_diverse([low, high], source, vocab) is high


@pytest.fixture(scope="module")
def toy_lm():
    corpus = [
        "can you play the music",
        "please play my songs",
        "i want to book a flight",
        "book the flight now",
        "check my balance please",
        "can you check the balance",
    ]
    return SynonymBigramLM(corpus, default_synonym_table())


class TestSynonymBigramLM:
    def test_scores_normalized(self, toy_lm):
        logprobs, eos = toy_lm.next_logprobs(["play", "the", "music"], [])
        total = np.exp(logprobs).sum() + np.exp(eos)
        assert total == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.isfinite(logprobs)) and np.isfinite(eos)

    def test_every_corpus_token_scorable(self, toy_lm):
        for token in ("can", "music", "flight", "balance"):
            assert token in toy_lm.vocab

    def test_deterministic(self, toy_lm):
        a = toy_lm.next_logprobs(["play", "the", "music"], ["please"])
        b = toy_lm.next_logprobs(["play", "the", "music"], ["please"])
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]

    def test_copy_pointer_prefers_next_source_token(self, toy_lm):
        logprobs, _ = toy_lm.next_logprobs(["play", "the", "music"], ["play"])
        assert toy_lm.vocab[int(np.argmax(logprobs))] == "the"

    def test_invalid_mixture_rejected(self):
        with pytest.raises(ValueError):
            SynonymBigramLM(["a b"], bigram_weight=0.9, copy_weight=0.9,
                            synonym_weight=0.0, uniform_weight=0.0)


class TestStubBacktranslate:
    def test_substitutes_synonyms(self):
        synonyms = {**default_synonym_table(), "phone": ("telephone", "handset")}
        source = ["i", "am", "not", "sure", "where", "my", "phone", "is"]
        variants = stub_backtranslate(source, synonyms, 5)
        assert len(variants) == 5
        assert any(v != source for v in variants)
        for variant in variants:
            assert len(variant) == len(source)
            # near-copy: at most a couple of positions changed
            changed = sum(1 for a, b in zip(source, variant) if a != b)
            assert changed <= 2

    def test_deterministic(self):
        synonyms = default_synonym_table()
        src = ["play", "the", "music"]
        assert stub_backtranslate(src, synonyms, 5) == stub_backtranslate(src, synonyms, 5)


class TestGenerateParaphrases:
    def test_stub_bt_near_copies(self, toy_lm):
        out = generate_paraphrases(
            toy_lm, "can you play the music", 5, "stub_bt",
            DecodeConfig(), np.random.default_rng(0),
        )
        assert len(out) == 5
        assert any("play" not in o.split() or "music" not in o.split() for o in out)

    def test_unigram_full_mask_excludes_source_tokens(self, toy_lm):
        config = DecodeConfig(p_mask=1.0)
        source_tokens = set("can you play the music".split())
        out = generate_paraphrases(
            toy_lm, "can you play the music", 5, "dbs_unigram", config,
            np.random.default_rng(1),
        )
        for text in out:
            assert not set(text.split()) & source_tokens

    def test_bigram_outputs_avoid_source_bigrams(self, toy_lm):
        source = "can you play the music"
        pairs = set(zip(source.split(), source.split()[1:]))
        out = generate_paraphrases(
            toy_lm, source, 5, "dbs_bigram", DecodeConfig(), np.random.default_rng(2)
        )
        for text in out:
            toks = text.split()
            assert not set(zip(toks, toks[1:])) & pairs

    def test_group_count_must_match(self, toy_lm):
        with pytest.raises(ValueError, match="num_groups"):
            generate_paraphrases(
                toy_lm, "play the music", 3, "dbs", DecodeConfig(), np.random.default_rng(0)
            )

    def test_deterministic_given_seed(self, toy_lm):
        cfg = DecodeConfig()
        a = generate_paraphrases(toy_lm, "check my balance please", 5, "dbs_unigram",
                                 cfg, np.random.default_rng(5))
        b = generate_paraphrases(toy_lm, "check my balance please", 5, "dbs_unigram",
                                 cfg, np.random.default_rng(5))
        assert a == b

    def test_unknown_strategy_rejected(self, toy_lm):
        with pytest.raises(ValueError):
            generate_paraphrases(toy_lm, "play", 5, "nope", DecodeConfig(),
                                 np.random.default_rng(0))


class TestConstraintSoundnessFuzz:
    def test_no_banned_output_across_fuzzed_decodes(self):
        lm = RandomLM(tuple("abcdef"), seed=42, eos_weight=0.3)
        rng = np.random.default_rng(99)
        for trial in range(300):
            source = [lm.vocab[i] for i in rng.integers(0, 6, size=rng.integers(2, 6))]
            p_mask = float(rng.random())
            curve = ("flat", "down", "up")[trial % 3]
            uni = build_unigram_constraints(source, p_mask, curve, rng)
            bi = build_bigram_constraints(source)
            constraints = ConstraintSet(
                banned_unigrams=uni.banned_unigrams, banned_bigrams=bi.banned_bigrams
            )
            if set(lm.vocab) <= constraints.banned_unigrams:
                continue
            groups = diverse_beam_search(
                lm, source, num_beams=4, num_groups=2, diversity_penalty=0.5,
                max_len=5, constraints=constraints,
            )
            for group in groups:
                for beam in group.beams:
                    toks = beam.texts(lm.vocab)
                    assert not set(toks) & constraints.banned_unigrams
                    assert not set(zip(toks, toks[1:])) & constraints.banned_bigrams


class TestDecodeConfig:
    def test_round_trip_text(self):
        cfg = DecodeConfig(num_beams=9, num_groups=3, diversity_penalty=0.25,
                           p_mask=0.4, curve="down", strategy="dbs_bigram",
                           max_len=12, seed=4)
        assert DecodeConfig.from_text(cfg.to_text()) == cfg

    def test_default_max_len_follows_source(self):
        cfg = DecodeConfig()
        assert cfg.resolved_max_len(6) == 17
        assert DecodeConfig(max_len=9).resolved_max_len(6) == 9

    def test_validation(self):
        with pytest.raises(ValueError):
            DecodeConfig(strategy="bogus")
        with pytest.raises(ValueError):
            DecodeConfig(p_mask=1.5)
        with pytest.raises(ValueError):
            DecodeConfig(curve="sideways")
        with pytest.raises(ValueError):
            DecodeConfig(diversity_penalty=-0.1)
        with pytest.raises(ValueError):
            DecodeConfig.from_text("nonsense_key=1\n")
