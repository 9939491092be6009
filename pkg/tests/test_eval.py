import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paralow.core import Vocabulary
from paralow.ensemble import EnsembleConfig
from paralow.errors import InvalidInputError
from paralow.evalharness import (
    LabeledExample,
    PromptTemplate,
    ScatterRow,
    avg_prompt_perplexity,
    classify,
    evaluate,
    instantiate_prompt,
    label_scores,
    read_dataset,
    read_templates,
    scatter_export,
    scatter_rank_correlation,
    sweep_alpha,
    write_report_csv,
    write_scatter_csv,
    write_sweep_csv,
)
from paralow.evalharness import ReportRow
from paralow.toy import TableLM, WhitespaceTokenizer, train_ngram


def chain_lm(first_probs: dict[str, float]) -> TableLM:
    """Order-1 model: deterministic chain after the first token.

    The whole prompt "w t Choices: c1, c2. Answer:" costs only the first
    step, whose probability is set per first word, so instance
    perplexities are exact powers of two.
    """
    tokens = ("q", "r", "t", "Choices:", "c1,", "c2.", "Answer:", "eos")
    vocab = Vocabulary(tokens=tokens, eos_id=7)
    follow = {"q": "t", "r": "t", "t": "Choices:", "Choices:": "c1,", "c1,": "c2.", "c2.": "Answer:"}
    idx = {t: i for i, t in enumerate(tokens)}
    rows = {}
    for prev, nxt in follow.items():
        row = [0.0] * len(tokens)
        row[idx[nxt]] = 1.0
        rows[(idx[prev],)] = row
    default = [0.0] * len(tokens)
    for name, p in first_probs.items():
        default[idx[name]] = p
    default[idx["eos"]] = 1.0 - sum(first_probs.values())
    return TableLM(vocab, 1, rows, default)


@pytest.fixture
def yes_no_model() -> TableLM:
    # always prefers "yes"; knows enough words to tokenize eval prompts
    tokens = ("yes", "no", "blue", "<unk>", "eos")
    vocab = Vocabulary(tokens=tokens, eos_id=4)
    return TableLM(vocab, 0, {}, [0.5, 0.2, 0.1, 0.1, 0.1])


@pytest.fixture
def yes_no_template() -> PromptTemplate:
    return PromptTemplate("blue", ("yes", "no"))


class TestInstantiatePrompt:
    def test_layout_and_suffix(self):
        tmpl = PromptTemplate("Classify the sentiment.", ("positive", "negative"))
        ex = LabeledExample("great movie", "positive")
        assert (
            instantiate_prompt(tmpl, ex)
            == "great movie\nClassify the sentiment.\nChoices: positive, negative. Answer: "
        )

    def test_three_choice_suffix(self):
        tmpl = PromptTemplate("p", ("X", "Y", "Z"))
        assert tmpl.choices_suffix == "Choices: X, Y, Z. Answer: "

    def test_too_few_choices_rejected(self):
        with pytest.raises(InvalidInputError):
            PromptTemplate("p", ("only",))
        with pytest.raises(InvalidInputError):
            PromptTemplate("p", ())

    def test_empty_input_rejected(self):
        tmpl = PromptTemplate("p", ("a", "b"))
        with pytest.raises(InvalidInputError):
            instantiate_prompt(tmpl, LabeledExample("", "a"))


class TestAvgPromptPerplexity:
    def test_uniform_model_gives_vocab_size(self):
        tokens = ("q", "r", "t", "Choices:", "c1,", "c2.", "Answer:", "eos")
        vocab = Vocabulary(tokens=tokens, eos_id=7)
        uniform = TableLM(vocab, 0, {}, [1.0 / 8] * 8)
        tmpl = PromptTemplate("t", ("c1", "c2"))
        examples = [LabeledExample("q", "c1"), LabeledExample("r q", "c2")]
        assert avg_prompt_perplexity(uniform, tmpl, examples) == pytest.approx(8.0, abs=1e-9)

    def test_arithmetic_mean_of_instances(self):
        # first-step probabilities 2^-12 and 2^-24 over 6 tokens give
        # instance perplexities 4.0 and 16.0; the report averages to 10.
        model = chain_lm({"q": 2.0**-12, "r": 2.0**-24})
        tmpl = PromptTemplate("t", ("c1", "c2"))
        examples = [LabeledExample("q", "c1"), LabeledExample("r", "c1")]
        assert avg_prompt_perplexity(model, tmpl, examples) == pytest.approx(10.0, abs=1e-9)

    def test_single_example_equals_its_perplexity(self):
        model = chain_lm({"q": 2.0**-12, "r": 2.0**-24})
        tmpl = PromptTemplate("t", ("c1", "c2"))
        assert avg_prompt_perplexity(model, tmpl, [LabeledExample("q", "c1")]) == pytest.approx(4.0, abs=1e-9)

    def test_copies_average_to_the_single_value_exactly(self):
        model = chain_lm({"q": 2.0**-12, "r": 2.0**-24})
        tmpl = PromptTemplate("t", ("c1", "c2"))
        one = avg_prompt_perplexity(model, tmpl, [LabeledExample("q", "c1")])
        for n in (2, 3, 5, 7):
            many = avg_prompt_perplexity(model, tmpl, [LabeledExample("q", "c1")] * n)
            assert many == one

    def test_no_examples_rejected(self, yes_no_model, yes_no_template):
        with pytest.raises(InvalidInputError):
            avg_prompt_perplexity(yes_no_model, yes_no_template, [])


class TestClassify:
    def test_picks_highest_probability_label(self, yes_no_model):
        # P(yes)=0.5 beats P(no)=0.2 regardless of context
        assert classify(yes_no_model, (2,), [(0,), (1,)]) == 0
        assert classify(yes_no_model, (2,), [(1,), (0,)]) == 1

    def test_identical_labels_tie_to_first(self, yes_no_model):
        assert classify(yes_no_model, (2,), [(1,), (1,)]) == 0

    def test_uniform_model_ties_to_index_zero(self):
        vocab = Vocabulary(tokens=("a", "b", "c", "eos"), eos_id=3)
        uniform = TableLM(vocab, 0, {}, [0.25] * 4)
        assert classify(uniform, (0,), [(1,), (2,), (0,)]) == 0

    def test_empty_label_rejected(self, yes_no_model):
        with pytest.raises(InvalidInputError):
            classify(yes_no_model, (2,), [(0,), ()])

    def test_needs_two_labels(self, yes_no_model):
        with pytest.raises(InvalidInputError):
            classify(yes_no_model, (2,), [(0,)])

    def test_mean_log_prob_avoids_length_bias(self):
        # a two-token label of per-step probability 0.5 outranks a
        # one-token label of probability 0.3 (mean -0.69 vs -1.20)
        vocab = Vocabulary(tokens=("a", "b", "eos"), eos_id=2)
        m = TableLM(vocab, 0, {}, [0.5, 0.3, 0.2])
        assert classify(m, (0,), [(1,), (0, 0)]) == 1

    @given(shift=st.floats(-3.0, 3.0), seed=st.integers(0, 50))
    @settings(max_examples=30, deadline=None)
    def test_argmax_shift_invariance(self, shift, seed):
        rng = np.random.default_rng(seed)
        scores = list(rng.normal(size=4))
        shifted = [s + shift for s in scores]
        assert int(np.argmax(scores)) == int(np.argmax(shifted))


class TestEvaluate:
    def _dataset(self):
        return [
            LabeledExample("blue", "yes"),
            LabeledExample("blue blue", "yes"),
            LabeledExample("blue yes", "yes"),
            LabeledExample("blue no", "no"),
        ]

    def test_three_of_four_gives_075(self, yes_no_model, yes_no_template):
        report = evaluate(yes_no_model, yes_no_template, self._dataset())
        assert report.accuracy == 0.75
        assert report.n == 4

    def test_single_correct_instance(self, yes_no_model, yes_no_template):
        report = evaluate(yes_no_model, yes_no_template, [LabeledExample("blue", "yes")])
        assert report.accuracy == 1.0

    def test_deterministic(self, yes_no_model, yes_no_template):
        a = evaluate(yes_no_model, yes_no_template, self._dataset())
        b = evaluate(yes_no_model, yes_no_template, self._dataset())
        assert a == b

    def test_parallel_equals_sequential(self, yes_no_model, yes_no_template):
        seq = evaluate(yes_no_model, yes_no_template, self._dataset(), workers=1)
        par = evaluate(yes_no_model, yes_no_template, self._dataset(), workers=4)
        assert seq == par

    def test_one_flip_moves_accuracy_by_quarter(self, yes_no_model, yes_no_template):
        base = evaluate(yes_no_model, yes_no_template, self._dataset())
        flipped = self._dataset()
        flipped[3] = LabeledExample("blue no", "yes")
        now = evaluate(yes_no_model, yes_no_template, flipped)
        assert now.accuracy - base.accuracy == 1.0 / 4.0

    def test_gold_label_must_be_declared(self, yes_no_model, yes_no_template):
        with pytest.raises(InvalidInputError):
            evaluate(yes_no_model, yes_no_template, [LabeledExample("blue", "maybe")])

    def test_empty_dataset_rejected(self, yes_no_model, yes_no_template):
        with pytest.raises(InvalidInputError):
            evaluate(yes_no_model, yes_no_template, [])

    def test_unknown_heavy_instance_warns(self, yes_no_model, yes_no_template):
        report = evaluate(
            yes_no_model,
            yes_no_template,
            [LabeledExample("totally unseen words here honestly", "yes")],
        )
        assert report.warnings
        assert "unknown" in report.warnings[0]


class TestScatterExport:
    def test_identity_pair_on_unconditional_model(self, yes_no_model):
        cfg = EnsembleConfig(max_len=4, system_prompt=())
        rows, skipped = scatter_export(yes_no_model, yes_no_model, ["blue yes", "no blue"], cfg)
        assert not skipped
        for row in rows:
            assert row.ppl_as_output == pytest.approx(row.ppl_as_input, abs=1e-9)

    def test_ngram_pairs_produce_finite_rows(self):
        tok = WhitespaceTokenizer.from_corpus(["the cat sat", "a dog ran fast", "the dog sat"])
        rows_total = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            corpus_a = [" ".join(rng.choice(["the", "cat", "sat", "dog"], size=4)) for _ in range(6)]
            corpus_b = [" ".join(rng.choice(["a", "dog", "ran", "fast"], size=4)) for _ in range(6)]
            para = train_ngram(corpus_a, 2, 1.0, tokenizer=tok)
            tar = train_ngram(corpus_b, 2, 1.0, tokenizer=tok)
            cfg = EnsembleConfig(max_len=4, system_prompt=())
            rows, _ = scatter_export(para, tar, ["the dog", "cat sat fast"], cfg)
            for row in rows:
                assert 0 < row.ppl_as_output < math.inf
                assert 0 < row.ppl_as_input < math.inf
            rows_total += len(rows)
        assert rows_total > 0

    def test_empty_prompt_list(self, yes_no_model):
        rows, skipped = scatter_export(yes_no_model, yes_no_model, [], EnsembleConfig(max_len=3))
        assert rows == [] and skipped == []

    def test_rank_correlation_extremes(self):
        inc = [ScatterRow("x", float(i), float(i * 2)) for i in range(1, 6)]
        dec = [ScatterRow("x", float(i), float(10 - i)) for i in range(1, 6)]
        assert scatter_rank_correlation(inc) == pytest.approx(1.0)
        assert scatter_rank_correlation(dec) == pytest.approx(-1.0)
        assert math.isnan(scatter_rank_correlation(inc[:1]))


class TestSweepAlpha:
    def test_three_alphas_three_rows(self, hand_para, hand_tar):
        cfg = EnsembleConfig(max_len=3, system_prompt=())
        rows = sweep_alpha(hand_para, hand_tar, (0,), [0.2, 0.5, 0.7], cfg)
        assert [r.alpha for r in rows] == [0.2, 0.5, 0.7]

    def test_stronger_weight_lowers_target_perplexity_here(self, hand_para, hand_tar):
        cfg = EnsembleConfig(max_len=3, system_prompt=())
        rows = sweep_alpha(hand_para, hand_tar, (0,), [0.2, 0.7], cfg)
        # alpha=0.2 stays on the paraphrase argmax chain (ppl 10); 0.7
        # switches to the target's favorite (ppl ~3.03)
        assert rows[0].target_perplexity == pytest.approx(10.0, abs=1e-9)
        assert rows[1].target_perplexity < rows[0].target_perplexity

    def test_boundary_rows_match_decoders(self, hand_para, hand_tar):
        from paralow.ensemble import decode_ensemble, decode_greedy

        cfg = EnsembleConfig(max_len=3, system_prompt=())
        rows = sweep_alpha(hand_para, hand_tar, (0,), [0.0, 1.0], cfg)
        greedy = decode_greedy(hand_para, hand_tar, (0,), cfg)
        tar_heavy = decode_ensemble(hand_para, hand_tar, (0,), EnsembleConfig(alpha=1.0, max_len=3))
        assert rows[0].text == greedy.text
        assert rows[1].text == tar_heavy.text

    def test_similarity_hook(self, hand_para, hand_tar):
        cfg = EnsembleConfig(max_len=2, system_prompt=())
        rows = sweep_alpha(hand_para, hand_tar, (0,), [0.5], cfg, similarity=lambda ref, cand: 0.42)
        assert rows[0].similarity == 0.42


class TestFileFormats:
    def test_dataset_round_trip(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"input": "great", "label": "pos"}\n{"input": "bad", "label": "neg"}\n')
        data = read_dataset(path)
        assert data == [LabeledExample("great", "pos"), LabeledExample("bad", "neg")]

    def test_templates_round_trip(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"prompt": "Classify.", "choices": ["pos", "neg"]}\n')
        (tmpl,) = read_templates(path)
        assert tmpl.prompt_text == "Classify."
        assert tmpl.label_choices == ("pos", "neg")

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"input": "ok", "label": "a"}\nnot json\n')
        with pytest.raises(InvalidInputError, match=":2"):
            read_dataset(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"input": "ok"}\n')
        with pytest.raises(InvalidInputError, match="label"):
            read_dataset(path)

    def test_report_csv_format(self):
        buf = io.StringIO()
        write_report_csv(buf, [ReportRow(0, 0.5, "ensemble", 0.75, 10.123456789, 4)])
        lines = buf.getvalue().splitlines()
        assert lines[0] == "template_id,alpha,mode,accuracy,avg_ppl,n"
        assert lines[1] == "0,0.5,ensemble,0.75,10.1235,4"

    def test_scatter_csv_format(self):
        buf = io.StringIO()
        write_scatter_csv(buf, [ScatterRow("x", 1.5, 2.25), ScatterRow("y", 3.0, 4.0)])
        lines = buf.getvalue().splitlines()
        assert lines[0] == "prompt_id,ppl_as_output,ppl_as_input"
        assert lines[1] == "0,1.5,2.25"
        assert lines[2] == "1,3,4"

    def test_sweep_csv_format(self, hand_para, hand_tar):
        cfg = EnsembleConfig(max_len=2, system_prompt=())
        rows = sweep_alpha(hand_para, hand_tar, (0,), [0.5], cfg)
        buf = io.StringIO()
        write_sweep_csv(buf, rows)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "alpha,text,target_ppl,similarity"
        assert lines[1].startswith("0.5,")


def test_label_scores_prefer_expected_label(yes_no_model):
    scores = label_scores(yes_no_model, (2,), [(0,), (1,)])
    assert scores[0] > scores[1]
    assert scores[0] == pytest.approx(math.log(0.5), abs=1e-12)
