"""Training-example construction, mixing schemes, and export invariants."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_annotation, make_example
from cotsift.corpus import THINK_CLOSE, THINK_OPEN, word_count
from cotsift.errors import EmptyAnswer, EmptyThink, MissingVerdict
from cotsift.mixer import (
    MixParams,
    SYSTEM1,
    SYSTEM2,
    build_inference_prompt,
    build_mixed_dataset,
    derive_word_budget,
    export_dataset,
    filter_max_length,
    load_dataset,
    make_system1_example,
    make_system2_example,
    mean_system2_budget,
    mix_by_difficulty,
    mix_random,
    system2_fraction,
)

SYSTEM2_TEMPLATE = "Think carefully before answering. Use about {K} words."
SYSTEM1_TEMPLATE = "Answer directly without thinking. Use about {K} words."


class TestMakeExamples:
    def test_system2_prompt_ends_with_budget_sentence(self):
        example = make_example(think="t", answer="a")
        out = make_system2_example(example, k=3500)
        assert out.prompt_text.endswith("Use about 3500 words.")
        assert out.prompt_text == example.question + "\n" + SYSTEM2_TEMPLATE.replace(
            "{K}", "3500"
        )

    def test_system2_target_is_think_delimited(self):
        out = make_system2_example(make_example(think="trace", answer="ans"), k=100)
        assert out.target_text.startswith(THINK_OPEN)
        assert THINK_CLOSE in out.target_text
        assert out.target_text == "<think>trace</think>ans"

    def test_system2_requires_trace(self):
        with pytest.raises(EmptyThink):
            make_system2_example(make_example(think="", answer="a"))

    def test_system1_instruction_and_target(self):
        example = make_example(think="ignored", answer="a")
        out = make_system1_example(example, k=200)
        assert out.target_text == "a"
        assert THINK_OPEN not in out.target_text
        assert out.prompt_text == example.question + "\n" + SYSTEM1_TEMPLATE.replace(
            "{K}", "200"
        )

    def test_system1_requires_answer(self):
        example = make_example(think="t", answer="a")
        example.answer_text = ""
        with pytest.raises(EmptyAnswer):
            make_system1_example(example)

    def test_loss_mask_boundary_is_prompt_length(self):
        for builder in (make_system1_example, make_system2_example):
            out = builder(make_example(think="x y z", answer="w"), k=100)
            assert out.loss_mask_boundary == len(out.prompt_text)
            combined = out.prompt_text + out.target_text
            assert combined[out.loss_mask_boundary :] == out.target_text


class TestWordBudget:
    def test_rounding_to_nearest_hundred(self):
        think = " ".join(["w"] * 3400)
        answer = " ".join(["w"] * 80)  # 3480 words total
        example = make_example(think=think, answer=answer)
        assert derive_word_budget(example, SYSTEM2) == 3500

    def test_floor_at_granularity(self):
        example = make_example(think="t", answer=" ".join(["w"] * 40))
        assert derive_word_budget(example, SYSTEM1) == 100

    def test_custom_granularity(self):
        example = make_example(think="t", answer=" ".join(["w"] * 130))
        assert derive_word_budget(example, SYSTEM1, granularity=50) == 150

    @settings(max_examples=100, deadline=None)
    @given(words=st.integers(min_value=0, max_value=5000))
    def test_within_half_granularity_above_floor(self, words):
        example = make_example(think="t", answer=" ".join(["w"] * words))
        k = derive_word_budget(example, SYSTEM1)
        assert k >= 100
        if k > 100:
            assert abs(k - words) <= 50

    def test_derived_budget_used_in_prompt(self):
        example = make_example(think=" ".join(["t"] * 260), answer=" ".join(["a"] * 30))
        out = make_system2_example(example)
        assert out.word_budget_K == 300
        assert "Use about 300 words." in out.prompt_text


def _corpus(n, think="think trace", answer="answer text"):
    return [
        make_example(example_id=f"m{i:05d}", think=think, answer=answer) for i in range(n)
    ]


class TestMixRandom:
    def test_p_one_equals_pure_s2(self):
        examples = _corpus(20)
        mixed = mix_random(examples, MixParams(scheme="random", p_system2=1.0, seed=1))
        pure = build_mixed_dataset(examples, MixParams(scheme="pure_s2"))
        assert [ex.to_dict() for ex in mixed] == [ex.to_dict() for ex in pure]

    def test_p_zero_all_system1(self):
        mixed = mix_random(_corpus(20), MixParams(scheme="random", p_system2=0.0, seed=1))
        assert all(ex.mode == SYSTEM1 for ex in mixed)

    def test_realized_fraction_within_three_sigma(self):
        examples = _corpus(10_000)
        mixed = mix_random(examples, MixParams(scheme="random", p_system2=0.4, seed=7))
        fraction = system2_fraction(mixed)
        sigma = math.sqrt(0.4 * 0.6 / 10_000)
        assert abs(fraction - 0.4) <= 3 * sigma

    def test_deterministic_per_seed(self):
        examples = _corpus(50)
        params = MixParams(scheme="random", p_system2=0.5, seed=3)
        one = mix_random(examples, params)
        two = mix_random(examples, params)
        assert [ex.to_dict() for ex in one] == [ex.to_dict() for ex in two]


class TestMixByDifficulty:
    def _annotated(self, n, disagree_fraction):
        examples = _corpus(n)
        cut = int(n * disagree_fraction)
        annotations = [
            make_annotation(
                example_id=ex.id, agreement="disagree" if i < cut else "agree"
            )
            for i, ex in enumerate(examples)
        ]
        return examples, annotations

    def test_realized_fraction_equals_disagree_fraction_exactly(self):
        examples, annotations = self._annotated(400, 0.36)
        mixed = mix_by_difficulty(examples, annotations)
        brute_disagree = sum(1 for a in annotations if a.agreement == "disagree")
        brute_s2 = sum(1 for ex in mixed if ex.mode == SYSTEM2)
        assert brute_s2 == brute_disagree == 144
        assert system2_fraction(mixed) == brute_disagree / len(examples) == 0.36

    def test_all_agree_is_pure_system1(self):
        examples, annotations = self._annotated(10, 0.0)
        mixed = mix_by_difficulty(examples, annotations)
        assert all(ex.mode == SYSTEM1 for ex in mixed)

    def test_missing_verdict(self):
        examples = _corpus(3)
        annotations = [make_annotation(example_id=ex.id) for ex in examples]  # unknown
        with pytest.raises(MissingVerdict):
            mix_by_difficulty(examples, annotations)

    def test_difficulty_routes_by_verdict(self):
        examples, annotations = self._annotated(10, 0.3)
        lookup = {a.example_id: a.agreement for a in annotations}
        for training_example in mix_by_difficulty(examples, annotations):
            expected = SYSTEM2 if lookup[training_example.example_id] == "disagree" else SYSTEM1
            assert training_example.mode == expected


class TestFilterMaxLength:
    def test_identity_when_short(self):
        dataset = [make_system1_example(ex) for ex in _corpus(5)]
        kept, dropped = filter_max_length(dataset, 16_384)
        assert dropped == 0
        assert kept == dataset

    def test_drops_oversized_target(self):
        long_example = make_example(
            example_id="big", think="t", answer=" ".join(["w"] * 20_000)
        )
        dataset = [make_system1_example(long_example), make_system1_example(make_example())]
        kept, dropped = filter_max_length(dataset, 16_384)
        assert dropped == 1
        assert [ex.example_id for ex in kept] == ["a1"]

    def test_idempotent(self):
        dataset = [make_system1_example(ex) for ex in _corpus(8)]
        once, _ = filter_max_length(dataset, 50)
        twice, dropped = filter_max_length(once, 50)
        assert twice == once and dropped == 0

    def test_never_truncates(self):
        dataset = [make_system1_example(make_example(answer=" ".join(["w"] * 30)))]
        kept, _ = filter_max_length(dataset, 16_384)
        assert kept[0].target_text == dataset[0].target_text


class TestInferencePrompts:
    def test_think_ends_with_open_delimiter(self):
        prompt = build_inference_prompt("Q?", "think", 3500)
        assert prompt.endswith(THINK_OPEN)
        assert "Think carefully before answering. Use about 3500 words." in prompt

    def test_adaptive_has_instruction_but_no_delimiter(self):
        prompt = build_inference_prompt("Q?", "adaptive_think")
        assert "Think carefully before answering." in prompt
        assert THINK_OPEN not in prompt
        assert "Use about" not in prompt

    def test_no_think_instruction(self):
        prompt = build_inference_prompt("Q?", "no_think")
        assert "Answer directly without thinking" in prompt
        assert THINK_OPEN not in prompt

    def test_default_budget_is_3500(self):
        assert "3500" in build_inference_prompt("Q?", "think")


class TestExport:
    def test_round_trip_lossless(self, tmp_path):
        examples = _corpus(12)
        annotations = [
            make_annotation(example_id=ex.id, agreement="disagree" if i % 2 else "agree")
            for i, ex in enumerate(examples)
        ]
        dataset = mix_by_difficulty(examples, annotations)
        path = tmp_path / "dataset.jsonl"
        export_dataset(path, dataset)
        loaded = load_dataset(path)
        assert [ex.to_dict() for ex in loaded] == [ex.to_dict() for ex in dataset]

    def test_mode_think_delimiter_biconditional(self, tmp_path):
        examples = _corpus(40)
        mixed = mix_random(examples, MixParams(scheme="random", p_system2=0.5, seed=2))
        path = tmp_path / "dataset.jsonl"
        export_dataset(path, mixed)
        for training_example in load_dataset(path):
            has_think = THINK_OPEN in training_example.target_text
            assert (training_example.mode == SYSTEM2) == has_think

    def test_export_deterministic_bytes(self, tmp_path):
        examples = _corpus(25)
        params = MixParams(scheme="random", p_system2=0.3, seed=11)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        export_dataset(a, mix_random(examples, params))
        export_dataset(b, mix_random(examples, params))
        assert a.read_bytes() == b.read_bytes()

    def test_mean_budget_tracks_target_lengths(self):
        rng = np.random.default_rng(0)
        examples = [
            make_example(
                example_id=f"k{i:03d}",
                think=" ".join(["t"] * int(rng.integers(200, 4000))),
                answer=" ".join(["a"] * 50),
            )
            for i in range(100)
        ]
        dataset = build_mixed_dataset(examples, MixParams(scheme="pure_s2"))
        mean_k = mean_system2_budget(dataset)
        true_mean = np.mean(
            [word_count(ex.think_text) + word_count(ex.answer_text) for ex in examples]
        )
        assert abs(mean_k - true_mean) <= 50  # within rounding granularity
