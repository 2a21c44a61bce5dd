import re

import pytest

from regionqar.backends import MockBackend
from regionqar.generate import (
    GenerationConfig,
    QarParseError,
    build_prompt,
    extract_id_mentions,
    generate_for_image,
    parse_qar_block,
    run_generation,
)
from regionqar.records import ReferenceMode, validate_qar

from conftest import make_bundle, make_image


class TestExtractIdMentions:
    def test_two_mentions(self):
        assert extract_id_mentions("What might be [1] and [3] discussing?") == {1, 3}

    def test_no_mentions(self):
        assert extract_id_mentions("no mentions here") == set()

    def test_bracketed_integer_rule(self):
        assert extract_id_mentions("array[2] vs [2] vs [12]") == {2, 12}

    def test_non_integer_brackets_ignored(self):
        assert extract_id_mentions("[a] [1x] [ 2] [3]") == {3}


class TestParseQarBlock:
    def test_canonical(self):
        assert parse_qar_block("Question: Q?\nAnswer: A.\nRationale: R.") == ("Q?", "A.", "R.")

    def test_empty_input(self):
        with pytest.raises(QarParseError) as err:
            parse_qar_block("")
        assert err.value.missing == ["question", "answer", "rationale"]

    def test_missing_one_field(self):
        with pytest.raises(QarParseError) as err:
            parse_qar_block("Question: Q?\nAnswer: A.")
        assert err.value.missing == ["rationale"]

    def test_shuffled_and_fuzzed_layouts(self, rng):
        fields = {"question": "Why here?", "answer": "Because.", "rationale": "The light."}
        for _ in range(20):
            order = list(fields)
            rng.shuffle(order)
            lines = []
            for name in order:
                label = name.capitalize() if rng.uniform() < 0.5 else name.upper()
                lines.append(f"{label}: {fields[name]}")
                for _ in range(int(rng.integers(0, 3))):
                    lines.append("")
            q, a, r = parse_qar_block("\n".join(lines))
            assert (q, a, r) == (fields["question"], fields["answer"], fields["rationale"])

    def test_multiline_value(self):
        q, a, r = parse_qar_block(
            "Question: Why is\nthe sky blue?\nAnswer: Scattering.\nRationale: Physics."
        )
        assert q == "Why is the sky blue?"


class TestBuildPrompt:
    def test_id_prompt_lists_regions_with_coordinates(self):
        image = make_image(n_regions=2)
        prompt = build_prompt(make_bundle(image), ReferenceMode.ID_BASED, image)
        assert "[0]" in prompt and "[1]" in prompt
        box = image.regions[0].box
        assert f"({box.x:.3f}, {box.y:.3f}, {box.w:.3f}, {box.h:.3f})" in prompt

    def test_id_prompt_requires_regions(self):
        image = make_image(n_regions=0)
        bundle = make_bundle(image)
        with pytest.raises(ValueError):
            build_prompt(bundle, ReferenceMode.ID_BASED, image)

    def test_description_prompt_has_no_bracketed_ids(self):
        image = make_image(n_regions=3)
        prompt = build_prompt(make_bundle(image), ReferenceMode.DESCRIPTION_BASED, image)
        assert re.search(r"\[\d+\]", prompt) is None

    def test_description_prompt_contains_captions(self):
        image = make_image(n_regions=3)
        bundle = make_bundle(image)
        prompt = build_prompt(bundle, ReferenceMode.DESCRIPTION_BASED, image)
        for caption in bundle.region_captions.values():
            assert caption in prompt

    def test_descriptor_subset_drops_sections(self):
        image = make_image(n_regions=2)
        bundle = make_bundle(image)
        prompt = build_prompt(bundle, ReferenceMode.ID_BASED, image,
                              descriptors=("concepts", "local"))
        assert "Narratives:" not in prompt and "Question-answer pairs:" not in prompt
        prompt_no_local = build_prompt(bundle, ReferenceMode.ID_BASED, image,
                                       descriptors=("concepts",))
        for caption in bundle.region_captions.values():
            assert caption not in prompt_no_local
        assert "[0]" in prompt_no_local  # ids stay; captions go


class TestRunGeneration:
    def test_compliant_mock_yields_full_count(self):
        image = make_image(n_regions=4)
        bundle = make_bundle(image)
        cfg = GenerationConfig()
        result = run_generation(bundle, ReferenceMode.ID_BASED, cfg, MockBackend(), image)
        assert len(result.instances) == 9
        rounds_turns = {(i.generation_round, i.turn) for i in result.instances}
        assert rounds_turns == {(r, t) for r in (1, 2, 3) for t in (1, 2, 3)}

    def test_both_modes_default_18(self):
        image = make_image(n_regions=4)
        result = generate_for_image(make_bundle(image), image, GenerationConfig(), MockBackend())
        assert len(result.instances) == 18
        modes = {i.mode for i in result.instances}
        assert modes == {ReferenceMode.ID_BASED, ReferenceMode.DESCRIPTION_BASED}

    def test_every_instance_validates(self):
        image = make_image(n_regions=4)
        result = generate_for_image(make_bundle(image), image, GenerationConfig(), MockBackend())
        for instance in result.instances:
            assert validate_qar(instance, image) == []

    def test_unparseable_turn_dropped_and_counted(self):
        image = make_image(n_regions=3)

        class SometimesJunk(MockBackend):
            def chat(self, messages, temperature=1.0, seed=None):
                if len(messages) == 3:  # second turn of each conversation
                    return "I refuse to answer in the requested format."
                return super().chat(messages, temperature, seed)

        result = run_generation(
            make_bundle(image), ReferenceMode.ID_BASED, GenerationConfig(),
            SometimesJunk(), image,
        )
        assert result.drop_counts["parse_error"] == 3
        assert len(result.instances) == 6

    def test_id_in_description_mode_excluded(self):
        image = make_image(n_regions=3)

        class LeakyIds(MockBackend):
            def chat(self, messages, temperature=1.0, seed=None):
                return "Question: What is [1] doing?\nAnswer: Standing.\nRationale: Posture."

        result = run_generation(
            make_bundle(image), ReferenceMode.DESCRIPTION_BASED, GenerationConfig(),
            LeakyIds(), image,
        )
        assert result.instances == []
        assert result.drop_counts["id_in_description_mode"] == 9

    def test_unknown_id_excluded(self):
        image = make_image(n_regions=2)

        class WrongIds(MockBackend):
            def chat(self, messages, temperature=1.0, seed=None):
                return "Question: What is [7] doing?\nAnswer: Standing.\nRationale: Posture."

        result = run_generation(
            make_bundle(image), ReferenceMode.ID_BASED, GenerationConfig(), WrongIds(), image
        )
        assert result.instances == []
        assert result.drop_counts["unknown_id"] == 9

    def test_deterministic_given_seed(self):
        image = make_image(n_regions=4)
        bundle = make_bundle(image)
        cfg = GenerationConfig(seed=11)
        a = generate_for_image(bundle, image, cfg, MockBackend(seed=11))
        b = generate_for_image(bundle, image, cfg, MockBackend(seed=11))
        assert [i.to_json_dict() for i in a.instances] == [i.to_json_dict() for i in b.instances]

    def test_instance_count_bound(self):
        image = make_image(n_regions=4)
        cfg = GenerationConfig(rounds_per_mode=2, qars_per_round=2)
        result = generate_for_image(make_bundle(image), image, cfg, MockBackend())
        assert len(result.instances) <= 2 * 2 * 2
