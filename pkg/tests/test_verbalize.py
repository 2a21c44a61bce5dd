import base64

import numpy as np
import pytest

from regionqar.backends import MockBackend
from regionqar.records import ValidationError, VerbalizationBundle
from regionqar.verbalize import (
    GlobalDescriptors,
    LabelVocabulary,
    VerbalizationError,
    assemble_bundle,
    build_global_descriptors,
    describe_regions,
    generate_probe_qas,
    parse_question_list,
    render_context,
    retrieve_concepts,
    sample_narratives,
)

from conftest import make_bundle, make_image, make_png


def toy_vocab(name="objects", n=5, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    emb = rng.standard_normal((n, dim))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    return LabelVocabulary(name=name, labels=tuple(f"{name}_{i}" for i in range(n)), embeddings=emb)


class TestVocabulary:
    def test_rejects_non_unit_rows(self):
        with pytest.raises(ValidationError):
            LabelVocabulary(name="v", labels=("a",), embeddings=np.array([[1.0, 1.0]]))

    def test_file_round_trip(self, tmp_path):
        vocab = toy_vocab()
        path = tmp_path / "vocab.json"
        vocab.save(path)
        back = LabelVocabulary.load(path)
        assert back.labels == vocab.labels
        assert np.allclose(back.embeddings, vocab.embeddings)


class TestRetrieveConcepts:
    def test_single_label(self):
        vocab = toy_vocab(n=1)
        out = retrieve_concepts(np.ones(4), vocab, k=1)
        assert [lbl for lbl, _ in out] == ["objects_0"]

    def test_identity_embedding_ranks_first(self):
        vocab = toy_vocab(n=5)
        out = retrieve_concepts(vocab.embeddings[2], vocab, k=1)
        assert out[0][0] == "objects_2"
        assert out[0][1] == pytest.approx(1.0)

    def test_matches_exhaustive_cosine(self, rng):
        vocab = toy_vocab(n=5)
        e = rng.standard_normal(4)
        sims = vocab.embeddings @ (e / np.linalg.norm(e))
        expected = [vocab.labels[i] for i in np.argsort(-sims, kind="stable")[:3]]
        out = retrieve_concepts(e, vocab, k=3)
        assert [lbl for lbl, _ in out] == expected

    def test_prefix_property(self, rng):
        vocab = toy_vocab(n=8, seed=3)
        e = rng.standard_normal(4)
        for k in range(1, 8):
            shorter = retrieve_concepts(e, vocab, k)
            longer = retrieve_concepts(e, vocab, k + 1)
            assert longer[:k] == shorter

    def test_scale_invariance(self, rng):
        vocab = toy_vocab(n=6)
        e = rng.standard_normal(4)
        a = [lbl for lbl, _ in retrieve_concepts(e, vocab, 6)]
        b = [lbl for lbl, _ in retrieve_concepts(e * 37.5, vocab, 6)]
        assert a == b

    def test_errors(self):
        vocab = toy_vocab(n=3)
        with pytest.raises(ValidationError):
            retrieve_concepts(np.ones(5), vocab, 1)
        with pytest.raises(ValidationError):
            retrieve_concepts(np.ones(4), vocab, 4)


class TestGlobalDescriptors:
    def vocabs(self, n=6):
        return {name: toy_vocab(name, n=n) for name in ("places", "objects", "concepts")}

    def test_cardinalities(self, rng):
        e = rng.standard_normal(4)
        out = build_global_descriptors(e, self.vocabs())
        assert (len(out.places), len(out.objects), len(out.concepts)) == (2, 3, 3)

    def test_small_vocab_errors(self, rng):
        vocabs = self.vocabs()
        vocabs["places"] = toy_vocab("places", n=1)
        with pytest.raises(ValidationError):
            build_global_descriptors(rng.standard_normal(4), vocabs)

    def test_composes_from_retrieve(self, rng):
        e = rng.standard_normal(4)
        vocabs = self.vocabs()
        out = build_global_descriptors(e, vocabs)
        for name, k, got in (
            ("places", 2, out.places), ("objects", 3, out.objects), ("concepts", 3, out.concepts)
        ):
            expected = tuple(lbl for lbl, _ in retrieve_concepts(e, vocabs[name], k))
            assert got == expected


class TestNarratives:
    def test_count_and_temperature(self):
        calls = []

        class Spy:
            def chat(self, messages, temperature, seed=None):
                calls.append(temperature)
                return f"text {seed}"

        out = sample_narratives("img.png", n=5, temperature=1.1, backend=Spy())
        assert len(out) == 5
        assert calls == [1.1] * 5

    def test_zero_requested(self):
        out = sample_narratives("img.png", n=0, backend=None)
        assert out == []

    def test_deterministic_with_mock(self):
        a = sample_narratives("img.png", 5, backend=MockBackend(seed=2))
        b = sample_narratives("img.png", 5, backend=MockBackend(seed=2))
        assert a == b


class TestDescribeRegions:
    def test_one_caption_per_region(self, tmp_path):
        path = tmp_path / "img.png"
        path.write_bytes(make_png())
        image = make_image(n_regions=3)
        result = describe_regions(str(path), list(image.regions), MockBackend())
        assert sorted(result.captions) == [0, 1, 2]
        assert result.errors == {}

    def test_zero_regions(self):
        result = describe_regions("missing.png", [], MockBackend())
        assert result.captions == {} and result.errors == {}

    def test_request_isolation_via_coordinate_echo(self, tmp_path):
        path = tmp_path / "img.png"
        path.write_bytes(make_png())
        image = make_image(n_regions=2)
        result = describe_regions(str(path), list(image.regions), MockBackend())
        box = image.regions[1].box
        assert f"({box.x:.3f}, {box.y:.3f}, {box.w:.3f}, {box.h:.3f})" in result.captions[1]

    def test_per_region_failure_is_partial(self, tmp_path):
        path = tmp_path / "img.png"
        path.write_bytes(make_png())
        image = make_image(n_regions=3)

        class Flaky:
            def __init__(self):
                self.n = 0

            def caption(self, image_b64, box=None):
                self.n += 1
                if self.n == 2:
                    raise RuntimeError("boom")
                return "ok"

        result = describe_regions(str(path), list(image.regions), Flaky())
        assert sorted(result.captions) == [0, 2]
        assert list(result.errors) == [1]


class TestProbeQas:
    def b64(self):
        return base64.b64encode(make_png()).decode("ascii")

    def partial(self):
        image = make_image(n_regions=3)
        bundle = make_bundle(image)
        return VerbalizationBundle(
            image_id=bundle.image_id, places=bundle.places, objects=bundle.objects,
            concepts=bundle.concepts, narratives=bundle.narratives,
            region_captions=bundle.region_captions, probe_qas=(),
        )

    def test_fifteen_pairs(self):
        mock = MockBackend()
        out = generate_probe_qas(self.partial(), mock, mock, self.b64(), n=15)
        assert len(out) == 15
        assert all(q and a for q, a in out)

    def test_short_reply_errors_with_parsed_count(self):
        class Short:
            def chat(self, messages, temperature, seed=None):
                return "\n".join(f"{i + 1}. Question {i}?" for i in range(14))

        with pytest.raises(VerbalizationError) as err:
            generate_probe_qas(self.partial(), Short(), MockBackend(), self.b64(), n=15)
        assert err.value.parsed == 14

    def test_echo_vqa_backend(self):
        class EchoVqa:
            def vqa(self, image_b64, question):
                return question[::-1]

        out = generate_probe_qas(self.partial(), MockBackend(), EchoVqa(), self.b64(), n=15)
        assert all(a == q[::-1] for q, a in out)


class TestParseQuestionList:
    def test_numbered(self):
        assert parse_question_list("1. One?\n2) Two?\n3. Three") == ["One?", "Two?", "Three"]

    def test_line_per_question(self):
        assert parse_question_list("What now?\nWhere to?") == ["What now?", "Where to?"]

    def test_prose_does_not_count(self):
        assert parse_question_list("I am not able to help with that.") == []


class TestAssembleAndContext:
    def test_default_cardinalities(self):
        image = make_image(n_regions=3)
        bundle = make_bundle(image)
        out = assemble_bundle(
            image,
            GlobalDescriptors(bundle.places, bundle.objects, bundle.concepts),
            list(bundle.narratives),
            dict(bundle.region_captions),
            list(bundle.probe_qas),
        )
        assert (len(out.places), len(out.objects), len(out.concepts)) == (2, 3, 3)
        assert len(out.narratives) == 5 and len(out.probe_qas) == 15

    def test_missing_narratives_names_field(self):
        image = make_image(n_regions=3)
        bundle = make_bundle(image)
        with pytest.raises(ValidationError) as err:
            assemble_bundle(
                image,
                GlobalDescriptors(bundle.places, bundle.objects, bundle.concepts),
                [],
                dict(bundle.region_captions),
                list(bundle.probe_qas),
            )
        assert "narratives" in str(err.value)

    def test_context_contains_captions_verbatim(self):
        bundle = make_bundle(make_image(n_regions=4))
        context = render_context(bundle)
        for caption in bundle.region_captions.values():
            assert caption in context

    def test_section_order_fixed(self):
        bundle = make_bundle(make_image(n_regions=2))
        context = render_context(bundle)
        positions = [
            context.index("Places:"),
            context.index("Narratives:"),
            context.index("Region captions:"),
            context.index("Question-answer pairs:"),
        ]
        assert positions == sorted(positions)

    def test_context_pure(self):
        bundle = make_bundle(make_image(n_regions=2))
        assert render_context(bundle) == render_context(bundle)


class TestBuildVocabulary:
    def test_template_applied_and_unit_norm(self):
        from regionqar.verbalize import build_vocabulary

        seen = []

        class Spy(MockBackend):
            def embed(self, texts=None, image_b64=None):
                seen.extend(texts)
                return super().embed(texts=texts)

        vocab = build_vocabulary("places", ["beach", "forest"], Spy())
        assert seen == ["a photo of beach", "a photo of forest"]
        assert vocab.labels == ("beach", "forest")
        norms = np.linalg.norm(vocab.embeddings, axis=1)
        assert np.allclose(norms, 1.0)

    def test_custom_template(self):
        from regionqar.verbalize import build_vocabulary

        seen = []

        class Spy(MockBackend):
            def embed(self, texts=None, image_b64=None):
                seen.extend(texts)
                return super().embed(texts=texts)

        build_vocabulary("objects", ["dog"], Spy(), template="an image of {label}")
        assert seen == ["an image of dog"]
