import numpy as np
import pytest

from regionqar.backends import MockBackend
from regionqar.filtering import (
    DEFAULT_CURVE_THRESHOLDS,
    descriptor_ablation_score,
    expand_descriptor_mask,
    filter_by_threshold,
    format_curve_table,
    precision_curve,
    random_baseline,
    write_curve_csv,
)
from regionqar.generate import GenerationConfig
from regionqar.records import CriticScore

from conftest import make_bundle, make_image


def scores_from(values):
    return [CriticScore(f"i{k}", v, "v") for k, v in enumerate(values)]


class TestFilterByThreshold:
    def test_above_operating_point_retained(self):
        assert filter_by_threshold(scores_from([0.85]), 0.8) == ["i0"]

    def test_zero_threshold_keeps_all(self):
        scores = scores_from([0.1, 0.5, 0.9])
        assert filter_by_threshold(scores, 0.0) == ["i0", "i1", "i2"]

    def test_one_threshold_keeps_none(self):
        assert filter_by_threshold(scores_from([0.1, 0.99]), 1.0) == []

    def test_strictly_greater(self):
        assert filter_by_threshold(scores_from([0.8]), 0.8) == []

    def test_monotone_subset(self, rng):
        scores = scores_from(rng.uniform(size=200))
        thresholds = sorted(rng.uniform(size=10))
        for t1, t2 in zip(thresholds, thresholds[1:]):
            assert set(filter_by_threshold(scores, t2)) <= set(filter_by_threshold(scores, t1))


class TestPrecisionCurve:
    def test_perfect_scorer(self, rng):
        labels = (rng.uniform(size=100) < 0.4).astype(int)
        scores = [CriticScore(f"i{k}", 0.9 if labels[k] else 0.1, "v") for k in range(100)]
        accept = {f"i{k}": int(labels[k]) for k in range(100)}
        points = precision_curve(scores, accept, thresholds=[0.5])
        assert points[0].precision == pytest.approx(1.0)

    def test_random_scores_near_base_rate(self, rng):
        n = 1000
        labels = np.zeros(n, dtype=int)
        labels[: int(0.45 * n)] = 1
        rng.shuffle(labels)
        base = labels.mean()
        precisions = []
        for rep in range(50):
            scores = [CriticScore(f"i{k}", float(rng.uniform()), "v") for k in range(n)]
            accept = {f"i{k}": int(labels[k]) for k in range(n)}
            points = precision_curve(scores, accept, thresholds=[0.5])
            precisions.append(points[0].precision)
        # binomial bound: retained ~ n/2, 3 sigma on the mean of 50 reps
        sigma = np.sqrt(base * (1 - base) / (n / 2)) / np.sqrt(50)
        assert abs(np.mean(precisions) - base) < 3 * sigma + 1e-3

    def test_zero_retention_flagged(self):
        scores = scores_from([0.2, 0.3])
        accept = {"i0": 1, "i1": 0}
        points = precision_curve(scores, accept, thresholds=[0.9])
        assert points[0].precision is None
        assert not points[0].precision_defined

    def test_fraction_non_increasing(self, rng):
        scores = scores_from(rng.uniform(size=300))
        accept = {s.instance_id: int(rng.uniform() < 0.5) for s in scores}
        points = precision_curve(scores, accept, DEFAULT_CURVE_THRESHOLDS)
        fractions = [p.retained_fraction for p in points]
        assert all(b <= a + 1e-12 for a, b in zip(fractions, fractions[1:]))

    def test_missing_label_errors(self):
        with pytest.raises(KeyError):
            precision_curve(scores_from([0.5]), {}, thresholds=[0.1])


class TestRandomBaseline:
    def test_full_fraction_exact_base_rate(self, rng):
        labels = (rng.uniform(size=200) < 0.45).astype(int)
        points = random_baseline(labels, fractions=[1.0], seed=0, repetitions=5)
        assert points[0].precision == pytest.approx(labels.mean())

    def test_mean_close_to_base_rate(self):
        labels = np.zeros(1000, dtype=int)
        labels[:450] = 1
        points = random_baseline(labels, fractions=[0.1, 0.3, 0.5, 0.9], seed=1,
                                 repetitions=1000)
        for p in points:
            assert abs(p.precision - 0.45) < 0.02

    def test_zero_fraction_flagged(self):
        points = random_baseline([1, 0, 1], fractions=[0.0], seed=0)
        assert points[0].precision is None

    def test_empty_labels_error(self):
        with pytest.raises(ValueError):
            random_baseline([], fractions=[0.5])


class TestDescriptorAblation:
    def test_mask_expansion(self):
        assert expand_descriptor_mask(["global"]) == ("concepts", "narratives")
        assert expand_descriptor_mask(["qas", "concepts"]) == ("concepts", "qas")
        with pytest.raises(ValueError):
            expand_descriptor_mask(["bogus"])

    def _fixture(self):
        images = [make_image(image_id=f"img{i}", n_regions=3) for i in range(3)]
        bundles = [make_bundle(img) for img in images]
        return images, bundles

    def test_qa_grounded_scorer_prefers_full(self):
        # a generator that grounds its rationale in the prompt's QA section
        # when one is present, like an LLM using its in-context descriptors
        images, bundles = self._fixture()
        cfg = GenerationConfig(rounds_per_mode=1, qars_per_round=2, seed=5)

        class PromptGrounded(MockBackend):
            def chat(self, messages, temperature=1.0, seed=None):
                prompt = "\n".join(m["content"] for m in messages)
                if "Rationale:" not in prompt:
                    return super().chat(messages, temperature, seed)
                qa_lines = [ln for ln in prompt.splitlines() if ln.startswith("Q: ")]
                grounding = qa_lines[0][3:] if qa_lines else "the visible scene"
                subject = "[0]" if "\n[0] (" in prompt or prompt.startswith("[0] (") else "the person"
                return (
                    f"Question: What might {subject} be doing?\n"
                    f"Answer: Something consistent with the scene.\n"
                    f"Rationale: Grounded in {grounding}"
                )

        def scorer(instance, bundle):
            text = f"{instance.question} {instance.answer} {instance.rationale}".lower()
            return float(any(q.lower() in text for q, _ in bundle.probe_qas))

        full, n_full = descriptor_ablation_score(
            images, bundles, ["concepts", "narratives", "local", "qas"],
            cfg, PromptGrounded(seed=5), scorer,
        )
        ablated, n_ablated = descriptor_ablation_score(
            images, bundles, ["concepts", "narratives", "local"],
            cfg, PromptGrounded(seed=5), scorer,
        )
        assert n_full > 0 and n_ablated > 0
        assert full > ablated

    def test_identical_mask_identical_mean(self):
        images, bundles = self._fixture()
        cfg = GenerationConfig(rounds_per_mode=1, qars_per_round=1, seed=2)
        scorer = lambda instance, bundle: MockBackend(seed=1).score(instance.to_json_dict())
        a = descriptor_ablation_score(images, bundles, ["local", "qas"], cfg,
                                      MockBackend(seed=2), scorer)
        b = descriptor_ablation_score(images, bundles, ["local", "qas"], cfg,
                                      MockBackend(seed=2), scorer)
        assert a == b

    def test_single_instance_mean_is_its_score(self):
        images, bundles = self._fixture()
        images, bundles = images[:1], bundles[:1]
        cfg = GenerationConfig(rounds_per_mode=1, qars_per_round=1, seed=0)

        class IdOnly(MockBackend):
            def chat(self, messages, temperature=1.0, seed=None):
                prompt = "\n".join(m["content"] for m in messages)
                if "[0]" in prompt:
                    return "Question: What is [0]?\nAnswer: A dog.\nRationale: Shape."
                return "unparseable"

        mean, count = descriptor_ablation_score(
            images, bundles, ["concepts", "local"], cfg, IdOnly(), lambda i, b: 0.625
        )
        assert count == 1
        assert mean == pytest.approx(0.625)

    def test_empty_mask_errors(self):
        images, bundles = self._fixture()
        with pytest.raises(ValueError):
            descriptor_ablation_score(images, bundles, [], GenerationConfig(),
                                      MockBackend(), lambda i, b: 0.5)


def test_curve_csv_and_table(tmp_path, rng):
    scores = scores_from(rng.uniform(size=50))
    accept = {s.instance_id: int(rng.uniform() < 0.5) for s in scores}
    points = precision_curve(scores, accept, [0.0, 0.5, 0.99])
    path = tmp_path / "curve.csv"
    write_curve_csv(points, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold,retained_count,retained_fraction,precision"
    assert len(lines) == 4
    table = format_curve_table(points)
    assert "threshold" in table and len(table.splitlines()) == 4
