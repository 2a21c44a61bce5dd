import numpy as np
import pytest

from regionqar.records import BoxGeometry, ReferenceMode, Region
from regionqar.stats import (
    SummaryStats,
    bbox_histograms,
    classify_question,
    corpus_summary,
    format_summary_table,
    load_question_type_rules,
    pearson,
    token_length,
    write_histogram_csv,
)

from conftest import make_instance

# example phrases from the corpus taxonomy, column-by-column
GOLDEN_PHRASES = [
    ("What is the purpose", "Purpose"),
    ("What is the significance", "Purpose"),
    ("What is the relationship", "Relationship"),
    ("How are they related", "Relationship"),
    ("What kind of", "Type"),
    ("What is the type of", "Type"),
    ("What emotion", "Emotion"),
    ("What might be the feeling of", "Emotion"),
    ("Where", "Scene"),
    ("What time", "Scene"),
    ("What situation", "Scene"),
    ("What state", "Attribute"),
    ("What condition", "Attribute"),
    ("What color", "Attribute"),
    ("What activity", "Action"),
    ("What event", "Action"),
    ("What are they doing", "Action"),
    ("What can you infer", "Inference"),
    ("What would likely", "Inference"),
    ("How might", "Inference"),
    ("Why", "Reason"),
    ("What is the intention", "Reason"),
    ("What is the role", "Role"),
    ("What is the occupation", "Role"),
    ("What is the main focus", "Focus"),
    ("What stands out", "Focus"),
    ("What atmosphere", "Ambiance"),
    ("What is the mood", "Ambiance"),
    ("What vibe", "Ambiance"),
    ("Is there", "Factual"),
    ("Are there", "Factual"),
    ("Do you think", "Factual"),
]


class TestClassifyQuestion:
    @pytest.mark.parametrize("phrase,expected", GOLDEN_PHRASES)
    def test_golden_table(self, phrase, expected):
        assert classify_question(phrase) == expected

    def test_purpose_example(self):
        assert classify_question("What is the purpose of the hat?") == "Purpose"

    def test_reason_example(self):
        assert classify_question("Why is he smiling?") == "Reason"

    def test_fallback(self):
        assert classify_question("Blorp?") == "Others"

    def test_total_and_deterministic(self):
        rules = load_question_type_rules()
        for q in ("", "???", "what", "Something with nowhere to go"):
            assert classify_question(q, rules) == classify_question(q, rules)

    def test_token_matching_not_substring(self):
        # "somewhere" must not trip the Scene rule for "where"
        assert classify_question("Is somewhere nice visible?") == "Others"
        assert classify_question("Is there somewhere nice?") == "Factual"

    def test_priority_order(self):
        # contains both "purpose" (priority 1) and "why" (priority 9)
        assert classify_question("Why does the purpose matter?") == "Purpose"


class TestCorpusSummary:
    def fixture_instances(self):
        instances = []
        for img in range(4):
            for k in range(2):
                instances.append(make_instance(
                    image_id=f"img{img}",
                    instance_id=f"img{img}:id:{k}:1",
                    mentioned=(0, 1),
                    question="What might be [0] and [1] discussing?",  # 7 tokens
                    answer="They plan a trip.",                         # 4 tokens
                    rationale="A map is on the table here.",            # 7 tokens
                ))
        return instances

    def test_counts(self):
        summary = corpus_summary(self.fixture_instances())
        assert summary["total"]["images"] == 4
        assert summary["total"]["qars"] == 8
        assert summary["total"]["qars_per_image"] == pytest.approx(2.0)

    def test_hand_computed_means(self):
        summary = corpus_summary(self.fixture_instances())
        assert summary["total"]["avg_question_tokens"] == pytest.approx(7.0, abs=1e-9)
        assert summary["total"]["avg_answer_tokens"] == pytest.approx(4.0, abs=1e-9)
        assert summary["total"]["avg_rationale_tokens"] == pytest.approx(7.0, abs=1e-9)
        assert summary["total"]["avg_mentioned_ids"] == pytest.approx(2.0, abs=1e-9)

    def test_per_mode_split(self):
        instances = self.fixture_instances()
        instances.append(make_instance(
            image_id="img9", instance_id="img9:description:1:1",
            mode=ReferenceMode.DESCRIPTION_BASED, mentioned=(),
            question="What is the woman doing?",
        ))
        summary = corpus_summary(instances)
        assert summary["with_region_ids"]["qars"] == 8
        assert summary["with_region_descriptions"]["qars"] == 1
        assert summary["total"]["qars"] == 9

    def test_empty_flagged(self):
        summary = corpus_summary([])
        assert summary["empty"] is True
        assert summary["total"]["qars"] == 0

    def test_shard_additivity(self):
        instances = self.fixture_instances()
        total = SummaryStats()
        for i in instances:
            total.add(i)
        left, right = SummaryStats(), SummaryStats()
        for i in instances[:3]:
            left.add(i)
        for i in instances[3:]:
            right.add(i)
        assert left.merge(right).to_report() == total.to_report()

    def test_table_renders(self):
        table = format_summary_table(corpus_summary(self.fixture_instances()))
        assert "qars per image" in table


def region_with(w, h):
    return Region(region_id=0, box=BoxGeometry(0.0, 0.0, w, h), class_label="c",
                  detector_confidence=1.0)


class TestBboxHistograms:
    def test_single_box_bin(self):
        hist = bbox_histograms([region_with(0.5, 0.5)])
        assert hist.width[10] == pytest.approx(1.0)  # [0.5, 0.55)
        assert sum(hist.width) == pytest.approx(1.0)

    def test_empty_all_zero(self):
        hist = bbox_histograms([])
        assert sum(hist.width) == 0 and sum(hist.height) == 0 and sum(hist.area) == 0

    def test_normalization(self, rng):
        regions = []
        for i in range(50):
            w, h = rng.uniform(0.05, 0.9, 2)
            regions.append(Region(region_id=0, box=BoxGeometry(0, 0, w, h),
                                  class_label="c", detector_confidence=0.5))
        hist = bbox_histograms(regions)
        for series in (hist.width, hist.height, hist.area):
            assert abs(sum(series) - 1.0) <= 1e-12

    def test_csv(self, tmp_path):
        hist = bbox_histograms([region_with(0.3, 0.4)])
        path = tmp_path / "hist.csv"
        write_histogram_csv(hist, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 21


class TestPearson:
    def test_perfect_linearity(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        ys = [2 * x + 1 for x in xs]
        out = pearson(xs, ys)
        assert out.rho == pytest.approx(1.0)
        assert out.n == 4

    def test_constant_series_flagged(self):
        out = pearson([1, 2, 3], [5, 5, 5])
        assert out.rho is None and not out.defined

    def test_hand_computed_ten_points(self):
        xs = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
        ys = [2, 1, 4, 3, 7, 5, 8, 6, 10, 9]
        n = 10
        sx, sy = sum(xs), sum(ys)
        sxx = sum(x * x for x in xs)
        syy = sum(y * y for y in ys)
        sxy = sum(x * y for x, y in zip(xs, ys))
        expected = (n * sxy - sx * sy) / (
            ((n * sxx - sx * sx) ** 0.5) * ((n * syy - sy * sy) ** 0.5)
        )
        out = pearson(xs, ys)
        assert out.rho == pytest.approx(expected, abs=1e-12)

    def test_bounded(self, rng):
        for _ in range(30):
            xs = rng.standard_normal(15)
            ys = rng.standard_normal(15)
            out = pearson(xs, ys)
            assert abs(out.rho) <= 1 + 1e-12

    def test_short_series_error(self):
        with pytest.raises(ValueError):
            pearson([1], [2])


def test_token_length_is_whitespace_count():
    assert token_length("a b  c\nd") == 4
    assert token_length("") == 0
