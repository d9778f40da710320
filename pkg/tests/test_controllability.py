import pytest

from cogtutor.errors import EmptyLayer
from cogtutor.evaluation.controllability import (
    IntentLabel,
    controllability_metrics,
    format_report,
    intent_probe,
)
from cogtutor.planner import Move, build_dsl
from cogtutor.student import StudentModel

from test_planner import item as make_item


def labels_from(layer, intended, observed, topic=None):
    return [
        IntentLabel(f"m{i}", layer, a, b, topic)
        for i, (a, b) in enumerate(zip(intended, observed))
    ]


def single_layer(intended, observed):
    labels = labels_from("method", intended, observed)
    return controllability_metrics(labels, layers=("method",))["layers"]["method"]


class TestMetrics:
    def test_hand_confusion_matrix(self):
        scores = single_layer(["A", "A", "B"], ["A", "B", "B"])
        assert scores["classes"]["A"]["precision"] == pytest.approx(0.5)
        assert scores["classes"]["A"]["recall"] == pytest.approx(1.0)
        assert scores["classes"]["B"]["precision"] == pytest.approx(1.0)
        assert scores["classes"]["B"]["recall"] == pytest.approx(0.5)
        assert scores["micro_accuracy"] == pytest.approx(2 / 3)
        # supports: A=1, B=2
        assert scores["weighted"]["recall"] == pytest.approx(2 / 3)
        assert scores["weighted"]["precision"] == pytest.approx((1 * 0.5 + 2 * 1.0) / 3)

    def test_perfect_alignment(self):
        scores = single_layer(["A", "B", "C"], ["A", "B", "C"])
        assert scores["weighted"] == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
        assert scores["macro"]["f1"] == 1.0

    def test_empty_layer_rejected(self):
        with pytest.raises(EmptyLayer):
            controllability_metrics(
                labels_from("method", ["A"], ["A"]),
                layers=("method", "action"),
            )

    def test_weighted_equals_micro_when_counts_balance(self):
        # every class predicted as often as it is true: weighted P = weighted
        # R = micro accuracy
        intended = ["A", "A", "B", "B"]
        observed = ["A", "B", "A", "B"]
        scores = single_layer(intended, observed)
        assert scores["weighted"]["precision"] == pytest.approx(scores["micro_accuracy"])
        assert scores["weighted"]["recall"] == pytest.approx(scores["micro_accuracy"])

    def test_unknown_observation_penalizes_intended_class(self):
        scores = single_layer(["A", "A"], ["A", "unknown"])
        assert "unknown" not in scores["classes"]
        assert scores["classes"]["A"]["precision"] == pytest.approx(0.5)
        assert scores["classes"]["A"]["recall"] == pytest.approx(1.0)

    def test_per_topic_breakdown(self):
        labels = (
            labels_from("method", ["A", "A"], ["A", "A"], topic="EDA")
            + labels_from("method", ["A", "B"], ["B", "B"], topic="ML")
        )
        report = controllability_metrics(labels, layers=("method",))
        assert report["topics"]["EDA"]["method"]["micro_accuracy"] == 1.0
        assert report["topics"]["ML"]["method"]["micro_accuracy"] == 0.5

    def test_report_layout(self):
        labels = []
        for layer in ("knowledge", "method", "action", "interaction"):
            labels += labels_from(layer, ["A", "B"], ["A", "B"], topic="EDA")
        rendered = format_report(controllability_metrics(labels))
        lines = rendered.splitlines()
        assert "Knowledge" in lines[0] and "Interaction" in lines[0]
        assert lines[0].index("Knowledge") < lines[0].index("Method") < \
            lines[0].index("Action") < lines[0].index("Interaction")
        assert any(line.startswith("Total") for line in lines)
        assert any(line.startswith("EDA") for line in lines)
        assert "1.000" in rendered


def build_test_dsl():
    """Plan spanning Modeling, Scaffolding, and Coaching."""
    from cogtutor.gateway import EmbeddingVector
    from cogtutor.student import SkillRecord

    items = [
        make_item("concept", "declarative", ts=1.0, suffix="kd"),
        make_item("programming", "procedural", ts=2.0, suffix="kp"),
    ]
    model = StudentModel(student_id="probe")
    skill = SkillRecord("s000", "achieve goal kp use tool_kp",
                        EmbeddingVector(()), p_learn=0.1)
    skill.exposures = 1
    model.skills["s000"] = skill
    return build_dsl(items, model, "g1", "probe")


class TestIntentProbe:
    def test_cloze_marker_reads_as_fill_in_blank(self):
        dsl = build_test_dsl()
        scaffold_step = next(s for s in dsl.plan if s.move is Move.SCAFFOLDING)
        knowledge = dsl.knowledge_by_id(scaffold_step.knowledge_id)
        messages = [{
            "role": "tutor",
            "text": f"Complete this: {knowledge.text.replace('use tool_kp', '____')}",
            "step_index": scaffold_step.step_index,
        }]
        labels = intent_probe(messages, dsl)
        interaction = next(l for l in labels if l.layer == "interaction")
        assert interaction.observed == "fill_in_blank"
        assert interaction.intended == "fill_in_blank"

    def test_echoed_tags_probe_to_intended(self):
        dsl = build_test_dsl()
        messages = []
        for step in dsl.plan:
            knowledge = dsl.knowledge_by_id(step.knowledge_id)
            if step.move is Move.MODELING:
                text = f"Watch step by step: {knowledge.text} Takeaway: done."
            elif step.move is Move.SCAFFOLDING:
                text = f"Let's practice. {knowledge.text.replace('use tool_kp', '____')} Fill in: ____"
            else:
                text = f"Here's a hint about it. {knowledge.text} How would you proceed?"
            messages.append({"role": "tutor", "text": text, "step_index": step.step_index})
        labels = intent_probe(messages, dsl)
        assert labels, "probe produced no labels"
        for label in labels:
            assert label.observed == label.intended, label

        report = controllability_metrics(labels)
        for layer, scores in report["layers"].items():
            assert scores["weighted"]["f1"] == pytest.approx(1.0), layer

    def test_lexicon_miss_observed_unknown(self):
        dsl = build_test_dsl()
        step = dsl.plan[0]
        messages = [{
            "role": "tutor",
            "text": "Mysterious content with a question?",
            "step_index": step.step_index,
        }]
        labels = intent_probe(messages, dsl)
        by_layer = {l.layer: l for l in labels}
        assert by_layer["action"].observed == "unknown"
        assert by_layer["knowledge"].observed == "unknown"

    def test_student_messages_skipped(self):
        dsl = build_test_dsl()
        messages = [{"role": "student", "text": "my answer", "step_index": 0}]
        assert intent_probe(messages, dsl) == []
