"""Intent-alignment metrics across the four plan layers.

For every tutor message the plan specifies what was intended at four
layers (knowledge item, teaching method, action, interaction); an
annotator or the deterministic probe supplies what the utterance actually
realized. Metrics treat the intended tag as the prediction and the
observed tag as ground truth; per-layer scores are support-weighted means
over classes, with micro and macro also reported for transparency.

The probe stands in for expert annotators at desk scale: it reads the
utterance surface for cue phrases (a cloze marker means fill_in_blank, a
question with "explain" means free_text_question, ...) and matches slot
tokens to decide which knowledge item the message serves. A cue miss
yields the observed tag "unknown", which scores against the intended
class.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import EmptyLayer
from ..planner import DSLDocument, MOVE_TABLE, Move
from ..textnorm import tokens

LAYERS = ("knowledge", "method", "action", "interaction")
UNKNOWN = "unknown"


@dataclass(frozen=True)
class IntentLabel:
    message_id: str
    layer: str
    intended: str
    observed: str
    topic: str | None = None

    def to_dict(self) -> dict:
        return {
            "message_id": self.message_id,
            "layer": self.layer,
            "intended": self.intended,
            "observed": self.observed,
            "topic": self.topic,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "IntentLabel":
        return cls(
            message_id=str(payload["message_id"]),
            layer=payload["layer"],
            intended=payload["intended"],
            observed=payload["observed"],
            topic=payload.get("topic"),
        )


def _layer_scores(pairs: list[tuple[str, str]]) -> dict:
    """Per-class and aggregate precision/recall/F1 for (intended, observed)
    pairs; intended is the prediction, observed the truth."""
    classes = sorted(
        ({intended for intended, _ in pairs} | {observed for _, observed in pairs}) - {UNKNOWN}
    )
    per_class = {}
    for cls_name in classes:
        tp = sum(1 for i, o in pairs if i == cls_name and o == cls_name)
        fp = sum(1 for i, o in pairs if i == cls_name and o != cls_name)
        fn = sum(1 for i, o in pairs if i != cls_name and o == cls_name)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cls_name] = {
            "precision": precision, "recall": recall, "f1": f1, "support": support,
        }
    total_support = sum(c["support"] for c in per_class.values())
    if total_support:
        weighted = {
            metric: sum(c[metric] * c["support"] for c in per_class.values()) / total_support
            for metric in ("precision", "recall", "f1")
        }
    else:
        weighted = {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    macro = {
        metric: (sum(c[metric] for c in per_class.values()) / len(per_class)) if per_class else 0.0
        for metric in ("precision", "recall", "f1")
    }
    accuracy = sum(1 for i, o in pairs if i == o) / len(pairs)
    return {
        "classes": per_class,
        "weighted": weighted,
        "macro": macro,
        "micro_accuracy": accuracy,
        "n": len(pairs),
    }


def controllability_metrics(
    labels: list[IntentLabel], layers: tuple[str, ...] = LAYERS
) -> dict:
    """Per-layer weighted precision/recall/F1 plus a per-topic breakdown."""
    report: dict = {"layers": {}, "topics": {}}
    for layer in layers:
        pairs = [(l.intended, l.observed) for l in labels if l.layer == layer]
        if not pairs:
            raise EmptyLayer(f"no labels for layer {layer!r}")
        report["layers"][layer] = _layer_scores(pairs)
    topics = sorted({l.topic for l in labels if l.topic})
    for topic in topics:
        report["topics"][topic] = {}
        for layer in layers:
            pairs = [
                (l.intended, l.observed)
                for l in labels if l.layer == layer and l.topic == topic
            ]
            if pairs:
                report["topics"][topic][layer] = _layer_scores(pairs)
    return report


def format_report(report: dict) -> str:
    """Aligned text table in the intent-performance layout: one row per
    topic (Total first), three columns per layer."""
    layers = list(report["layers"])
    header_top = ["Topic"] + [layer.capitalize() for layer in layers]
    widths = [8] + [23] * len(layers)
    lines = []
    lines.append(" | ".join(h.ljust(w) for h, w in zip(header_top, widths)))
    sub = ["".ljust(8)] + ["Prec.  Recall F1     " for _ in layers]
    lines.append(" | ".join(s.ljust(w) for s, w in zip(sub, widths)))
    lines.append("-" * len(lines[0]))

    def row(name: str, scores_by_layer: dict) -> str:
        cells = [name.ljust(8)]
        for layer in layers:
            scores = scores_by_layer.get(layer)
            if scores is None:
                cells.append("".ljust(23))
            else:
                w = scores["weighted"]
                cells.append(
                    f"{w['precision']:.3f}  {w['recall']:.3f}  {w['f1']:.3f}".ljust(23)
                )
        return " | ".join(cells)

    lines.append(row("Total", report["layers"]))
    for topic, by_layer in report["topics"].items():
        lines.append(row(topic, by_layer))
    return "\n".join(lines)


# --- deterministic probe ------------------------------------------------

# interaction cues, checked in priority order
_INTERACTION_RULES: tuple[tuple[str, ...], ...] = (
    ("fill_in_blank", "____"),
    ("free_text_question", "explain", "?"),
    ("self_comparison_prompt", "compare"),
    ("open_task", "challenge"),
    ("open_question", "?"),
)

_ACTION_CUES = {
    "provide_partial_solution": ("____",),
    "elicit_explanation": ("explain",),
    "compare_to_expert": ("compare",),
    "pose_open_challenge": ("challenge",),
    "give_hint_on_attempt": ("hint",),
    "demonstrate_with_explanation": ("for example", "step by step", "takeaway"),
}

_ACTION_TO_MOVE = {action: move.value for move, (action, _, _) in MOVE_TABLE.items()}


def _observe_interaction(text: str) -> str:
    lowered = text.lower()
    for rule in _INTERACTION_RULES:
        tag, cues = rule[0], rule[1:]
        if all(cue in lowered for cue in cues):
            return tag
    if "?" not in lowered:
        return "tutor_message"
    return UNKNOWN


def _observe_action(text: str) -> str:
    lowered = text.lower()
    for action, cues in _ACTION_CUES.items():
        if any(cue in lowered for cue in cues):
            return action
    if "?" not in lowered:
        return "demonstrate_with_explanation"
    return UNKNOWN


def _observe_knowledge(text: str, dsl: DSLDocument) -> str:
    """Best token overlap against each item's distinctive slot values."""
    message_tokens = set(tokens(text))
    best_id = UNKNOWN
    best_overlap = 0
    for item in sorted(dsl.knowledge, key=lambda k: k.id):
        distinctive: set[str] = set()
        for slot_value in item.slots.values():
            distinctive.update(tokens(slot_value))
        overlap = len(distinctive & message_tokens)
        if overlap > best_overlap:
            best_id, best_overlap = item.id, overlap
    return best_id


def intent_probe(messages: list[dict], dsl: DSLDocument) -> list[IntentLabel]:
    """Label tutor messages at all four layers: intended from the plan
    step each message is tagged with, observed from the utterance text."""
    steps = {step.step_index: step for step in dsl.plan}
    labels: list[IntentLabel] = []
    for position, message in enumerate(messages):
        if message.get("role") != "tutor" or message.get("step_index") is None:
            continue
        step = steps.get(message["step_index"])
        if step is None:
            continue
        text = message["text"]
        message_id = f"m{position:04d}"
        observed_action = _observe_action(text)
        observed_move = _ACTION_TO_MOVE.get(observed_action, UNKNOWN)
        labels.extend([
            IntentLabel(message_id, "knowledge", step.knowledge_id, _observe_knowledge(text, dsl)),
            IntentLabel(message_id, "method", step.move.value, observed_move),
            IntentLabel(message_id, "action", step.action, observed_action),
            IntentLabel(message_id, "interaction", step.interaction, _observe_interaction(text)),
        ])
    return labels
