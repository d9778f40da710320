"""Compile knowledge into a teaching plan: the DSL document.

Planning applies three ordering/selection principles:

1. global before local — concept items precede programming items and
   declarative precede procedural, conceptual overviews first;
2. increasing complexity — the move for each item comes from the
   student's current mastery of its skills (low mastery gets Modeling or
   Scaffolding, high mastery Reflection or Exploration);
3. increasing diversity — no three consecutive steps may share an
   interaction type; the third is swapped for the nearest compatible
   alternative.

Each move maps to a fixed (action, interaction, expects_response) row,
and each plan step carries a prompt rendered from a per-move template.
Templates live as plain text resources (``planner_templates/``,
overridable via ``COGTUTOR_TEMPLATE_DIR``) so instructors can edit them
without touching code.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .errors import EmptyKnowledge, InvalidDSL
from .gateway import EmbeddingVector, LLMGateway
from .knowledge import KnowledgeItem, derive_skill_name
from .student import (
    DEFAULT_GOAL_MASTERY,
    StudentModel,
    ensure_skill,
)

DSL_VERSION = 1


class Move(str, Enum):
    MODELING = "Modeling"
    COACHING = "Coaching"
    SCAFFOLDING = "Scaffolding"
    ARTICULATION = "Articulation"
    REFLECTION = "Reflection"
    EXPLORATION = "Exploration"


# move -> (action tag, interaction tag, expects_response)
MOVE_TABLE: dict[Move, tuple[str, str, bool]] = {
    Move.MODELING: ("demonstrate_with_explanation", "tutor_message", False),
    Move.COACHING: ("give_hint_on_attempt", "open_question", True),
    Move.SCAFFOLDING: ("provide_partial_solution", "fill_in_blank", True),
    Move.ARTICULATION: ("elicit_explanation", "free_text_question", True),
    Move.REFLECTION: ("compare_to_expert", "self_comparison_prompt", True),
    Move.EXPLORATION: ("pose_open_challenge", "open_task", True),
}

# rank for the monotonicity contract: raising mastery never moves the
# selection toward the low end
MOVE_RANK = {
    Move.MODELING: 0,
    Move.SCAFFOLDING: 0,
    Move.COACHING: 1,
    Move.ARTICULATION: 2,
    Move.REFLECTION: 3,
    Move.EXPLORATION: 3,
}

# replacement preference when the diversity rule fires
DIVERSITY_PREFERENCE = (
    Move.ARTICULATION,
    Move.COACHING,
    Move.REFLECTION,
    Move.EXPLORATION,
    Move.MODELING,
    Move.SCAFFOLDING,
)


def map_move(move: Move) -> tuple[str, str, bool]:
    return MOVE_TABLE[move]


@dataclass
class PlannerConfig:
    low_mastery: float = 0.3
    mid_mastery: float = 0.6
    high_mastery: float = 0.8

    def validate(self):
        if not 0.0 < self.low_mastery < self.mid_mastery < self.high_mastery < 1.0:
            raise ValueError(
                "mastery thresholds must satisfy 0 < low < mid < high < 1, got "
                f"{self.low_mastery}/{self.mid_mastery}/{self.high_mastery}"
            )
        return self


class MoveSelector:
    """Mastery-driven move policy with the Reflection/Exploration rotation.

    Every second high-mastery pick within one session becomes Exploration
    instead of Reflection, so confident students are not stuck comparing
    themselves to the expert forever.
    """

    def __init__(self, config: PlannerConfig | None = None):
        self.config = (config or PlannerConfig()).validate()
        self._high_picks = 0

    def select_move(self, mastery: float, prior_exposures: int) -> Move:
        cfg = self.config
        if mastery < cfg.low_mastery:
            return Move.MODELING if prior_exposures == 0 else Move.SCAFFOLDING
        if mastery < cfg.mid_mastery:
            return Move.COACHING
        if mastery < cfg.high_mastery:
            return Move.ARTICULATION
        self._high_picks += 1
        return Move.EXPLORATION if self._high_picks % 2 == 0 else Move.REFLECTION


def select_move(item: KnowledgeItem, mastery: float, prior_exposures: int,
                selector: MoveSelector) -> Move:
    return selector.select_move(mastery, prior_exposures)


@dataclass
class PlanStep:
    step_index: int
    knowledge_id: str
    move: Move
    action: str
    interaction: str
    prompt: str
    expects_response: bool

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "knowledge_id": self.knowledge_id,
            "move": self.move.value,
            "action": self.action,
            "interaction": self.interaction,
            "prompt": self.prompt,
            "expects_response": self.expects_response,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PlanStep":
        return cls(
            step_index=payload["step_index"],
            knowledge_id=payload["knowledge_id"],
            move=Move(payload["move"]),
            action=payload["action"],
            interaction=payload["interaction"],
            prompt=payload["prompt"],
            expects_response=payload["expects_response"],
        )


@dataclass
class DSLDocument:
    segment_goal_id: str
    knowledge: list[KnowledgeItem]
    plan: list[PlanStep]
    created_at: float
    student_id: str
    dsl_version: int = DSL_VERSION

    def knowledge_by_id(self, knowledge_id: str) -> KnowledgeItem:
        for item in self.knowledge:
            if item.id == knowledge_id:
                return item
        raise KeyError(knowledge_id)

    def validate(self) -> "DSLDocument":
        ids = {item.id for item in self.knowledge}
        for i, step in enumerate(self.plan):
            if step.step_index != i:
                raise InvalidDSL(f"plan step_index not dense at position {i}")
            if step.knowledge_id not in ids:
                raise InvalidDSL(f"step {i} references unknown knowledge {step.knowledge_id!r}")
            if MOVE_TABLE[step.move] != (step.action, step.interaction, step.expects_response):
                raise InvalidDSL(f"step {i} tags inconsistent with move {step.move.value}")
        return self

    def to_dict(self) -> dict:
        return {
            "dsl_version": self.dsl_version,
            "segment_goal_id": self.segment_goal_id,
            "knowledge": [item.to_dict() for item in self.knowledge],
            "plan": [step.to_dict() for step in self.plan],
            "created_at": self.created_at,
            "student_id": self.student_id,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DSLDocument":
        return cls(
            segment_goal_id=payload["segment_goal_id"],
            knowledge=[KnowledgeItem.from_dict(raw) for raw in payload.get("knowledge", [])],
            plan=[PlanStep.from_dict(raw) for raw in payload.get("plan", [])],
            created_at=payload.get("created_at", 0.0),
            student_id=payload.get("student_id", ""),
            dsl_version=payload.get("dsl_version", DSL_VERSION),
        )


# --- prompt templates ---------------------------------------------------


def load_move_template(move: Move) -> str:
    override_dir = os.environ.get("COGTUTOR_TEMPLATE_DIR")
    filename = f"{move.value.lower()}.txt"
    if override_dir:
        candidate = os.path.join(override_dir, filename)
        if os.path.exists(candidate):
            with open(candidate, "r", encoding="utf-8") as handle:
                return handle.read()
    return (
        resources.files("cogtutor")
        .joinpath("planner_templates", filename)
        .read_text(encoding="utf-8")
    )


def answer_slot(item: KnowledgeItem) -> str:
    """The skill-bearing slot: what graders and cloze blanks key on."""
    for name in ("action_tool", "actions", "method", "independent_clause"):
        if item.slots.get(name):
            return item.slots[name]
    return item.text


def topic_slot(item: KnowledgeItem) -> str:
    for name in ("goal", "final_goal", "subject"):
        if item.slots.get(name):
            return item.slots[name]
    return item.segment_goal_id


def render_prompt(move: Move, item: KnowledgeItem, goal_id: str) -> str:
    template = load_move_template(move)
    return template.format(
        knowledge_text=item.text,
        answer=answer_slot(item),
        topic=topic_slot(item),
        goal=goal_id,
    ).strip()


# --- ordering -------------------------------------------------------------

_DOMAIN_RANK = {"concept": 0, "programming": 1}
_KIND_RANK = {"declarative": 0, "procedural": 1}


def order_knowledge(items: list[KnowledgeItem]) -> list[KnowledgeItem]:
    """Stable sort: concept before programming, declarative before
    procedural, then source timestamp."""
    return sorted(
        items,
        key=lambda item: (
            _DOMAIN_RANK[item.domain],
            _KIND_RANK[item.kind],
            item.source_timestamp_s,
        ),
    )


# --- student-model linkage -------------------------------------------------


def link_knowledge(
    items: list[KnowledgeItem],
    model: StudentModel,
    gateway: LLMGateway | None = None,
    goal_mastery_estimate: float | None = None,
) -> list[KnowledgeItem]:
    """Resolve procedural items' skills against the student's registry,
    registering new skills as needed (Fig. knowledge -> skills mapping).

    Without a gateway, matching is by exact normalized name only and new
    skills get an empty embedding; pipeline callers always pass one.
    """
    for item in items:
        if item.kind != "procedural":
            item.skill_ids = []
            continue
        names = derive_skill_name(item)
        if gateway is not None:
            vectors = gateway.embed(names)
        else:
            vectors = [EmbeddingVector(())] * len(names)
        estimate = goal_mastery_estimate
        if estimate is None:
            estimate = model.goal_mastery.get(item.segment_goal_id, DEFAULT_GOAL_MASTERY)
        item.skill_ids = [
            ensure_skill(model, name, vector, estimate, created_from=item.id)
            for name, vector in zip(names, vectors)
        ]
    return items


def mastery_for_item(item: KnowledgeItem, model: StudentModel) -> float:
    """Procedural: min mastery over the item's skills. Declarative: the
    segment-goal estimate."""
    if item.kind == "procedural" and item.skill_ids:
        return min(model.skills[sid].p_learn for sid in item.skill_ids if sid in model.skills)
    return model.goal_mastery.get(item.segment_goal_id, DEFAULT_GOAL_MASTERY)


def exposures_for_item(item: KnowledgeItem, model: StudentModel) -> int:
    """How often the tutor has already presented this item's skills (the
    weakest skill decides, same as mastery). Declarative items count as
    exposed once the goal has a mastery estimate from an earlier session."""
    if item.kind == "procedural" and item.skill_ids:
        relevant = [model.skills[sid] for sid in item.skill_ids if sid in model.skills]
        if not relevant:
            return 0
        weakest = min(relevant, key=lambda record: record.p_learn)
        return weakest.exposures
    return 1 if item.segment_goal_id in model.goal_mastery else 0


# --- plan construction -------------------------------------------------------


def build_dsl(
    items: list[KnowledgeItem],
    model: StudentModel,
    segment_goal_id: str,
    student_id: str,
    gateway: LLMGateway | None = None,
    config: PlannerConfig | None = None,
    created_at: float = 0.0,
) -> DSLDocument:
    """Compile ordered knowledge plus the student's mastery into a plan.

    One step per knowledge item; every Scaffolding step gets a follow-up
    Coaching step (the hint path); then the diversity rule rewrites any
    third consecutive step sharing an interaction tag.
    """
    if not items:
        raise EmptyKnowledge(f"no knowledge items for segment {segment_goal_id}")
    link_knowledge(items, model, gateway)
    ordered = order_knowledge(items)
    selector = MoveSelector(config)

    planned: list[tuple[Move, KnowledgeItem]] = []
    for item in ordered:
        mastery = mastery_for_item(item, model)
        exposures = exposures_for_item(item, model)
        move = selector.select_move(mastery, exposures)
        planned.append((move, item))
        if move is Move.SCAFFOLDING:
            planned.append((Move.COACHING, item))

    planned = _apply_diversity(planned)

    steps = []
    for index, (move, item) in enumerate(planned):
        action, interaction, expects = map_move(move)
        steps.append(PlanStep(
            step_index=index,
            knowledge_id=item.id,
            move=move,
            action=action,
            interaction=interaction,
            prompt=render_prompt(move, item, segment_goal_id),
            expects_response=expects,
        ))
    document = DSLDocument(
        segment_goal_id=segment_goal_id,
        knowledge=ordered,
        plan=steps,
        created_at=created_at,
        student_id=student_id,
    )
    return document.validate()


def _apply_diversity(planned: list[tuple[Move, KnowledgeItem]]) -> list[tuple[Move, KnowledgeItem]]:
    """No three consecutive steps with the same interaction tag: the third
    is replaced by the first preference with a different interaction."""
    out = list(planned)
    for i in range(2, len(out)):
        tags = [MOVE_TABLE[out[j][0]][1] for j in (i - 2, i - 1, i)]
        if tags[0] == tags[1] == tags[2]:
            replacement = next(
                move for move in DIVERSITY_PREFERENCE
                if MOVE_TABLE[move][1] != tags[2]
            )
            out[i] = (replacement, out[i][1])
    return out


def build_prompt_queue(dsl: DSLDocument) -> list[PlanStep]:
    """FIFO projection of the plan; the head drives the next message."""
    return list(dsl.plan)
