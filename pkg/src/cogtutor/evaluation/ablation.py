"""Four-condition ablation runner.

* Baseline      — unconstrained generation straight from segment text.
* KnowledgeOnly — knowledge extraction feeds generation; no move planning.
* MethodOnly    — move planning from goal-level mastery over raw segment
                  text; no extracted knowledge.
* Full          — the complete pipeline: extraction, planning, per-step
                  generation.

Each condition yields a dialogue bundle whose messages carry exactly the
tags the condition's machinery produced (knowledge ids, move/action/
interaction, both, or neither), so downstream checks can verify structure
without reading message text. Deterministic under replay.
"""

from __future__ import annotations

from ..gateway import ChatRequest, LLMGateway
from ..knowledge import extract_knowledge
from ..planner import (
    MoveSelector,
    build_dsl,
    load_move_template,
    map_move,
)
from ..segmentation import VideoSegment
from ..student import DEFAULT_GOAL_MASTERY, StudentModel

CONDITIONS = ("Baseline", "KnowledgeOnly", "MethodOnly", "Full")

BASELINE_SYSTEM = (
    "You are a programming tutor. Teach the learner what this video "
    "segment covers, conversationally, in a few sentences."
)

GROUNDED_SYSTEM = (
    "You are a programming tutor. Teach the learner exactly the knowledge "
    "statement provided, in a few sentences."
)

METHOD_STEPS = 3


def _baseline(segment: VideoSegment, gateway: LLMGateway) -> list[dict]:
    response = gateway.complete(ChatRequest(
        system_prompt=BASELINE_SYSTEM,
        user_prompt=f"Video segment ({segment.goal_id}):\n{segment.text()}",
    ))
    return [{"text": response.text, "segment_goal_id": segment.goal_id}]


def _knowledge_only(segment: VideoSegment, gateway: LLMGateway) -> list[dict]:
    messages = []
    for item in extract_knowledge(segment, gateway):
        response = gateway.complete(ChatRequest(
            system_prompt=GROUNDED_SYSTEM,
            user_prompt=f"Knowledge ({item.domain}/{item.kind}): {item.text}",
        ))
        messages.append({
            "text": response.text,
            "segment_goal_id": segment.goal_id,
            "knowledge_id": item.id,
        })
    return messages


def _method_only(segment: VideoSegment, gateway: LLMGateway) -> list[dict]:
    selector = MoveSelector()
    messages = []
    excerpt = segment.text()[:800]
    for exposure in range(METHOD_STEPS):
        move = selector.select_move(DEFAULT_GOAL_MASTERY, exposure)
        action, interaction, _ = map_move(move)
        prompt = load_move_template(move).format(
            knowledge_text=excerpt,
            answer="the key step shown in the segment",
            topic=segment.goal_id,
            goal=segment.goal_id,
        )
        response = gateway.complete(ChatRequest(
            system_prompt=GROUNDED_SYSTEM, user_prompt=prompt,
        ))
        messages.append({
            "text": response.text,
            "segment_goal_id": segment.goal_id,
            "move": move.value,
            "action": action,
            "interaction": interaction,
        })
    return messages


def _full(segment: VideoSegment, gateway: LLMGateway) -> list[dict]:
    items = extract_knowledge(segment, gateway)
    if not items:
        return []
    model = StudentModel(student_id="ablation")
    dsl = build_dsl(
        items, model,
        segment_goal_id=segment.goal_id,
        student_id="ablation",
        gateway=gateway,
    )
    messages = []
    for step in dsl.plan:
        item = dsl.knowledge_by_id(step.knowledge_id)
        response = gateway.complete(ChatRequest(
            system_prompt=GROUNDED_SYSTEM,
            user_prompt=(
                f"Teaching instruction:\n{step.prompt}\n\n"
                f"Knowledge ({item.domain}/{item.kind}): {item.text}"
            ),
        ))
        messages.append({
            "text": response.text,
            "segment_goal_id": segment.goal_id,
            "knowledge_id": step.knowledge_id,
            "move": step.move.value,
            "action": step.action,
            "interaction": step.interaction,
            "step_index": step.step_index,
        })
    return messages


_RUNNERS = {
    "Baseline": _baseline,
    "KnowledgeOnly": _knowledge_only,
    "MethodOnly": _method_only,
    "Full": _full,
}


def run_ablation(
    segments: list[VideoSegment],
    gateway: LLMGateway,
    conditions: tuple[str, ...] = CONDITIONS,
) -> dict[str, dict]:
    bundles: dict[str, dict] = {}
    for condition in conditions:
        runner = _RUNNERS[condition]
        messages: list[dict] = []
        for segment in segments:
            messages.extend(runner(segment, gateway))
        bundles[condition] = {"condition": condition, "messages": messages}
    return bundles
