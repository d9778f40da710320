"""Session loop: serve the prompt queue, grade replies, update mastery.

The session is event-sourced: every mutation appends an event, the UI
polls events incrementally, and replaying the same DSL against the same
fixtures with the same scripted replies reproduces the log byte for byte
(timestamps come from the injected clock, a logical counter in replay
mode).

Queue semantics: the cursor always points at the next unserved step and
never decreases. Serving a step that expects a response parks it as
``pending_step``; grading the reply clears it. A partial answer inserts a
Coaching hint step at the cursor instead of advancing; after two hints on
the same origin step the engine inserts a Modeling recap and moves on,
so a struggling learner cannot loop forever.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field

from .clock import SystemClock
from .errors import (
    FixtureMiss,
    InvalidDSL,
    NoPendingStep,
    PendingReply,
    ProviderUnreachable,
    SessionCompleted,
)
from .gateway import ChatRequest, LLMGateway
from .knowledge import KnowledgeItem
from .planner import Move, PlanStep, DSLDocument, answer_slot, map_move, topic_slot
from .student import ModelStore, StudentModel, bkt_update
from .textnorm import contains_all_stems, shares_most_stems

MAX_CONSECUTIVE_HINTS = 2
CONTEXT_MESSAGES = 6

TUTOR_SYSTEM = (
    "You are a programming tutor working through a video lesson with one "
    "learner. Follow the teaching instruction exactly, stay grounded in "
    "the provided knowledge, and keep the message under 120 words."
)

GRADER_SYSTEM = (
    "You grade a learner's reply against one piece of knowledge. Answer "
    "with exactly one word from {correct, partial, incorrect} on the "
    "first line, then a one-sentence rationale on the second line."
)

VERDICTS = ("correct", "partial", "incorrect")


@dataclass
class Assessment:
    verdict: str
    rationale: str
    matched_skill_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "rationale": self.rationale,
            "matched_skill_ids": list(self.matched_skill_ids),
        }


@dataclass
class SessionState:
    session_id: str
    student_id: str
    dsl: DSLDocument
    queue: list[PlanStep]
    queue_cursor: int = 0
    messages: list[dict] = field(default_factory=list)
    pending_step: PlanStep | None = None
    status: str = "active"
    events: list[dict] = field(default_factory=list)
    segment_excerpt: str = ""
    hint_counts: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        pending_pos = None
        if self.pending_step is not None:
            pending_pos = next(
                pos for pos, step in enumerate(self.queue) if step is self.pending_step
            )
        return {
            "session_id": self.session_id,
            "student_id": self.student_id,
            "dsl": self.dsl.to_dict(),
            "queue": [step.to_dict() for step in self.queue],
            "queue_cursor": self.queue_cursor,
            "messages": list(self.messages),
            "pending_queue_pos": pending_pos,
            "status": self.status,
            "events": list(self.events),
            "segment_excerpt": self.segment_excerpt,
            "hint_counts": {str(k): v for k, v in self.hint_counts.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SessionState":
        queue = [PlanStep.from_dict(raw) for raw in payload["queue"]]
        pending = None
        if payload.get("pending_queue_pos") is not None:
            pending = queue[payload["pending_queue_pos"]]
        return cls(
            session_id=payload["session_id"],
            student_id=payload["student_id"],
            dsl=DSLDocument.from_dict(payload["dsl"]),
            queue=queue,
            queue_cursor=payload["queue_cursor"],
            messages=list(payload.get("messages", [])),
            pending_step=pending,
            status=payload.get("status", "active"),
            events=list(payload.get("events", [])),
            segment_excerpt=payload.get("segment_excerpt", ""),
            hint_counts={int(k): v for k, v in payload.get("hint_counts", {}).items()},
        )


class ConversationEngine:
    def __init__(self, gateway: LLMGateway, model_store: ModelStore, clock=None):
        self.gateway = gateway
        self.store = model_store
        self.clock = clock or SystemClock()

    # -- lifecycle ------------------------------------------------------

    def start_session(
        self,
        student_id: str,
        dsl: DSLDocument,
        session_id: str | None = None,
        segment_excerpt: str = "",
    ) -> SessionState:
        try:
            dsl.validate()
        except Exception as exc:
            raise InvalidDSL(str(exc)) from exc
        model = self.store.load(student_id)
        self._relink_skills(dsl, model)
        self.store.save(model)
        session = SessionState(
            session_id=session_id or f"session-{uuid.uuid4().hex[:10]}",
            student_id=student_id,
            dsl=dsl,
            queue=list(dsl.plan),
            segment_excerpt=segment_excerpt,
        )
        self._emit(session, "session_started", {
            "student_id": student_id,
            "segment_goal_id": dsl.segment_goal_id,
            "plan_length": len(dsl.plan),
        })
        if not dsl.plan:
            session.status = "completed"
            self._emit(session, "session_completed", {})
        return session

    def _relink_skills(self, dsl: DSLDocument, model: StudentModel) -> None:
        """Plans may have been compiled against another student's registry;
        remap skill ids by name, registering any the model lacks."""
        from .planner import link_knowledge  # cycle guard

        needs_link = any(
            item.kind == "procedural" and (
                not item.skill_ids or any(sid not in model.skills for sid in item.skill_ids)
            )
            for item in dsl.knowledge
        )
        if needs_link:
            link_knowledge(dsl.knowledge, model, gateway=None)

    # -- tutor turn -------------------------------------------------------

    def next_tutor_message(self, session: SessionState) -> dict:
        if session.status == "completed":
            raise SessionCompleted(f"session {session.session_id} is completed")
        if session.pending_step is not None:
            raise PendingReply(
                f"session {session.session_id} is waiting for a reply to step "
                f"{session.pending_step.step_index}"
            )
        step = session.queue[session.queue_cursor]
        item = session.dsl.knowledge_by_id(step.knowledge_id)
        text = self._generate_utterance(session, step, item)
        message = {
            "role": "tutor",
            "text": text,
            "step_index": step.step_index,
            "timestamp": self.clock.now(),
        }
        session.messages.append(message)
        session.queue_cursor += 1
        if step.expects_response:
            session.pending_step = step
        if item.skill_ids:
            # presentation counts as an exposure: next session scaffolds
            # instead of re-modeling a still-weak skill
            model = self.store.load(session.student_id)
            touched = False
            for skill_id in item.skill_ids:
                if skill_id in model.skills:
                    model.skills[skill_id].exposures += 1
                    touched = True
            if touched:
                self.store.save(model)
        self._emit(session, "tutor_message", {
            "text": text,
            "step_index": step.step_index,
            "move": step.move.value,
            "action": step.action,
            "interaction": step.interaction,
            "knowledge_id": step.knowledge_id,
            "expects_response": step.expects_response,
        })
        self._maybe_complete(session)
        return message

    def _generate_utterance(self, session: SessionState, step: PlanStep, item: KnowledgeItem) -> str:
        recent = session.messages[-CONTEXT_MESSAGES:]
        history = "\n".join(f"{m['role']}: {m['text']}" for m in recent) or "(start of session)"
        user_prompt = (
            f"Teaching instruction:\n{step.prompt}\n\n"
            f"Knowledge item ({item.domain}/{item.kind}): {item.text}\n"
            f"Segment excerpt: {session.segment_excerpt or '(none)'}\n"
            f"Recent conversation:\n{history}"
        )
        request = ChatRequest(system_prompt=TUTOR_SYSTEM, user_prompt=user_prompt)
        return self.gateway.complete(request).text

    # -- learner turn -------------------------------------------------------

    def handle_student_reply(self, session: SessionState, text: str) -> tuple[Assessment, dict | None]:
        if session.pending_step is None:
            raise NoPendingStep(f"session {session.session_id} has no pending question")
        step = session.pending_step
        item = session.dsl.knowledge_by_id(step.knowledge_id)
        session.messages.append({
            "role": "student",
            "text": text,
            "step_index": step.step_index,
            "timestamp": self.clock.now(),
        })
        self._emit(session, "student_message", {"text": text, "step_index": step.step_index})

        assessment = self.assess_response(step, item, text)
        assessment.matched_skill_ids = list(item.skill_ids)

        model = self.store.load(session.student_id)
        updates = {}
        for skill_id in item.skill_ids:
            if skill_id in model.skills:
                record = bkt_update(
                    model.skills[skill_id],
                    correct=(assessment.verdict == "correct"),
                    timestamp=self.clock.now(),
                )
                updates[skill_id] = record.p_learn
        self.store.save(model)

        session.pending_step = None
        origin = self._origin_index(step)
        if assessment.verdict == "partial":
            hints_used = session.hint_counts.get(origin, 0)
            if hints_used < MAX_CONSECUTIVE_HINTS:
                session.hint_counts[origin] = hints_used + 1
                self._insert_step(session, Move.COACHING, item, origin, kind="hint")
            else:
                self._insert_step(session, Move.MODELING, item, origin, kind="recap")
        else:
            session.hint_counts.pop(origin, None)

        self._emit(session, "assessment", {
            "verdict": assessment.verdict,
            "rationale": assessment.rationale,
            "skill_ids": assessment.matched_skill_ids,
            "p_learn_after": updates,
            "step_index": step.step_index,
        })
        self._maybe_complete(session)

        next_message = None
        if session.status == "active":
            next_message = self.next_tutor_message(session)
        return assessment, next_message

    def _origin_index(self, step: PlanStep) -> int:
        # inserted steps reuse their origin's plan index fractionally offset;
        # the origin is the integer part
        return int(step.step_index)

    def _insert_step(self, session: SessionState, move: Move, item: KnowledgeItem,
                     origin: int, kind: str) -> None:
        action, interaction, expects = map_move(move)
        if kind == "hint":
            prompt = (
                f"The learner partially answered. Give one concrete hint about "
                f"{answer_slot(item)} and re-ask briefly.\nKnowledge: {item.text}"
            )
        else:
            prompt = (
                f"The learner is stuck. Recap the expert solution plainly, for "
                f"example by demonstrating {answer_slot(item)} on {topic_slot(item)}, "
                f"then move on.\nKnowledge: {item.text}"
            )
        inserted = PlanStep(
            step_index=origin,
            knowledge_id=item.id,
            move=move,
            action=action,
            interaction=interaction,
            prompt=prompt,
            expects_response=expects if kind == "hint" else False,
        )
        session.queue.insert(session.queue_cursor, inserted)
        self._emit(session, "step_inserted", {
            "kind": kind,
            "origin_step_index": origin,
            "move": move.value,
            "interaction": interaction,
        })

    # -- grading -------------------------------------------------------------

    def assess_response(self, step: PlanStep, item: KnowledgeItem, text: str) -> Assessment:
        """Rubric-graded through the gateway when a fixture or live provider
        answers; deterministic token fallback otherwise."""
        try:
            request = self._grading_request(step, item, text)
            reply = self.gateway.complete(request).text
            verdict, rationale = self._parse_verdict(reply)
            if verdict is not None:
                return Assessment(verdict=verdict, rationale=rationale)
        except (FixtureMiss, ProviderUnreachable):
            pass
        return self._fallback_assessment(item, text)

    def _grading_request(self, step: PlanStep, item: KnowledgeItem, text: str) -> ChatRequest:
        slot_lines = "\n".join(f"  {name}: {value}" for name, value in item.slots.items() if value)
        return ChatRequest(
            system_prompt=GRADER_SYSTEM,
            user_prompt=(
                f"Knowledge ({item.domain}/{item.kind}): {item.text}\n"
                f"Key slots:\n{slot_lines}\n"
                f"Interaction: {step.interaction}\n"
                f"Learner reply: {text}"
            ),
            temperature=0.0,
        )

    @staticmethod
    def _parse_verdict(reply: str) -> tuple[str | None, str]:
        stripped = reply.strip()
        try:
            data = json.loads(stripped)
            if isinstance(data, dict) and data.get("verdict") in VERDICTS:
                return data["verdict"], str(data.get("rationale", ""))
        except json.JSONDecodeError:
            pass
        lines = stripped.splitlines()
        if lines:
            head = lines[0].strip().strip(".:").lower()
            if head in VERDICTS:
                rationale = lines[1].strip() if len(lines) > 1 else ""
                return head, rationale
        return None, ""

    @staticmethod
    def _fallback_assessment(item: KnowledgeItem, text: str) -> Assessment:
        """Token grading: correct when the reply covers the key action
        slot, partial when it only circles the goal, incorrect otherwise."""
        answer = answer_slot(item)
        topic = topic_slot(item)
        if contains_all_stems(text, answer):
            return Assessment("correct", f"reply contains the key tokens of {answer!r}")
        if shares_most_stems(text, topic):
            return Assessment("partial", f"reply mentions the goal {topic!r} but not the key action")
        return Assessment("incorrect", "reply matches neither the key action nor the goal")

    # -- events ---------------------------------------------------------------

    def _emit(self, session: SessionState, event_type: str, payload: dict) -> None:
        session.events.append({
            "index": len(session.events),
            "type": event_type,
            "payload": payload,
            "ts": self.clock.now(),
        })

    def _maybe_complete(self, session: SessionState) -> None:
        if (
            session.status == "active"
            and session.queue_cursor >= len(session.queue)
            and session.pending_step is None
        ):
            session.status = "completed"
            self._update_goal_mastery(session)
            self._emit(session, "session_completed", {})

    def _update_goal_mastery(self, session: SessionState) -> None:
        """Completing a segment leaves a goal-level mastery estimate: the
        mean mastery of the skills the plan touched."""
        skill_ids = sorted({
            sid for item in session.dsl.knowledge for sid in item.skill_ids
        })
        model = self.store.load(session.student_id)
        levels = [model.skills[sid].p_learn for sid in skill_ids if sid in model.skills]
        goal_id = session.dsl.segment_goal_id
        if levels:
            model.goal_mastery[goal_id] = sum(levels) / len(levels)
        else:
            model.goal_mastery.setdefault(goal_id, 0.1)
        self.store.save(model)
