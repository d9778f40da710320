// Event-log reduction. The view state is a pure function of the server
// events since 0: replaying the same log always reproduces the same
// state object, which is what makes the UI testable without a browser.
// No tutoring logic lives here; mastery numbers, verdicts, and moves all
// arrive computed by the server.

import type { ChatMessage, ServerEvent, ViewSession } from "./types.js";

export function emptySession(sessionId: string): ViewSession {
  return {
    sessionId,
    nextEventIndex: 0,
    status: "active",
    pending: false,
    messages: [],
    assessments: [],
    planLength: 0,
    goalId: "",
  };
}

export function applyEvent(state: ViewSession, event: ServerEvent): ViewSession {
  if (event.index !== state.nextEventIndex) {
    throw new Error(
      `event gap: expected index ${state.nextEventIndex}, got ${event.index}`,
    );
  }
  const next: ViewSession = {
    ...state,
    nextEventIndex: state.nextEventIndex + 1,
    messages: state.messages.slice(),
    assessments: state.assessments.slice(),
  };
  const p = event.payload as Record<string, any>;
  switch (event.type) {
    case "session_started":
      next.planLength = Number(p.plan_length ?? 0);
      next.goalId = String(p.segment_goal_id ?? "");
      break;
    case "tutor_message":
      next.messages.push(tutorMessage(p));
      next.pending = Boolean(p.expects_response);
      break;
    case "student_message":
      next.messages.push({
        role: "student",
        text: String(p.text ?? ""),
        stepIndex: p.step_index ?? null,
        interaction: null,
        expectsResponse: false,
      });
      break;
    case "assessment":
      next.assessments.push({
        verdict: String(p.verdict ?? ""),
        rationale: String(p.rationale ?? ""),
        stepIndex: p.step_index ?? null,
      });
      next.pending = false;
      break;
    case "session_completed":
      next.status = "completed";
      next.pending = false;
      break;
    default:
      // step_inserted and future event types carry no view state
      break;
  }
  return next;
}

function tutorMessage(p: Record<string, any>): ChatMessage {
  return {
    role: "tutor",
    text: String(p.text ?? ""),
    stepIndex: p.step_index ?? null,
    interaction: p.interaction ? String(p.interaction) : null,
    expectsResponse: Boolean(p.expects_response),
  };
}

export function applyEvents(state: ViewSession, events: ServerEvent[]): ViewSession {
  return events.reduce(applyEvent, state);
}

export function reduceLog(sessionId: string, events: ServerEvent[]): ViewSession {
  return applyEvents(emptySession(sessionId), events);
}
