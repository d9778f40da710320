// Wire types mirroring the tutor service documents.

export interface ServerEvent {
  index: number;
  type: string;
  payload: Record<string, unknown>;
  ts: number;
}

export interface EventsResponse {
  api_version: number;
  events: ServerEvent[];
  next_since: number;
  status: string;
  pending: boolean;
}

export interface ChatMessage {
  role: "tutor" | "student";
  text: string;
  stepIndex: number | null;
  interaction: string | null;
  expectsResponse: boolean;
}

export interface AssessmentView {
  verdict: string;
  rationale: string;
  stepIndex: number | null;
}

// Mirror of the server event log; a pure fold over events since 0.
export interface ViewSession {
  sessionId: string;
  nextEventIndex: number;
  status: string;
  pending: boolean;
  messages: ChatMessage[];
  assessments: AssessmentView[];
  planLength: number;
  goalId: string;
}

export interface SkillSnapshot {
  skill_id: string;
  name: string;
  p_learn: number;
  observations: { timestamp: number; correct: boolean; p_learn_after: number }[];
}

export interface StudentSnapshot {
  student_id: string;
  skills: SkillSnapshot[];
  goal_mastery: Record<string, number>;
  version: number;
}

export interface PlanStepDoc {
  step_index: number;
  knowledge_id: string;
  move: string;
  action: string;
  interaction: string;
  prompt: string;
  expects_response: boolean;
}

export interface DslDoc {
  dsl_version: number;
  segment_goal_id: string;
  knowledge: { id: string; text: string }[];
  plan: PlanStepDoc[];
  student_id: string;
}

export interface Thresholds {
  low: number;
  mid: number;
  high: number;
}
