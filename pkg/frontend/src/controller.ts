// DOM-free application controller: owns the view state, talks to the
// API, and hands rendered HTML to a sink. main.ts supplies the real DOM
// sink and fetch; tests supply fakes. All tutoring decisions (verdicts,
// mastery, moves) come from the server; the controller only mirrors.

import type { TutorApiLike } from "./api.js";
import { applyEvents, emptySession } from "./state.js";
import type { Thresholds, ViewSession } from "./types.js";
import {
  renderChat,
  renderMasteryPanel,
  renderPlanInspector,
  validateThresholds,
} from "./views.js";

export interface RenderSink {
  chat(html: string): void;
  mastery(html: string): void;
  plan(html: string): void;
  banner(message: string): void;
}

export class SessionController {
  session: ViewSession;
  thresholds: Thresholds = { low: 0.3, mid: 0.6, high: 0.8 };
  replanCalls = 0;

  constructor(
    private api: TutorApiLike,
    private sink: RenderSink,
    private ids: { sessionId: string; studentId: string; videoId: string; segmentIndex: number },
  ) {
    this.session = emptySession(ids.sessionId);
  }

  renderAll(): void {
    this.sink.chat(renderChat(this.session));
  }

  async pollOnce(): Promise<number> {
    const response = await this.api.events(this.ids.sessionId, this.session.nextEventIndex);
    if (response.events.length > 0) {
      this.session = applyEvents(this.session, response.events);
      this.renderAll();
    }
    return response.events.length;
  }

  async requestNextMessage(): Promise<void> {
    try {
      await this.api.nextMessage(this.ids.sessionId);
    } catch (error: any) {
      if (error.code !== "pending_reply" && error.code !== "session_completed") {
        this.sink.banner(String(error.message ?? error));
      }
    }
    await this.pollOnce();
  }

  async advanceUntilPending(maxSteps = 50): Promise<void> {
    for (let i = 0; i < maxSteps; i++) {
      if (this.session.pending || this.session.status === "completed") return;
      await this.requestNextMessage();
    }
  }

  async sendReply(text: string): Promise<void> {
    if (!this.session.pending) {
      this.sink.banner("no question is awaiting a reply");
      return;
    }
    try {
      await this.api.reply(this.ids.sessionId, text);
    } catch (error: any) {
      this.sink.banner(String(error.message ?? error));
    }
    await this.pollOnce();
    await this.refreshMastery();
  }

  async refreshMastery(): Promise<void> {
    const snapshot = await this.api.studentModel(this.ids.studentId);
    this.sink.mastery(renderMasteryPanel(snapshot));
  }

  async refreshPlan(): Promise<void> {
    const response = await this.api.videoDsl(this.ids.videoId);
    const dsl = response.dsl_per_segment[this.ids.segmentIndex];
    if (dsl) {
      this.sink.plan(renderPlanInspector(dsl, this.thresholds));
    }
  }

  /** Instructor edit: validate locally; invalid thresholds never reach
      the server. */
  async replan(thresholds: Thresholds): Promise<string[]> {
    const errors = validateThresholds(thresholds);
    if (errors.length > 0) {
      const response = await this.api.videoDsl(this.ids.videoId);
      const dsl = response.dsl_per_segment[this.ids.segmentIndex];
      if (dsl) this.sink.plan(renderPlanInspector(dsl, thresholds, errors));
      return errors;
    }
    this.thresholds = thresholds;
    this.replanCalls += 1;
    const response = await this.api.replan(
      this.ids.videoId, this.ids.segmentIndex, this.ids.studentId, thresholds);
    this.sink.plan(renderPlanInspector(response.dsl, thresholds));
    return [];
  }
}

export function backoffDelays(baseMs: number, maxMs: number): (hadActivity: boolean) => number {
  let current = baseMs;
  return (hadActivity: boolean) => {
    if (hadActivity) {
      current = baseMs;
    } else {
      current = Math.min(current * 2, maxMs);
    }
    return current;
  };
}
