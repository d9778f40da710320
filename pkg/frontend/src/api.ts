// Thin typed client over the tutor service endpoints. `fetchFn` is
// injectable so controller tests can run against a scripted server.

import type { DslDoc, EventsResponse, StudentSnapshot, Thresholds } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

export interface TutorApiLike {
  createSession(studentId: string, videoId: string, segmentIndex: number):
    Promise<{ session_id: string }>;
  nextMessage(sessionId: string): Promise<{ message: { text: string } }>;
  reply(sessionId: string, text: string):
    Promise<{ assessment: { verdict: string }; next_message: unknown }>;
  events(sessionId: string, since: number): Promise<EventsResponse>;
  studentModel(studentId: string): Promise<StudentSnapshot>;
  videoDsl(videoId: string): Promise<{ dsl_per_segment: (DslDoc | null)[] }>;
  replan(videoId: string, segmentIndex: number, studentId: string,
         thresholds: Thresholds): Promise<{ dsl: DslDoc }>;
}

export class TutorApi implements TutorApiLike {
  constructor(private baseUrl = "", private fetchFn: FetchLike = fetch.bind(globalThis)) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, payload.code ?? "error",
                         payload.message ?? response.statusText);
    }
    return payload as T;
  }

  createSession(studentId: string, videoId: string, segmentIndex: number) {
    return this.call<{ session_id: string }>("POST", "/sessions", {
      student_id: studentId, video_id: videoId, segment_index: segmentIndex,
    });
  }

  nextMessage(sessionId: string) {
    return this.call<{ message: { text: string } }>(
      "GET", `/sessions/${encodeURIComponent(sessionId)}/next`);
  }

  reply(sessionId: string, text: string) {
    return this.call<{ assessment: { verdict: string }; next_message: unknown }>(
      "POST", `/sessions/${encodeURIComponent(sessionId)}/reply`, { text });
  }

  events(sessionId: string, since: number) {
    return this.call<EventsResponse>(
      "GET", `/sessions/${encodeURIComponent(sessionId)}/events?since=${since}`);
  }

  studentModel(studentId: string) {
    return this.call<StudentSnapshot & { api_version: number }>(
      "GET", `/students/${encodeURIComponent(studentId)}/model`);
  }

  videoDsl(videoId: string) {
    return this.call<{ dsl_per_segment: (DslDoc | null)[] }>(
      "GET", `/videos/${encodeURIComponent(videoId)}/dsl`);
  }

  videoSegments(videoId: string) {
    return this.call<{ segments: { goal_id: string; start_s: number; end_s: number }[] }>(
      "GET", `/videos/${encodeURIComponent(videoId)}/segments`);
  }

  replan(videoId: string, segmentIndex: number, studentId: string, thresholds: Thresholds) {
    return this.call<{ dsl: DslDoc }>(
      "POST",
      `/videos/${encodeURIComponent(videoId)}/segments/${segmentIndex}/replan`,
      { student_id: studentId, thresholds },
    );
  }
}
