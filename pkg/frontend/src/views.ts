// Pure renderers: state in, HTML string out. Rendering the same state
// twice yields byte-identical markup; all interactivity is wired up by
// main.ts over data attributes.

import type {
  DslDoc,
  StudentSnapshot,
  Thresholds,
  ViewSession,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const CLOZE = "____";

function renderMessageText(text: string, withBlanks: boolean): string {
  if (!withBlanks || !text.includes(CLOZE)) {
    return escapeHtml(text);
  }
  // cloze markers become inline inputs on the live fill-in-blank turn
  return text
    .split(CLOZE)
    .map(escapeHtml)
    .join(`<input class="cloze" data-cloze="1" size="10" aria-label="blank">`);
}

export function renderChat(session: ViewSession): string {
  const rows: string[] = [];
  session.messages.forEach((message, i) => {
    const last = i === session.messages.length - 1;
    const live =
      last && session.pending && message.role === "tutor" &&
      message.interaction === "fill_in_blank";
    rows.push(
      `<div class="msg msg-${message.role}" data-step="${message.stepIndex ?? ""}">` +
      `<span class="who">${message.role}</span>` +
      `<span class="text">${renderMessageText(message.text, live)}</span>` +
      `</div>`,
    );
  });
  const lastAssessment = session.assessments[session.assessments.length - 1];
  const verdict = lastAssessment
    ? `<div class="verdict verdict-${escapeHtml(lastAssessment.verdict)}">` +
      `${escapeHtml(lastAssessment.verdict)}: ${escapeHtml(lastAssessment.rationale)}</div>`
    : "";
  const inputState = session.pending ? "" : "disabled";
  const hint = session.status === "completed"
    ? "session completed"
    : session.pending ? "your turn" : "tutor is continuing…";
  return (
    `<div class="chat" data-status="${escapeHtml(session.status)}">` +
    rows.join("") + verdict +
    `<div class="composer">` +
    `<input id="reply-input" ${inputState} placeholder="${escapeHtml(hint)}">` +
    `<button id="reply-send" ${inputState}>Send</button>` +
    `</div></div>`
  );
}

const SPARK_LEVELS = "▁▂▃▄▅▆▇█";

export function sparkline(values: number[]): string {
  if (values.length === 0) return "";
  return values
    .map((v) => {
      const clamped = Math.min(Math.max(v, 0), 1);
      const idx = Math.min(Math.floor(clamped * SPARK_LEVELS.length), SPARK_LEVELS.length - 1);
      return SPARK_LEVELS[idx];
    })
    .join("");
}

export function renderMasteryPanel(snapshot: StudentSnapshot): string {
  const skills = snapshot.skills.slice().sort((a, b) =>
    b.p_learn - a.p_learn || a.skill_id.localeCompare(b.skill_id));
  if (skills.length === 0) {
    return `<div class="mastery empty">No tracked skills yet.</div>`;
  }
  const rows = skills.map((skill) => {
    const pct = Math.round(skill.p_learn * 100);
    const label = skill.p_learn.toFixed(2);
    const history = sparkline(skill.observations.map((o) => o.p_learn_after));
    return (
      `<div class="skill" data-skill="${escapeHtml(skill.skill_id)}">` +
      `<span class="skill-name">${escapeHtml(skill.name)}</span>` +
      `<span class="bar"><span class="bar-fill" style="width:${pct}%" data-pct="${pct}"></span></span>` +
      `<span class="skill-score">${label}</span>` +
      `<span class="spark">${history}</span>` +
      `</div>`
    );
  });
  return `<div class="mastery">${rows.join("")}</div>`;
}

export function validateThresholds(t: Thresholds): string[] {
  const errors: string[] = [];
  for (const [name, value] of Object.entries(t)) {
    if (!Number.isFinite(value) || value <= 0 || value >= 1) {
      errors.push(`${name} must be between 0 and 1`);
    }
  }
  if (errors.length === 0 && !(t.low < t.mid && t.mid < t.high)) {
    errors.push("thresholds must satisfy low < mid < high");
  }
  return errors;
}

export function renderPlanInspector(
  dsl: DslDoc,
  thresholds: Thresholds,
  errors: string[] = [],
): string {
  const rows = dsl.plan.map((step) =>
    `<tr data-step="${step.step_index}">` +
    `<td>${step.step_index}</td>` +
    `<td>${escapeHtml(step.knowledge_id)}</td>` +
    `<td>${escapeHtml(step.move)}</td>` +
    `<td>${escapeHtml(step.action)}</td>` +
    `<td>${escapeHtml(step.interaction)}</td>` +
    `</tr>`,
  );
  const errorHtml = errors.length
    ? `<div class="plan-errors">${errors.map(escapeHtml).join("<br>")}</div>`
    : "";
  const field = (name: keyof Thresholds) =>
    `<label>${name} <input class="threshold" data-threshold="${name}" ` +
    `value="${thresholds[name]}" size="5"></label>`;
  return (
    `<div class="plan" data-goal="${escapeHtml(dsl.segment_goal_id)}">` +
    `<table><thead><tr><th>#</th><th>knowledge</th><th>move</th>` +
    `<th>action</th><th>interaction</th></tr></thead>` +
    `<tbody>${rows.join("")}</tbody></table>` +
    `<div class="plan-controls">` +
    field("low") + field("mid") + field("high") +
    `<button id="replan">Re-plan</button>` +
    `</div>` + errorHtml +
    `</div>`
  );
}
