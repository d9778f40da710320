// Browser bootstrap: binds the controller to the real DOM and fetch,
// polls the event log with backoff, and wires inputs. One in-flight
// mutation at a time: the composer disables itself while a reply is on
// the wire (and whenever the tutor is not waiting on us).

import { TutorApi } from "./api.js";
import { SessionController, backoffDelays } from "./controller.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function params() {
  const search = new URLSearchParams(location.search);
  return {
    studentId: search.get("student") ?? "learner",
    videoId: search.get("video") ?? "",
    segmentIndex: Number(search.get("segment") ?? "0"),
    videoUrl: search.get("video_url") ?? "",
  };
}

async function boot() {
  const { studentId, videoId, segmentIndex, videoUrl } = params();
  const banner = el<HTMLDivElement>("banner");
  if (!videoId) {
    banner.textContent =
      "Pass ?video=<video_id>&student=<student_id>&segment=<n> in the URL " +
      "(ingest a transcript first: POST /videos or `cogtutor segment`).";
    return;
  }
  const api = new TutorApi("");

  if (videoUrl) {
    const video = el<HTMLVideoElement>("video");
    video.src = videoUrl;
    video.hidden = false;
    // keep playback inside the current segment's bounds
    try {
      const { segments } = await api.videoSegments(videoId);
      const bounds = segments[segmentIndex];
      if (bounds) {
        video.addEventListener("loadedmetadata", () => {
          video.currentTime = bounds.start_s;
        });
        video.addEventListener("timeupdate", () => {
          if (video.currentTime > bounds.end_s) video.pause();
        });
      }
    } catch {
      // segment bounds are a nicety; the chat works without them
    }
  }
  const sink = {
    chat: (html: string) => { el("chat-root").innerHTML = html; bindComposer(); },
    mastery: (html: string) => { el("mastery-root").innerHTML = html; },
    plan: (html: string) => { el("plan-root").innerHTML = html; bindPlan(); },
    banner: (message: string) => { banner.textContent = message; },
  };

  const created = await api.createSession(studentId, videoId, segmentIndex);
  const controller = new SessionController(api, sink, {
    sessionId: created.session_id, studentId, videoId, segmentIndex,
  });

  function bindComposer() {
    const send = document.getElementById("reply-send");
    const input = document.getElementById("reply-input") as HTMLInputElement | null;
    if (!send || !input) return;
    send.addEventListener("click", async () => {
      const clozes = Array.from(
        document.querySelectorAll<HTMLInputElement>("input[data-cloze]"));
      const text = clozes.length > 0 && clozes.some((c) => c.value.trim())
        ? clozes.map((c) => c.value.trim()).join(" ")
        : input.value;
      if (!text.trim()) return;
      input.disabled = true;
      await controller.sendReply(text);
      await controller.advanceUntilPending();
    });
    input.addEventListener("keydown", (event) => {
      if (event.key === "Enter") (send as HTMLButtonElement).click();
    });
  }

  function bindPlan() {
    const button = document.getElementById("replan");
    if (!button) return;
    button.addEventListener("click", async () => {
      const read = (name: string) => Number(
        document.querySelector<HTMLInputElement>(`input[data-threshold="${name}"]`)?.value);
      await controller.replan({ low: read("low"), mid: read("mid"), high: read("high") });
    });
  }

  controller.renderAll();
  await controller.refreshMastery();
  await controller.refreshPlan();
  await controller.advanceUntilPending();

  const nextDelay = backoffDelays(800, 8000);
  const tick = async () => {
    try {
      const got = await controller.pollOnce();
      if (!controller.session.pending && controller.session.status === "active") {
        await controller.advanceUntilPending();
      }
      setTimeout(tick, nextDelay(got > 0));
    } catch (error: any) {
      banner.textContent = String(error.message ?? error);
      setTimeout(tick, nextDelay(false));
    }
  };
  setTimeout(tick, 800);
}

boot().catch((error) => {
  const banner = document.getElementById("banner");
  if (banner) banner.textContent = String(error.message ?? error);
});
