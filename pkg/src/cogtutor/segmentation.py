"""Per-learning-goal transcript segmentation and its accuracy metric.

The chain has three steps, each a separate operation so fixtures can
exercise them independently:

1. summarize each learning goal into bullet key points,
2. retrieve the transcript sentences aligning with those summaries,
3. rearrange the assignments into contiguous, time-ordered segments.

Transcripts longer than 12 minutes are pre-chunked at sentence
boundaries before retrieval and the per-chunk assignments merged; long
inputs otherwise degrade retrieval quality.

Consolidation rule in step 3: each goal keeps its longest contiguous run
of sentences; runs shorter than ``min_run`` are strays absorbed by the
nearest kept segment; longer non-majority runs merge back into their own
goal's segment when no other segment sits between, else they are absorbed
like strays (with a warning).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .errors import (
    EmptyGoalList,
    EmptyGold,
    EmptyTranscript,
    UnsummarizedGoal,
)
from .gateway import ChatRequest, LLMGateway
from .transcript import LearningGoal, TimedSentence, Transcript

log = logging.getLogger(__name__)

CHUNK_LIMIT_S = 12 * 60.0
DEFAULT_MIN_RUN = 2
BOUNDARY_THRESHOLD_S = 5.0

SUMMARIZE_SYSTEM = (
    "You summarize what a programming video transcript teaches for one "
    "named learning goal. Return between 1 and 8 bullet lines, each "
    "starting with '- ', covering the key points for that goal only."
)

RETRIEVE_SYSTEM = (
    "You align transcript sentences with a learning goal. Given the "
    "goal's summary points and numbered sentences, return a JSON array "
    'of {"index": <sentence index>, "score": <relevance in [0,1]>} for '
    "every sentence that belongs to this goal. Output only the JSON array."
)


@dataclass
class VideoSegment:
    goal_id: str
    start_s: float
    end_s: float
    sentences: list[TimedSentence] = field(default_factory=list)

    def text(self) -> str:
        return " ".join(s.text for s in self.sentences)

    def to_dict(self) -> dict:
        return {
            "goal_id": self.goal_id,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "sentences": [
                {"index": s.index, "start_s": s.start_s, "end_s": s.end_s, "text": s.text}
                for s in self.sentences
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "VideoSegment":
        sentences = [
            TimedSentence(index=s["index"], start_s=s["start_s"], end_s=s["end_s"], text=s["text"])
            for s in payload.get("sentences", [])
        ]
        return cls(
            goal_id=payload["goal_id"],
            start_s=payload["start_s"],
            end_s=payload["end_s"],
            sentences=sentences,
        )


# --- step 1: summarize -------------------------------------------------

_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")


def summarize_request(transcript: Transcript, goal: LearningGoal) -> ChatRequest:
    body = "\n".join(f"[{s.start_s:.1f}-{s.end_s:.1f}] {s.text}" for s in transcript.sentences)
    return ChatRequest(
        system_prompt=SUMMARIZE_SYSTEM,
        user_prompt=f"Learning goal: {goal.title}\n\nTranscript:\n{body}",
    )


def _parse_bullets(text: str) -> list[str]:
    bullets = []
    for line in text.splitlines():
        match = _BULLET.match(line)
        if match:
            bullets.append(match.group(1))
    if not bullets and text.strip():
        bullets = [text.strip()]
    return bullets[:8]


def summarize_goals(
    transcript: Transcript, goals: list[LearningGoal], gateway: LLMGateway
) -> list[LearningGoal]:
    """One completion per goal; fills summary_points, changes nothing else."""
    if not transcript.sentences:
        raise EmptyTranscript("cannot summarize an empty transcript")
    if not goals:
        raise EmptyGoalList("at least one learning goal is required")
    summarized = []
    for goal in goals:
        response = gateway.complete(summarize_request(transcript, goal))
        summarized.append(replace_summary(goal, _parse_bullets(response.text)))
    return summarized


def replace_summary(goal: LearningGoal, points: list[str]) -> LearningGoal:
    return LearningGoal(id=goal.id, title=goal.title, summary_points=points)


# --- step 2: retrieve ---------------------------------------------------


def retrieve_request(sentences: list[TimedSentence], goal: LearningGoal) -> ChatRequest:
    summary = "\n".join(f"- {point}" for point in goal.summary_points)
    body = "\n".join(f"{s.index}: {s.text}" for s in sentences)
    return ChatRequest(
        system_prompt=RETRIEVE_SYSTEM,
        user_prompt=(
            f"Learning goal: {goal.title}\nSummary points:\n{summary}\n\nSentences:\n{body}"
        ),
    )


def _parse_assignments(text: str) -> list[tuple[int, float]]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        start, end = text.find("["), text.rfind("]")
        if start == -1 or end <= start:
            return []
        try:
            data = json.loads(text[start:end + 1])
        except json.JSONDecodeError:
            return []
    out = []
    if isinstance(data, list):
        for entry in data:
            if isinstance(entry, dict) and isinstance(entry.get("index"), int):
                out.append((entry["index"], float(entry.get("score", 1.0))))
    return out


def _chunks(transcript: Transcript, limit_s: float) -> list[list[TimedSentence]]:
    if transcript.duration_s <= limit_s:
        return [list(transcript.sentences)]
    chunks: list[list[TimedSentence]] = []
    current: list[TimedSentence] = []
    chunk_start = None
    for sentence in transcript.sentences:
        if chunk_start is None:
            chunk_start = sentence.start_s
        if current and sentence.end_s - chunk_start > limit_s:
            chunks.append(current)
            current = []
            chunk_start = sentence.start_s
        current.append(sentence)
    if current:
        chunks.append(current)
    return chunks


def retrieve_alignments(
    transcript: Transcript,
    goals: list[LearningGoal],
    gateway: LLMGateway,
    chunk_limit_s: float = CHUNK_LIMIT_S,
) -> dict[str, list[int]]:
    """Map each goal to the transcript sentence indices supporting it.

    A sentence maps to at most one goal: when the provider claims it for
    several, the highest provider-reported score wins and ties go to the
    earlier goal in input order. Out-of-range indices are dropped with a
    warning. Sentences may stay unassigned (asides, silence).
    """
    for goal in goals:
        if not goal.summary_points:
            raise UnsummarizedGoal(f"goal {goal.id!r} has no summary points")
    valid = {s.index for s in transcript.sentences}
    # best claim per sentence: (score, goal input order)
    claims: dict[int, tuple[float, int]] = {}
    for chunk in _chunks(transcript, chunk_limit_s):
        for order, goal in enumerate(goals):
            response = gateway.complete(retrieve_request(chunk, goal))
            for index, score in _parse_assignments(response.text):
                if index not in valid:
                    log.warning(
                        "goal %s: provider returned out-of-range sentence index %d",
                        goal.id, index,
                    )
                    continue
                held = claims.get(index)
                if held is None or score > held[0] or (score == held[0] and order < held[1]):
                    claims[index] = (score, order)
    assignments: dict[str, list[int]] = {goal.id: [] for goal in goals}
    for index, (_, order) in sorted(claims.items()):
        assignments[goals[order].id].append(index)
    return {goal_id: indices for goal_id, indices in assignments.items() if indices}


# --- step 3: rearrange ---------------------------------------------------


def _runs(indices: list[int]) -> list[tuple[int, int]]:
    runs = []
    start = previous = indices[0]
    for index in indices[1:]:
        if index == previous + 1:
            previous = index
            continue
        runs.append((start, previous))
        start = previous = index
    runs.append((start, previous))
    return runs


def _span_distance(run: tuple[int, int], span: tuple[int, int]) -> int:
    if run[1] < span[0]:
        return span[0] - run[1]
    if run[0] > span[1]:
        return run[0] - span[1]
    return 0


def rearrange_segments(
    assignments: dict[str, list[int]],
    transcript: Transcript,
    min_run: int = DEFAULT_MIN_RUN,
) -> list[VideoSegment]:
    """Consolidate per-goal sentence assignments into ordered segments."""
    if not assignments:
        return []
    by_index = {s.index: s for s in transcript.sentences}

    kept: dict[str, tuple[int, int]] = {}
    leftovers: list[tuple[str, tuple[int, int]]] = []
    for goal_id, indices in assignments.items():
        runs = _runs(sorted(set(indices)))
        major = max(runs, key=lambda run: (run[1] - run[0], -run[0]))
        kept[goal_id] = major
        leftovers.extend((goal_id, run) for run in runs if run != major)

    for goal_id, run in sorted(leftovers, key=lambda pair: pair[1][0]):
        run_len = run[1] - run[0] + 1
        own = kept[goal_id]
        merged_lo = min(own[0], run[0])
        merged_hi = max(own[1], run[1])
        # another goal's segment inside the would-be merged span blocks an
        # own-goal merge; the run is then absorbed by its nearest neighbor
        blocked = any(
            other[0] <= merged_hi and other[1] >= merged_lo
            for gid, other in kept.items() if gid != goal_id
        )
        if run_len >= min_run and not blocked:
            target = goal_id
        else:
            if run_len >= min_run:
                log.warning(
                    "goal %s: run %s separated from its segment; absorbed by neighbor",
                    goal_id, run,
                )
            target = min(
                kept,
                key=lambda gid: (_span_distance(run, kept[gid]), kept[gid][0]),
            )
        span = kept[target]
        kept[target] = (min(span[0], run[0]), max(span[1], run[1]))

    segments = []
    for goal_id, (lo, hi) in kept.items():
        sentences = [by_index[i] for i in range(lo, hi + 1) if i in by_index]
        segments.append(VideoSegment(
            goal_id=goal_id,
            start_s=sentences[0].start_s,
            end_s=sentences[-1].end_s,
            sentences=sentences,
        ))
    segments.sort(key=lambda segment: segment.start_s)
    return segments


# --- composition ----------------------------------------------------------


def segment_pipeline(
    transcript: Transcript,
    goals: list[LearningGoal],
    gateway: LLMGateway,
    min_run: int = DEFAULT_MIN_RUN,
    chunk_limit_s: float = CHUNK_LIMIT_S,
) -> list[VideoSegment]:
    summarized = summarize_goals(transcript, goals, gateway)
    assignments = retrieve_alignments(transcript, summarized, gateway, chunk_limit_s)
    return rearrange_segments(assignments, transcript, min_run)


# --- boundary metric -------------------------------------------------------


def boundary_accuracy(
    gold: list[float], predicted: list[float], threshold_s: float = BOUNDARY_THRESHOLD_S
) -> float:
    """Fraction of gold boundaries with a one-to-one predicted partner
    within the inclusive threshold, matching greedily in ascending time."""
    if not gold:
        raise EmptyGold("gold boundary list is empty")
    gold = sorted(gold)
    predicted = sorted(predicted)
    hits = 0
    j = 0
    for g in gold:
        while j < len(predicted) and predicted[j] < g - threshold_s:
            j += 1
        if j < len(predicted) and abs(predicted[j] - g) <= threshold_s:
            hits += 1
            j += 1
    return hits / len(gold)


def segments_to_boundaries(segments: list[VideoSegment]) -> list[float]:
    """Inner boundaries: the start of every segment after the first."""
    ordered = sorted(segments, key=lambda segment: segment.start_s)
    return [segment.start_s for segment in ordered[1:]]
