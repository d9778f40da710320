"""Transcript ingestion: canonical sentence lists from JSON, SRT, or WebVTT.

The canonical form is a list of timestamped sentences. Subtitle formats
arrive as caption blocks that rarely align with sentence boundaries, so
captions are joined and re-split on sentence-final punctuation; each
rebuilt sentence spans from the start of its first contributing caption
to the end of its last.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import MalformedDocument


@dataclass(frozen=True)
class TimedSentence:
    index: int
    start_s: float
    end_s: float
    text: str


@dataclass
class Transcript:
    sentences: list[TimedSentence] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def duration_s(self) -> float:
        return self.sentences[-1].end_s if self.sentences else 0.0

    def to_dict(self) -> dict:
        return {
            "sentences": [
                {"start_s": s.start_s, "end_s": s.end_s, "text": s.text}
                for s in self.sentences
            ]
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Transcript":
        raw = payload.get("sentences")
        if not isinstance(raw, list) or not raw:
            raise MalformedDocument("transcript must contain a non-empty 'sentences' list")
        sentences: list[TimedSentence] = []
        previous_start = None
        for i, entry in enumerate(raw):
            try:
                start = float(entry["start_s"])
                end = float(entry["end_s"])
                text = str(entry["text"])
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedDocument(
                    f"sentence {i} is malformed", detail={"index": i, "error": str(exc)}
                ) from exc
            if start < 0 or end < start:
                raise MalformedDocument(
                    f"sentence {i} has invalid time span [{start}, {end}]",
                    detail={"index": i},
                )
            if previous_start is not None and start < previous_start:
                raise MalformedDocument(
                    f"sentence {i} starts before sentence {i - 1} (unsorted timestamps)",
                    detail={"index": i},
                )
            previous_start = start
            sentences.append(TimedSentence(index=i, start_s=start, end_s=end, text=text))
        return cls(sentences=sentences)


@dataclass
class LearningGoal:
    id: str
    title: str
    summary_points: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "summary_points": list(self.summary_points)}

    @classmethod
    def from_dict(cls, payload: dict) -> "LearningGoal":
        return cls(
            id=payload["id"],
            title=payload.get("title", payload["id"]),
            summary_points=list(payload.get("summary_points", [])),
        )


def goals_from_dict(payload: dict) -> list[LearningGoal]:
    raw = payload.get("goals")
    if not isinstance(raw, list) or not raw:
        raise MalformedDocument("goals document must contain a non-empty 'goals' list")
    goals = []
    seen: set[str] = set()
    for i, entry in enumerate(raw):
        try:
            goal = LearningGoal.from_dict(entry)
        except (KeyError, TypeError) as exc:
            raise MalformedDocument(f"goal {i} is malformed", detail={"index": i}) from exc
        if goal.id in seen:
            raise MalformedDocument(f"duplicate goal id {goal.id!r}", detail={"index": i})
        seen.add(goal.id)
        goals.append(goal)
    return goals


# --- subtitle formats -------------------------------------------------

_TIMESTAMP = re.compile(
    r"(?:(\d+):)?(\d{1,2}):(\d{2})[.,](\d{3})"
)
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def _parse_timestamp(raw: str) -> float:
    match = _TIMESTAMP.fullmatch(raw.strip())
    if not match:
        raise MalformedDocument(f"bad subtitle timestamp {raw!r}")
    hours = int(match.group(1) or 0)
    return hours * 3600 + int(match.group(2)) * 60 + int(match.group(3)) + int(match.group(4)) / 1000.0


def _caption_blocks(text: str) -> list[tuple[float, float, str]]:
    blocks = []
    for block in re.split(r"\n\s*\n", text.strip()):
        lines = [line.strip() for line in block.splitlines() if line.strip()]
        timing = next((line for line in lines if "-->" in line), None)
        if timing is None:
            continue
        start_raw, _, end_raw = timing.partition("-->")
        # WebVTT allows cue settings after the end timestamp
        end_raw = end_raw.strip().split(" ")[0]
        start = _parse_timestamp(start_raw)
        end = _parse_timestamp(end_raw)
        content = " ".join(line for line in lines[lines.index(timing) + 1:])
        if content:
            blocks.append((start, end, content))
    return blocks


def from_subtitles(text: str) -> Transcript:
    """Rebuild sentences from SRT/WebVTT caption blocks."""
    blocks = _caption_blocks(text)
    if not blocks:
        raise MalformedDocument("no caption blocks found")
    sentences: list[dict] = []
    pending_text = ""
    pending_start = None
    for start, end, content in blocks:
        if pending_start is None:
            pending_start = start
        pending_text = (pending_text + " " + content).strip()
        pieces = _SENTENCE_END.split(pending_text)
        for piece in pieces[:-1]:
            sentences.append({"start_s": pending_start, "end_s": end, "text": piece.strip()})
            pending_start = start
        pending_text = pieces[-1]
        if pending_text and pending_text[-1] in ".!?":
            sentences.append({"start_s": pending_start, "end_s": end, "text": pending_text})
            pending_text = ""
            pending_start = None
    if pending_text:
        last_end = blocks[-1][1]
        sentences.append({"start_s": pending_start or 0.0, "end_s": last_end, "text": pending_text})
    return Transcript.from_dict({"sentences": sentences})


def load_transcript(path: str) -> Transcript:
    with open(path, "r", encoding="utf-8") as handle:
        raw = handle.read()
    lower = path.lower()
    if lower.endswith(".srt") or lower.endswith(".vtt") or raw.lstrip().startswith("WEBVTT"):
        return from_subtitles(raw)
    return Transcript.from_dict(json.loads(raw))


def load_goals(path: str) -> list[LearningGoal]:
    with open(path, "r", encoding="utf-8") as handle:
        return goals_from_dict(json.load(handle))
