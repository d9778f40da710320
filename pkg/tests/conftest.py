"""Shared fixtures: deterministic fake transports and fixture seeding.

The scripted chat transport stands in for a live provider during record
runs; replay runs then serve the recorded fixtures with no transport at
all. Grading requests deliberately fail at the transport so sessions
always grade through the engine's deterministic token fallback, in record
and replay alike.
"""

from __future__ import annotations

import hashlib
import json
import math
import re

import pytest

from cogtutor.engine import GRADER_SYSTEM, TUTOR_SYSTEM
from cogtutor.gateway import (
    ChatRequest,
    FixtureStore,
    LLMGateway,
    TransportError,
    canonical_request_hash,
    embedding_text_hash,
)
from cogtutor.knowledge import EXTRACTION_SYSTEM, REFORMULATE_SYSTEM
from cogtutor.segmentation import RETRIEVE_SYSTEM, SUMMARIZE_SYSTEM
from cogtutor.evaluation.ablation import BASELINE_SYSTEM, GROUNDED_SYSTEM


def seed_chat(fixture_dir, request: ChatRequest, text: str) -> None:
    store = FixtureStore(str(fixture_dir / "chat_fixtures.json"))
    store.put(canonical_request_hash(request), {"text": text})


def seed_embed(fixture_dir, text: str, values: list[float]) -> None:
    store = FixtureStore(str(fixture_dir / "embed_fixtures.json"))
    store.put(embedding_text_hash(text), {"values": values})


def replay_gateway(fixture_dir, **kwargs) -> LLMGateway:
    return LLMGateway(mode="replay", fixture_dir=str(fixture_dir), **kwargs)


def hash_vector(text: str, dim: int = 8) -> list[float]:
    """Deterministic pseudo-embedding: unit vector derived from a digest."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    raw = [int.from_bytes(digest[2 * i:2 * i + 2], "big") - 32768 for i in range(dim)]
    norm = math.sqrt(sum(v * v for v in raw)) or 1.0
    return [v / norm for v in raw]


class HashEmbedTransport:
    def __init__(self, dim: int = 8):
        self.dim = dim
        self.calls = 0

    def send(self, texts):
        self.calls += 1
        return [hash_vector(text, self.dim) for text in texts]


class FailingTransport:
    """Trips the test if replay mode ever reaches for the network."""

    def __init__(self):
        self.used = False

    def send(self, *args, **kwargs):
        self.used = True
        raise AssertionError("replay mode must not touch the transport")


class FlakyTransport:
    def __init__(self, failures: int, text: str = "recovered"):
        self.failures = failures
        self.text = text
        self.attempts = 0

    def send(self, request):
        self.attempts += 1
        if self.attempts <= self.failures:
            raise TransportError(f"transient failure {self.attempts}")
        return self.text


class ScriptedTutorTransport:
    """Deterministic fake provider covering every prompt shape the
    pipeline issues. Configure per-goal knowledge with `knowledge_map`:
    goal_id -> list of {domain, kind, text, support} dicts."""

    def __init__(self, knowledge_map: dict[str, list[dict]] | None = None,
                 reformulations: dict[str, str] | None = None):
        self.knowledge_map = knowledge_map or {}
        self.reformulations = reformulations or {}
        self.calls: list[ChatRequest] = []

    def send(self, request: ChatRequest) -> str:
        self.calls.append(request)
        system = request.system_prompt
        if system == SUMMARIZE_SYSTEM:
            return self._summarize(request)
        if system == RETRIEVE_SYSTEM:
            return self._retrieve(request)
        if system == EXTRACTION_SYSTEM:
            return self._extract(request)
        if system == REFORMULATE_SYSTEM:
            return self._reformulate(request)
        if system in (TUTOR_SYSTEM, GROUNDED_SYSTEM, BASELINE_SYSTEM):
            return self._utterance(request)
        if system == GRADER_SYSTEM:
            # grading stays on the deterministic fallback path
            raise TransportError("no scripted grader")
        raise TransportError(f"unscripted system prompt: {system[:60]}")

    def _summarize(self, request) -> str:
        goal = self._field(request.user_prompt, "Learning goal")
        return f"- key points for {goal}\n- practice steps for {goal}"

    def _retrieve(self, request) -> str:
        goal = self._field(request.user_prompt, "Learning goal")
        assignments = []
        for line in request.user_prompt.splitlines():
            match = re.match(r"^(\d+): (.*)$", line)
            if match and goal in match.group(2):
                assignments.append({"index": int(match.group(1)), "score": 0.9})
        return json.dumps(assignments)

    def _extract(self, request) -> str:
        goal = self._field(request.user_prompt, "Learning goal")
        return json.dumps(self.knowledge_map.get(goal, []))

    def _reformulate(self, request) -> str:
        sentence = request.user_prompt.split("Sentence:", 1)[1].strip()
        return self.reformulations.get(sentence, sentence)

    def _utterance(self, request) -> str:
        prompt = request.user_prompt
        knowledge = self._knowledge_line(prompt)
        # cue detection must ignore conversation history, which echoes
        # earlier cues; the instruction always precedes the knowledge line
        instruction = prompt.split("Knowledge", 1)[0].lower()
        if "____" in instruction:
            answer = self._answer(prompt)
            masked = knowledge.replace(answer, "____") if answer and answer in knowledge else f"____ {knowledge}"
            return f"Let's practice. {masked} Fill in the blank: ____"
        if "hint" in instruction:
            return f"Here's a hint about it. {knowledge} How would you proceed?"
        if "explain" in instruction:
            return f"Think about this: {knowledge} Can you explain how that works?"
        if "compare" in instruction:
            return f"Compare your own approach with the expert move: {knowledge}"
        if "challenge" in instruction:
            return f"Here is a challenge to try: adapt this idea somewhere new. {knowledge}"
        return f"Watch step by step: {knowledge} Takeaway: now you can apply it."

    @staticmethod
    def _field(prompt: str, label: str) -> str:
        for line in prompt.splitlines():
            if line.startswith(f"{label}:"):
                return line.split(":", 1)[1].strip()
        return ""

    @staticmethod
    def _knowledge_line(prompt: str) -> str:
        match = re.search(r"Knowledge(?: item)? \([^)]*\): (.*)", prompt)
        if match:
            return match.group(1).strip()
        match = re.search(r"Knowledge: (.*)", prompt)
        if match:
            return match.group(1).strip()
        return "the lesson content"

    @staticmethod
    def _answer(prompt: str) -> str:
        match = re.search(r"key part \((.+?)\) replaced", prompt)
        return match.group(1) if match else ""


def record_gateway(fixture_dir, knowledge_map=None, reformulations=None, dim: int = 8):
    transport = ScriptedTutorTransport(knowledge_map, reformulations)
    return LLMGateway(
        mode="record",
        fixture_dir=str(fixture_dir),
        chat_transport=transport,
        embed_transport=HashEmbedTransport(dim),
        sleep=lambda _s: None,
    )


# --- canned documents ----------------------------------------------------

CANONICAL_SENTENCES = {
    ("concept", "declarative"):
        "The median income by college major shows that majors earn a median "
        "income of over $30K right out of college.",
    ("concept", "procedural"):
        "To understand the distribution of earnings by college major, one must "
        "examine the histogram and identify overall trend or extreme values, "
        "considering whether high earnings are due to the field's financial reward.",
    ("programming", "declarative"):
        "The task is comparing the distribution of median earnings across "
        "different major categories using a box plot and adjusting the "
        "visualization for better readability and interpretation.",
    ("programming", "procedural"):
        "To achieve an ordered factor level based on the `Median', one must use "
        "`fct_reorder' on `Major_category', making it easier to compare distributions.",
}

ADAPTED_PROCEDURAL = (
    "To achieve an ordered factor level, one must use fct_reorder on "
    "Major_category because it eases comparison."
)


def sample_transcript_doc(goal_ids=("eda-box", "eda-hist"), per_goal=5, sentence_s=10.0):
    """Transcript whose sentence texts name their goal so the scripted
    retriever can assign them."""
    sentences = []
    t = 0.0
    for goal_id in goal_ids:
        for i in range(per_goal):
            sentences.append({
                "start_s": t,
                "end_s": t + sentence_s,
                "text": f"Now about {goal_id}: step {i} of the walkthrough.",
            })
            t += sentence_s
    return {"sentences": sentences}


def sample_goals_doc(goal_ids=("eda-box", "eda-hist")):
    return {"goals": [{"id": gid, "title": gid} for gid in goal_ids]}


@pytest.fixture
def fixture_dir(tmp_path):
    d = tmp_path / "fixtures"
    d.mkdir()
    return d
