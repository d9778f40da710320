"""Bayesian Knowledge Tracing over a persistent skill registry.

Each tracked skill is a two-state hidden Markov learner model: p_learn is
the current mastery estimate, p_transit the learn rate, p_guess and p_slip
the emission noise (both held below 0.5 to keep the model identifiable).
New skills start at the student's estimated mastery of the current
learning goal, 0.1 by default. Knowledge seen again later is matched back
to an existing skill either by exact normalized name or by embedding
cosine similarity above a threshold; one observation updates only the
best match (updating every skill above the threshold is the documented
alternative, not taken: it would let one reply move unrelated skills).

Models persist one JSON document per student under
``<store>/students/<id>.json`` with a checksum and an optimistic version
counter, so concurrent writers fail loudly instead of losing updates.
"""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass, field

from .errors import (
    DegenerateParameters,
    DimensionMismatch,
    DuplicateName,
    VersionConflict,
)
from .gateway import EmbeddingVector
from .storage import read_checksummed, write_checksummed
from .textnorm import normalize

DEFAULT_GOAL_MASTERY = 0.1
DEFAULT_P_TRANSIT = 0.2
DEFAULT_P_GUESS = 0.2
DEFAULT_P_SLIP = 0.1
SIMILARITY_THRESHOLD = 0.80

MODEL_VERSION = 1


@dataclass
class SkillRecord:
    skill_id: str
    name: str
    embedding: EmbeddingVector
    p_learn: float
    p_transit: float = DEFAULT_P_TRANSIT
    p_guess: float = DEFAULT_P_GUESS
    p_slip: float = DEFAULT_P_SLIP
    observations: list[dict] = field(default_factory=list)
    created_from: str = ""
    # times the tutor has presented this skill (served a step about it);
    # drives the Modeling-vs-Scaffolding choice for low-mastery skills
    exposures: int = 0

    def __post_init__(self):
        for label, value in (("p_learn", self.p_learn), ("p_transit", self.p_transit)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{label}={value} outside [0, 1]")
        if not 0.0 <= self.p_guess < 0.5:
            raise ValueError(f"p_guess={self.p_guess} must be in [0, 0.5)")
        if not 0.0 <= self.p_slip < 0.5:
            raise ValueError(f"p_slip={self.p_slip} must be in [0, 0.5)")

    def to_dict(self) -> dict:
        return {
            "skill_id": self.skill_id,
            "name": self.name,
            "embedding": list(self.embedding.values),
            "p_learn": self.p_learn,
            "p_transit": self.p_transit,
            "p_guess": self.p_guess,
            "p_slip": self.p_slip,
            "observations": list(self.observations),
            "created_from": self.created_from,
            "exposures": self.exposures,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SkillRecord":
        return cls(
            skill_id=payload["skill_id"],
            name=payload["name"],
            embedding=EmbeddingVector(tuple(payload.get("embedding", ()))),
            p_learn=payload["p_learn"],
            p_transit=payload["p_transit"],
            p_guess=payload["p_guess"],
            p_slip=payload["p_slip"],
            observations=list(payload.get("observations", [])),
            created_from=payload.get("created_from", ""),
            exposures=payload.get("exposures", 0),
        )


def init_skill(
    name: str,
    embedding: EmbeddingVector,
    goal_mastery_estimate: float = DEFAULT_GOAL_MASTERY,
    *,
    skill_id: str = "s000",
    p_transit: float = DEFAULT_P_TRANSIT,
    p_guess: float = DEFAULT_P_GUESS,
    p_slip: float = DEFAULT_P_SLIP,
    created_from: str = "",
) -> SkillRecord:
    if not name or normalize(name) != name or not name.strip():
        raise ValueError(f"skill name {name!r} must be normalized and non-empty")
    return SkillRecord(
        skill_id=skill_id,
        name=name,
        embedding=embedding,
        p_learn=goal_mastery_estimate,
        p_transit=p_transit,
        p_guess=p_guess,
        p_slip=p_slip,
        created_from=created_from,
    )


def bkt_update(record: SkillRecord, correct: bool, timestamp: float = 0.0) -> SkillRecord:
    """One BKT observation: Bayes posterior on the evidence, then the
    learning transition. Appends to the observation history in place."""
    p_l, p_s, p_g, p_t = record.p_learn, record.p_slip, record.p_guess, record.p_transit
    if correct:
        numerator = p_l * (1.0 - p_s)
        denominator = numerator + (1.0 - p_l) * p_g
    else:
        numerator = p_l * p_s
        denominator = numerator + (1.0 - p_l) * (1.0 - p_g)
    if denominator == 0.0:
        raise DegenerateParameters(
            f"BKT denominator is zero for skill {record.skill_id} (p_learn={p_l})"
        )
    posterior = numerator / denominator
    record.p_learn = posterior + (1.0 - posterior) * p_t
    record.observations.append(
        {"timestamp": timestamp, "correct": bool(correct), "p_learn_after": record.p_learn}
    )
    return record


def predict_correct(record: SkillRecord) -> float:
    return record.p_learn * (1.0 - record.p_slip) + (1.0 - record.p_learn) * record.p_guess


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"cosine over dims {a.dim} and {b.dim}")
    denom = a.norm() * b.norm()
    if denom == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(a.values, b.values)) / denom


@dataclass
class StudentModel:
    student_id: str
    skills: dict[str, SkillRecord] = field(default_factory=dict)
    goal_mastery: dict[str, float] = field(default_factory=dict)
    version: int = 0

    def skill_by_name(self, name: str) -> SkillRecord | None:
        wanted = normalize(name)
        for record in self.skills.values():
            if record.name == wanted:
                return record
        return None

    def add_skill(self, record: SkillRecord) -> SkillRecord:
        if self.skill_by_name(record.name) is not None:
            raise DuplicateName(f"skill named {record.name!r} already registered")
        self.skills[record.skill_id] = record
        return record

    def next_skill_id(self) -> str:
        return f"s{len(self.skills):03d}"

    def to_dict(self) -> dict:
        return {
            "model_version": MODEL_VERSION,
            "student_id": self.student_id,
            "skills": {sid: record.to_dict() for sid, record in self.skills.items()},
            "goal_mastery": dict(self.goal_mastery),
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StudentModel":
        return cls(
            student_id=payload["student_id"],
            skills={
                sid: SkillRecord.from_dict(raw)
                for sid, raw in payload.get("skills", {}).items()
            },
            goal_mastery=dict(payload.get("goal_mastery", {})),
            version=payload.get("version", 0),
        )


def match_skill(
    model: StudentModel,
    name: str,
    embedding: EmbeddingVector,
    threshold: float = SIMILARITY_THRESHOLD,
) -> str | None:
    """Find the registered skill this (name, embedding) refers to, if any.

    Exact normalized-name match short-circuits without touching the
    embedding. Otherwise the best cosine match wins if it clears the
    threshold; ties break to the lexicographically smallest skill_id.
    """
    named = model.skill_by_name(name)
    if named is not None:
        return named.skill_id
    best: tuple[str, float] | None = None
    for skill_id in sorted(model.skills):
        record = model.skills[skill_id]
        if record.embedding.dim == 0 or embedding.dim == 0:
            continue
        similarity = cosine_similarity(record.embedding, embedding)
        if similarity < threshold:
            continue
        # sorted iteration makes the smallest skill_id win exact ties
        if best is None or similarity > best[1]:
            best = (skill_id, similarity)
    return best[0] if best else None


def ensure_skill(
    model: StudentModel,
    name: str,
    embedding: EmbeddingVector,
    goal_mastery_estimate: float = DEFAULT_GOAL_MASTERY,
    created_from: str = "",
    threshold: float = SIMILARITY_THRESHOLD,
) -> str:
    """Match or register; the planner's auto-registration path."""
    name = normalize(name)
    existing = match_skill(model, name, embedding, threshold)
    if existing is not None:
        return existing
    record = init_skill(
        name,
        embedding,
        goal_mastery_estimate,
        skill_id=model.next_skill_id(),
        created_from=created_from,
    )
    model.add_skill(record)
    return record.skill_id


_SAFE_ID = re.compile(r"[^A-Za-z0-9._-]")


class ModelStore:
    """students/<id>.json persistence with optimistic version checks.

    In-process savers for one student are serialized by a lock; across
    processes the version check is the guard.
    """

    def __init__(self, root_dir: str):
        self.root = os.path.join(root_dir, "students")
        os.makedirs(self.root, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, student_id: str) -> str:
        return os.path.join(self.root, _SAFE_ID.sub("_", student_id) + ".json")

    def _lock(self, student_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(student_id, threading.Lock())

    def load(self, student_id: str) -> StudentModel:
        path = self._path(student_id)
        if not os.path.exists(path):
            # first-session bootstrap: unknown student is an empty model
            return StudentModel(student_id=student_id, version=0)
        return StudentModel.from_dict(read_checksummed(path))

    def save(self, model: StudentModel) -> StudentModel:
        with self._lock(model.student_id):
            path = self._path(model.student_id)
            stored_version = 0
            if os.path.exists(path):
                stored_version = read_checksummed(path).get("version", 0)
            if model.version != stored_version:
                raise VersionConflict(
                    f"student {model.student_id}: saving from version {model.version}, "
                    f"store has {stored_version}"
                )
            model.version += 1
            write_checksummed(path, model.to_dict())
            return model
