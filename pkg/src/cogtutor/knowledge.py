"""Templated knowledge extraction and the slot grammars behind it.

Four fixed grammars, one per (domain, kind):

* concept/declarative      [subject] [verb phrase] "that" [independent clause]
* concept/procedural       "To achieve"|"To understand" [goal] "one must"
                           [actions] [details] "considering"|"using" [factors]
* programming/declarative  "The task is" [final_goal] "using" [method]
                           "and" [additional]
* programming/procedural   "To achieve" [goal] "one must" [action_tool]
                           "on" [object] "because" [reason]

Parsing rules, all deterministic:

* Anchors match case-insensitively, tolerate an optional comma before the
  anchor word(s), and must sit on word boundaries.
* Each anchor after the first binds to its LAST occurrence, so earlier
  slots absorb embedded anchor words (longest match).
* programming/procedural accepts a comma-led purpose clause in place of
  the literal word "because" ("..., making it easier to ..."), because
  real transcribed prose frequently realizes the reason slot that way.
* Adjacent slot pairs with no anchor between them split deterministically:
  [subject]/[verb phrase] at the last whitespace (verb phrase gets the
  final token), [actions]/[details] at the last comma, with an empty
  details slot allowed when the sentence has no detail clause.

A parse keeps the verbatim anchor spans it consumed, so re-rendering a
parsed sentence reproduces the original up to whitespace even when the
sentence used "To understand", "using", or the comma-purpose variant.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .errors import NotProcedural, ParseFailure
from .gateway import ChatRequest, LLMGateway
from .textnorm import normalize

log = logging.getLogger(__name__)

DOMAINS = ("concept", "programming")
KINDS = ("declarative", "procedural")

SPLIT_SINGLE = "single"
SPLIT_LAST_SPACE = "last_space"
SPLIT_LAST_COMMA = "last_comma"


@dataclass(frozen=True)
class Anchor:
    alternatives: tuple[str, ...]
    comma_fallback: bool = False  # accept ", <purpose clause>" when absent


@dataclass(frozen=True)
class SlotGroup:
    names: tuple[str, ...]
    split: str = SPLIT_SINGLE


@dataclass(frozen=True)
class TemplateGrammar:
    domain: str
    kind: str
    lead: Anchor | None
    # alternating slot groups and the anchor that follows each; the final
    # group has no trailing anchor
    groups: tuple[tuple[SlotGroup, Anchor | None], ...]

    @property
    def slot_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for group, _ in self.groups:
            names.extend(group.names)
        return tuple(names)


GRAMMARS: dict[tuple[str, str], TemplateGrammar] = {
    ("concept", "declarative"): TemplateGrammar(
        "concept", "declarative",
        lead=None,
        groups=(
            (SlotGroup(("subject", "verb_phrase"), SPLIT_LAST_SPACE), Anchor(("that",))),
            (SlotGroup(("independent_clause",)), None),
        ),
    ),
    ("concept", "procedural"): TemplateGrammar(
        "concept", "procedural",
        lead=Anchor(("To achieve", "To understand")),
        groups=(
            (SlotGroup(("goal",)), Anchor(("one must",))),
            (SlotGroup(("actions", "details"), SPLIT_LAST_COMMA), Anchor(("considering", "using"))),
            (SlotGroup(("factors",)), None),
        ),
    ),
    ("programming", "declarative"): TemplateGrammar(
        "programming", "declarative",
        lead=Anchor(("The task is",)),
        groups=(
            (SlotGroup(("final_goal",)), Anchor(("using",))),
            (SlotGroup(("method",)), Anchor(("and",))),
            (SlotGroup(("additional",)), None),
        ),
    ),
    ("programming", "procedural"): TemplateGrammar(
        "programming", "procedural",
        lead=Anchor(("To achieve",)),
        groups=(
            (SlotGroup(("goal",)), Anchor(("one must",))),
            (SlotGroup(("action_tool",)), Anchor(("on",))),
            (SlotGroup(("object",)), Anchor(("because",), comma_fallback=True)),
            (SlotGroup(("reason",)), None),
        ),
    ),
}

# Slots that may legitimately be empty: Table-style prose often skips the
# optional detail clause entirely.
OPTIONAL_SLOTS = {("concept", "procedural"): ("details",)}


@dataclass(frozen=True)
class ParsedTemplate:
    domain: str
    kind: str
    slots: dict[str, str]
    # verbatim pieces in document order; kind is "anchor" or "chunk"
    pieces: tuple[tuple[str, str], ...]
    trailing: str = ""


def _anchor_regex(alternative: str, lead: bool) -> re.Pattern:
    words = r"\s+".join(re.escape(word) for word in alternative.split())
    if lead:
        return re.compile(r"^\s*" + words + r"\b", re.IGNORECASE)
    return re.compile(r"(?:,)?\s+" + words + r"\b", re.IGNORECASE)


def _find_last(text: str, anchor: Anchor) -> re.Match | None:
    best: re.Match | None = None
    for alternative in anchor.alternatives:
        for match in _anchor_regex(alternative, lead=False).finditer(text):
            if best is None or match.start() > best.start():
                best = match
    return best


def _split_group(group: SlotGroup, chunk: str, offset: int) -> dict[str, str]:
    chunk = chunk.strip()
    if group.split == SPLIT_SINGLE:
        if not chunk:
            raise ParseFailure(offset, f"text for [{group.names[0]}]")
        return {group.names[0]: chunk}
    if group.split == SPLIT_LAST_SPACE:
        parts = chunk.rsplit(None, 1)
        if len(parts) < 2:
            raise ParseFailure(offset, f"text for [{group.names[0]}] [{group.names[1]}]")
        return {group.names[0]: parts[0], group.names[1]: parts[1]}
    if group.split == SPLIT_LAST_COMMA:
        first, sep, second = chunk.rpartition(",")
        if sep:
            head, tail = first.strip(), second.strip()
        else:
            head, tail = chunk, ""
        if not head:
            raise ParseFailure(offset, f"text for [{group.names[0]}]")
        return {group.names[0]: head, group.names[1]: tail}
    raise AssertionError(f"unknown split rule {group.split}")


def parse_structured(text: str, domain: str, kind: str) -> ParsedTemplate:
    """Full parse: slots plus the verbatim anchor spans, for re-rendering."""
    grammar = GRAMMARS[(domain, kind)]
    body = text.rstrip()
    trailing = ""
    if body and body[-1] in ".!?":
        trailing = body[-1]
        body = body[:-1].rstrip()

    pieces: list[tuple[str, str]] = []
    cursor = 0  # offset into `body` for error positions
    remaining = body

    if grammar.lead is not None:
        match = None
        for alternative in grammar.lead.alternatives:
            match = _anchor_regex(alternative, lead=True).match(remaining)
            if match:
                break
        if match is None:
            raise ParseFailure(0, grammar.lead.alternatives[0])
        pieces.append(("anchor", remaining[match.start():match.end()].strip()))
        remaining = remaining[match.end():]
        cursor += match.end()

    slots: dict[str, str] = {}
    for group, anchor in grammar.groups:
        if anchor is None:
            chunk = remaining
            remaining = ""
        else:
            match = _find_last(remaining, anchor)
            if match is None and anchor.comma_fallback:
                match = None
                for m in re.finditer(r",\s*", remaining):
                    match = m
            if match is None:
                raise ParseFailure(cursor, anchor.alternatives[0])
            chunk = remaining[:match.start()]
            realized = remaining[match.start():match.end()]
            remaining = remaining[match.end():]
        slots.update(_split_group(group, chunk, cursor))
        pieces.append(("chunk", chunk.strip()))
        if anchor is not None:
            if realized.lstrip().startswith(","):
                rest = realized.lstrip()[1:].strip()
                piece = "," + (" " + rest if rest else "")
            else:
                piece = realized.strip()
            pieces.append(("anchor", piece))
            cursor += match.end()

    return ParsedTemplate(domain=domain, kind=kind, slots=slots, pieces=tuple(pieces), trailing=trailing)


def parse_template(text: str, domain: str, kind: str) -> dict[str, str]:
    """Slot map only; the operation most callers need."""
    return parse_structured(text, domain, kind).slots


def render_parsed(parsed: ParsedTemplate) -> str:
    """Reassemble a parse; equal to the source text up to whitespace."""
    out = ""
    for kind_, piece in parsed.pieces:
        if not piece:
            continue
        if piece.startswith(","):
            out += piece
        elif out:
            out += " " + piece
        else:
            out = piece
    return out + parsed.trailing


def render_canonical(domain: str, kind: str, slots: dict[str, str],
                     lead_variant: str | None = None,
                     tail_variant: str | None = None) -> str:
    """Render slots through the grammar's canonical surface form."""
    if (domain, kind) == ("concept", "declarative"):
        return f"{slots['subject']} {slots['verb_phrase']} that {slots['independent_clause']}."
    if (domain, kind) == ("concept", "procedural"):
        lead = lead_variant or "To achieve"
        tail = tail_variant or "considering"
        detail = f", {slots['details']}" if slots.get("details") else ""
        return f"{lead} {slots['goal']}, one must {slots['actions']}{detail}, {tail} {slots['factors']}."
    if (domain, kind) == ("programming", "declarative"):
        return f"The task is {slots['final_goal']} using {slots['method']} and {slots['additional']}."
    if (domain, kind) == ("programming", "procedural"):
        return f"To achieve {slots['goal']}, one must {slots['action_tool']} on {slots['object']} because {slots['reason']}."
    raise KeyError((domain, kind))


def pattern_description(domain: str, kind: str) -> str:
    grammar = GRAMMARS[(domain, kind)]
    parts: list[str] = []
    if grammar.lead is not None:
        parts.append("/".join(grammar.lead.alternatives))
    for group, anchor in grammar.groups:
        parts.extend(f"[{name}]" for name in group.names)
        if anchor is not None:
            parts.append("/".join(anchor.alternatives))
    return " + ".join(parts)


# --- knowledge items -------------------------------------------------


@dataclass
class KnowledgeItem:
    """One templated statement extracted from a segment."""

    id: str
    segment_goal_id: str
    domain: str
    kind: str
    text: str
    slots: dict[str, str]
    skill_ids: list[str] = field(default_factory=list)
    source_timestamp_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "segment_goal_id": self.segment_goal_id,
            "domain": self.domain,
            "kind": self.kind,
            "text": self.text,
            "slots": dict(self.slots),
            "skill_ids": list(self.skill_ids),
            "source_timestamp_s": self.source_timestamp_s,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "KnowledgeItem":
        return cls(
            id=payload["id"],
            segment_goal_id=payload["segment_goal_id"],
            domain=payload["domain"],
            kind=payload["kind"],
            text=payload["text"],
            slots=dict(payload["slots"]),
            skill_ids=list(payload.get("skill_ids", [])),
            source_timestamp_s=payload.get("source_timestamp_s", 0.0),
        )


def derive_skill_name(item: KnowledgeItem) -> list[str]:
    """Skill name(s) for the student model, from the item's key slots.

    programming/procedural joins the goal (with its template verb
    reattached, matching how the tracked-skill surface form is written)
    and the action+tool; concept/procedural uses the actions slot alone.
    Normalization makes the result idempotent.
    """
    if item.kind != "procedural":
        raise NotProcedural(f"item {item.id} is {item.kind}")
    if item.domain == "programming":
        return [normalize(f"achieve {item.slots['goal']} {item.slots['action_tool']}")]
    return [normalize(item.slots["actions"])]


# --- extraction ------------------------------------------------------

EXTRACTION_SYSTEM = """You extract teaching knowledge from a programming video transcript segment.
Return a JSON array. Each element must be an object with keys:
  "domain": "concept" or "programming"
  "kind": "declarative" or "procedural"
  "text": one full sentence following the matching pattern below, verbatim anchors included
  "support": array of transcript sentence indices the statement came from
Patterns:
  concept declarative:      {cd}
  concept procedural:       {cp}
  programming declarative:  {pd}
  programming procedural:   {pp}
Output only the JSON array.""".format(
    cd=pattern_description("concept", "declarative"),
    cp=pattern_description("concept", "procedural"),
    pd=pattern_description("programming", "declarative"),
    pp=pattern_description("programming", "procedural"),
)

REFORMULATE_SYSTEM = (
    "Rewrite the sentence so it matches the given template pattern exactly, "
    "preserving its meaning. Output only the rewritten sentence."
)


def _json_array(text: str) -> list:
    try:
        parsed = json.loads(text)
        if isinstance(parsed, list):
            return parsed
    except json.JSONDecodeError:
        pass
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        try:
            parsed = json.loads(text[start:end + 1])
            if isinstance(parsed, list):
                return parsed
        except json.JSONDecodeError:
            pass
    return []


def extraction_request(segment) -> ChatRequest:
    lines = [f"Learning goal: {segment.goal_id}"]
    for sentence in segment.sentences:
        lines.append(f"{sentence.index} [{sentence.start_s:.1f}-{sentence.end_s:.1f}] {sentence.text}")
    return ChatRequest(system_prompt=EXTRACTION_SYSTEM, user_prompt="\n".join(lines))


def reformulate_request(text: str, domain: str, kind: str) -> ChatRequest:
    return ChatRequest(
        system_prompt=REFORMULATE_SYSTEM,
        user_prompt=f"Template: {pattern_description(domain, kind)}\nSentence: {text}",
    )


def extract_knowledge(segment, gateway: LLMGateway) -> list[KnowledgeItem]:
    """Extract templated items from one segment.

    Items whose text fails its grammar get one reformulation completion;
    still-failing items are dropped with a warning rather than an error.
    skill_ids stay empty here; the student-model linking step fills them.
    """
    if not segment.sentences:
        raise ValueError("segment has no sentences")
    response = gateway.complete(extraction_request(segment))
    raw_items = _json_array(response.text)

    items: list[KnowledgeItem] = []
    for raw in raw_items:
        domain = raw.get("domain", "")
        kind = raw.get("kind", "")
        text = str(raw.get("text", "")).strip()
        if (domain, kind) not in GRAMMARS or not text:
            log.warning("segment %s: malformed extraction entry %r dropped", segment.goal_id, raw)
            continue
        slots = _parse_or_reformulate(text, domain, kind, segment, gateway)
        if slots is None:
            continue
        text, slot_map = slots
        timestamp = _support_timestamp(raw.get("support"), segment)
        items.append(KnowledgeItem(
            id=f"{segment.goal_id}-k{len(items):02d}",
            segment_goal_id=segment.goal_id,
            domain=domain,
            kind=kind,
            text=text,
            slots=slot_map,
            source_timestamp_s=timestamp,
        ))
    if not items:
        log.warning("segment %s: no parseable knowledge items", segment.goal_id)
    return items


def _parse_or_reformulate(text, domain, kind, segment, gateway):
    try:
        return text, parse_template(text, domain, kind)
    except ParseFailure as first_failure:
        reply = gateway.complete(reformulate_request(text, domain, kind))
        retry = reply.text.strip()
        try:
            return retry, parse_template(retry, domain, kind)
        except ParseFailure:
            log.warning(
                "segment %s: dropped unparseable %s/%s item %r (%s)",
                segment.goal_id, domain, kind, text, first_failure,
            )
            return None


def _support_timestamp(support, segment) -> float:
    by_index = {sentence.index: sentence for sentence in segment.sentences}
    if isinstance(support, list):
        starts = [by_index[i].start_s for i in support if isinstance(i, int) and i in by_index]
        if starts:
            return min(starts)
    return segment.start_s


def link_skill_ids(item: KnowledgeItem, skill_ids: list[str]) -> KnowledgeItem:
    item.skill_ids = list(skill_ids)
    return item
