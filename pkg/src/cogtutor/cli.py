"""Command line entry points.

Provider configuration comes from the environment (COGTUTOR_MODE,
COGTUTOR_FIXTURE_DIR, COGTUTOR_LLM_ENDPOINT, ...); commands that need the
store accept --store or fall back to COGTUTOR_STORE_DIR.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .clock import clock_for_mode
from .engine import ConversationEngine
from .evaluation import (
    AblationRanking,
    TrueSkillParams,
    controllability_metrics,
    dunn_posthoc,
    format_report,
    IntentLabel,
    kruskal_wallis,
    spearman_rho,
    trueskill_rate,
)
from .gateway import LLMGateway
from .knowledge import extract_knowledge
from .planner import DSLDocument, build_dsl
from .segmentation import (
    VideoSegment,
    boundary_accuracy,
    segment_pipeline,
    segments_to_boundaries,
)
from .student import ModelStore
from .transcript import load_goals, load_transcript


def _gateway() -> LLMGateway:
    return LLMGateway.from_env()


def _store_dir(option_value: str | None) -> str:
    return option_value or os.environ.get("COGTUTOR_STORE_DIR", "./cogtutor-store")


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


@click.group()
def main():
    """Adaptive tutoring conversations from programming-video transcripts."""


@main.command()
@click.option("--transcript", "transcript_path", required=True, type=click.Path(exists=True))
@click.option("--goals", "goals_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path())
def segment(transcript_path, goals_path, out_dir):
    """Slice a transcript into per-learning-goal segments."""
    transcript = load_transcript(transcript_path)
    goals = load_goals(goals_path)
    segments = segment_pipeline(transcript, goals, _gateway())
    documents = [seg.to_dict() for seg in segments]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for i, document in enumerate(documents):
            path = os.path.join(out_dir, f"segment_{i:02d}_{document['goal_id']}.json")
            with open(path, "w", encoding="utf-8") as handle:
                json.dump(document, handle, indent=2)
        click.echo(f"wrote {len(documents)} segments to {out_dir}")
    else:
        click.echo(json.dumps({"segments": documents}, indent=2))


@main.command()
@click.option("--segment", "segment_path", required=True, type=click.Path(exists=True))
@click.option("--student", "student_id", required=True)
@click.option("--out", "out_path", default="dsl.json", type=click.Path())
@click.option("--store", "store", default=None, type=click.Path())
def plan(segment_path, student_id, out_path, store):
    """Extract knowledge from a segment and compile the teaching plan."""
    gateway = _gateway()
    clock = clock_for_mode(gateway.mode)
    segment_doc = VideoSegment.from_dict(_load_json(segment_path))
    items = extract_knowledge(segment_doc, gateway)
    if not items:
        click.echo("no parseable knowledge extracted; nothing to plan", err=True)
        sys.exit(1)
    models = ModelStore(_store_dir(store))
    model = models.load(student_id)
    dsl = build_dsl(
        items, model,
        segment_goal_id=segment_doc.goal_id,
        student_id=student_id,
        gateway=gateway,
        created_at=clock.now(),
    )
    models.save(model)
    knowledge_path = os.path.splitext(out_path)[0] + ".knowledge.json"
    with open(knowledge_path, "w", encoding="utf-8") as handle:
        json.dump([item.to_dict() for item in items], handle, indent=2)
    with open(out_path, "w", encoding="utf-8") as handle:
        json.dump(dsl.to_dict(), handle, indent=2)
    click.echo(f"wrote plan with {len(dsl.plan)} steps to {out_path}")


@main.command()
@click.option("--dsl", "dsl_path", required=True, type=click.Path(exists=True))
@click.option("--student", "student_id", required=True)
@click.option("--store", "store", default=None, type=click.Path())
@click.option("--script", "script_path", default=None, type=click.Path(exists=True),
              help="File with one scripted reply per line (for unattended runs).")
def chat(dsl_path, student_id, store, script_path):
    """Run a tutoring session in the terminal."""
    gateway = _gateway()
    engine = ConversationEngine(gateway, ModelStore(_store_dir(store)),
                                clock=clock_for_mode(gateway.mode))
    dsl = DSLDocument.from_dict(_load_json(dsl_path))
    session = engine.start_session(student_id, dsl)
    scripted = None
    if script_path:
        with open(script_path, "r", encoding="utf-8") as handle:
            scripted = iter([line.rstrip("\n") for line in handle])

    while session.status == "active":
        message = engine.next_tutor_message(session)
        click.echo(f"tutor> {message['text']}")
        while session.pending_step is not None:
            if scripted is not None:
                reply = next(scripted, None)
                if reply is None:
                    click.echo("(script exhausted)", err=True)
                    return
                click.echo(f"you> {reply}")
            else:
                reply = click.prompt("you", prompt_suffix="> ")
            assessment, next_message = engine.handle_student_reply(session, reply)
            click.echo(f"[{assessment.verdict}] {assessment.rationale}")
            if next_message is not None:
                click.echo(f"tutor> {next_message['text']}")
    click.echo("session completed")


@main.command()
@click.option("--port", default=8080, type=int)
@click.option("--store", "store", default=None, type=click.Path())
@click.option("--mode", default=None, type=click.Choice(["live", "record", "replay"]))
@click.option("--ui-dir", default=None, type=click.Path())
def serve(port, store, mode, ui_dir):
    """Serve the HTTP API (and the UI at /app when built)."""
    import uvicorn

    from .service import TutorService, create_app

    if mode:
        os.environ["COGTUTOR_MODE"] = mode
    gateway = _gateway()
    service = TutorService(_store_dir(store), gateway, clock_for_mode(gateway.mode))
    app = create_app(service, ui_dir=ui_dir)
    uvicorn.run(app, host="0.0.0.0", port=port)


@main.group()
def eval():
    """Evaluation harness commands."""


@eval.command("segmentation")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", default=5.0, type=float)
def eval_segmentation(gold_path, pred_path, threshold):
    """Boundary accuracy of predicted vs gold segment boundaries."""
    gold = _boundaries(_load_json(gold_path))
    pred = _boundaries(_load_json(pred_path))
    accuracy = boundary_accuracy(gold, pred, threshold)
    click.echo(json.dumps({
        "boundary_accuracy": accuracy,
        "threshold_s": threshold,
        "gold_count": len(gold),
        "predicted_count": len(pred),
    }, indent=2))


def _boundaries(document) -> list[float]:
    if isinstance(document, dict):
        if "boundaries" in document:
            return [float(b) for b in document["boundaries"]]
        if "goals" in document:
            starts = sorted(float(goal["start_s"]) for goal in document["goals"])
            return starts[1:]
        if "segments" in document:
            segments = [VideoSegment.from_dict(raw) for raw in document["segments"]]
            return segments_to_boundaries(segments)
    raise click.UsageError("expected a document with 'boundaries', 'goals', or 'segments'")


@eval.command("controllability")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, default=False)
def eval_controllability(labels_path, as_json):
    """Intent-alignment precision/recall/F1 per layer."""
    labels = [IntentLabel.from_dict(raw) for raw in _load_json(labels_path)]
    report = controllability_metrics(labels)
    if as_json:
        click.echo(json.dumps(report, indent=2))
    else:
        click.echo(format_report(report))


@eval.command("ablation")
@click.option("--rankings", "rankings_path", required=True, type=click.Path(exists=True))
@click.option("--params", "params_path", default=None, type=click.Path(exists=True))
def eval_ablation(rankings_path, params_path):
    """TrueSkill ratings from expert rankings of the ablation conditions."""
    rankings = [
        AblationRanking(
            item_id=str(raw["item_id"]),
            ranking=tuple(raw["ranking"]),
            dimension=raw.get("dimension", "credibility"),
            rater_id=str(raw.get("rater_id", "rater")),
        )
        for raw in _load_json(rankings_path)
    ]
    params = TrueSkillParams(**_load_json(params_path)) if params_path else TrueSkillParams()
    ratings = trueskill_rate(rankings, params)
    ordered = sorted(ratings.items(), key=lambda kv: -kv[1].mu)
    click.echo(json.dumps(
        {name: {"mu": rating.mu, "sigma": rating.sigma} for name, rating in ordered},
        indent=2,
    ))


@eval.command("stats")
@click.option("--groups", "groups_path", required=True, type=click.Path(exists=True))
def eval_stats(groups_path, ):
    """Kruskal-Wallis plus Dunn post hoc over condition groups."""
    document = _load_json(groups_path)
    groups = document["groups"] if isinstance(document, dict) else document
    kw = kruskal_wallis(groups)
    dunn = dunn_posthoc(groups)
    click.echo(json.dumps({
        "kruskal_wallis": kw,
        "dunn": {f"{i}-{j}": stats for (i, j), stats in dunn.items()},
    }, indent=2))


@eval.command("spearman")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
def eval_spearman(pairs_path):
    """Rank agreement between two raters: document {"x": [...], "y": [...]}."""
    document = _load_json(pairs_path)
    click.echo(json.dumps({"rho": spearman_rho(document["x"], document["y"])}))


if __name__ == "__main__":
    main()
