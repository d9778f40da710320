import json

import pytest

from cogtutor.errors import (
    EmptyGoalList,
    EmptyGold,
    EmptyTranscript,
    UnsummarizedGoal,
)
from cogtutor.segmentation import (
    boundary_accuracy,
    rearrange_segments,
    retrieve_alignments,
    retrieve_request,
    segment_pipeline,
    segments_to_boundaries,
    summarize_goals,
    summarize_request,
)
from cogtutor.transcript import LearningGoal, Transcript

from conftest import (
    record_gateway,
    replay_gateway,
    sample_goals_doc,
    sample_transcript_doc,
    seed_chat,
)


def transcript_of(texts, sentence_s=10.0):
    t = 0.0
    sentences = []
    for text in texts:
        sentences.append({"start_s": t, "end_s": t + sentence_s, "text": text})
        t += sentence_s
    return Transcript.from_dict({"sentences": sentences})


def goal(goal_id, points=()):
    return LearningGoal(id=goal_id, title=goal_id, summary_points=list(points))


class TestSummarize:
    def test_fixture_fills_summary_points(self, fixture_dir):
        transcript = transcript_of(["first sentence.", "second sentence."])
        g = goal("box plot comparison")
        seed_chat(
            fixture_dir, summarize_request(transcript, g),
            "- reorder factor levels by median\n- draw box plot per major category",
        )
        out = summarize_goals(transcript, [g], replay_gateway(fixture_dir))
        assert out[0].summary_points == [
            "reorder factor levels by median",
            "draw box plot per major category",
        ]
        assert g.summary_points == []  # input goal untouched

    def test_zero_goals_rejected(self, fixture_dir):
        with pytest.raises(EmptyGoalList):
            summarize_goals(transcript_of(["x."]), [], replay_gateway(fixture_dir))

    def test_empty_transcript_rejected(self, fixture_dir):
        with pytest.raises(EmptyTranscript):
            summarize_goals(Transcript(), [goal("g")], replay_gateway(fixture_dir))

    def test_one_call_per_goal(self, fixture_dir):
        gateway = record_gateway(fixture_dir)
        transcript = transcript_of(["only sentence."])
        summarize_goals(transcript, [goal("g1")], gateway)
        assert len(gateway._chat_transport.calls) == 1

    def test_bullets_capped_at_eight(self, fixture_dir):
        transcript = transcript_of(["x."])
        g = goal("g")
        seed_chat(fixture_dir, summarize_request(transcript, g),
                  "\n".join(f"- point {i}" for i in range(12)))
        out = summarize_goals(transcript, [g], replay_gateway(fixture_dir))
        assert len(out[0].summary_points) == 8


class TestRetrieve:
    def test_basic_assignment(self, fixture_dir):
        transcript = transcript_of([f"sentence {i}." for i in range(10)])
        goal_a = goal("A", ["about a"])
        goal_b = goal("B", ["about b"])
        seed_chat(fixture_dir, retrieve_request(transcript.sentences, goal_a),
                  json.dumps([{"index": i, "score": 0.9} for i in range(5)]))
        seed_chat(fixture_dir, retrieve_request(transcript.sentences, goal_b),
                  json.dumps([{"index": i, "score": 0.9} for i in range(5, 10)]))
        out = retrieve_alignments(transcript, [goal_a, goal_b], replay_gateway(fixture_dir))
        assert out == {"A": [0, 1, 2, 3, 4], "B": [5, 6, 7, 8, 9]}

    def test_double_assignment_higher_score_wins(self, fixture_dir):
        transcript = transcript_of(["s0.", "s1.", "s2.", "s3."])
        goal_a = goal("A", ["a"])
        goal_b = goal("B", ["b"])
        seed_chat(fixture_dir, retrieve_request(transcript.sentences, goal_a),
                  json.dumps([{"index": 0, "score": 0.9}, {"index": 3, "score": 0.4}]))
        seed_chat(fixture_dir, retrieve_request(transcript.sentences, goal_b),
                  json.dumps([{"index": 1, "score": 0.9}, {"index": 3, "score": 0.8}]))
        out = retrieve_alignments(transcript, [goal_a, goal_b], replay_gateway(fixture_dir))
        assert 3 in out["B"] and 3 not in out["A"]

    def test_double_assignment_tie_goes_to_earlier_goal(self, fixture_dir):
        transcript = transcript_of(["s0.", "s1."])
        goal_a = goal("A", ["a"])
        goal_b = goal("B", ["b"])
        seed_chat(fixture_dir, retrieve_request(transcript.sentences, goal_a),
                  json.dumps([{"index": 1, "score": 0.7}]))
        seed_chat(fixture_dir, retrieve_request(transcript.sentences, goal_b),
                  json.dumps([{"index": 0, "score": 0.9}, {"index": 1, "score": 0.7}]))
        out = retrieve_alignments(transcript, [goal_a, goal_b], replay_gateway(fixture_dir))
        assert out["A"] == [1]

    def test_out_of_range_index_dropped_with_warning(self, fixture_dir, caplog):
        transcript = transcript_of([f"s{i}." for i in range(10)])
        g = goal("A", ["a"])
        seed_chat(fixture_dir, retrieve_request(transcript.sentences, g),
                  json.dumps([{"index": 0, "score": 0.9}, {"index": 99, "score": 0.9}]))
        with caplog.at_level("WARNING"):
            out = retrieve_alignments(transcript, [g], replay_gateway(fixture_dir))
        assert out == {"A": [0]}
        assert any("out-of-range" in r.message for r in caplog.records)

    def test_unsummarized_goal_rejected(self, fixture_dir):
        transcript = transcript_of(["x."])
        with pytest.raises(UnsummarizedGoal):
            retrieve_alignments(transcript, [goal("A")], replay_gateway(fixture_dir))


class TestRearrange:
    def test_stray_absorbed_by_enclosing_neighbor(self):
        transcript = transcript_of([f"s{i}." for i in range(8)])
        segments = rearrange_segments({"A": [0, 1, 2, 7], "B": [3, 4, 5, 6]}, transcript)
        spans = {s.goal_id: [x.index for x in s.sentences] for s in segments}
        assert spans == {"A": [0, 1, 2], "B": [3, 4, 5, 6, 7]}

    def test_single_goal_identity(self):
        transcript = transcript_of([f"s{i}." for i in range(5)])
        segments = rearrange_segments({"A": [0, 1, 2, 3, 4]}, transcript)
        assert len(segments) == 1
        assert [x.index for x in segments[0].sentences] == [0, 1, 2, 3, 4]

    def test_adjacent_boundary(self):
        transcript = transcript_of(["a.", "b.", "c.", "d."])
        segments = rearrange_segments({"A": [0, 1], "B": [2, 3]}, transcript)
        assert segments[0].end_s == 20.0
        assert segments[1].start_s == 20.0

    def test_single_goal_split_runs_merge_to_one_segment(self):
        transcript = transcript_of([f"s{i}." for i in range(10)])
        segments = rearrange_segments({"A": [0, 1, 2, 7, 8, 9]}, transcript)
        assert len(segments) == 1
        assert [x.index for x in segments[0].sentences] == list(range(10))

    def test_invariants_no_overlap_sorted(self):
        transcript = transcript_of([f"s{i}." for i in range(12)])
        segments = rearrange_segments(
            {"A": [0, 1, 2, 11], "B": [3, 4, 5], "C": [7, 8, 9]}, transcript
        )
        seen = set()
        for segment in segments:
            for sentence in segment.sentences:
                assert sentence.index not in seen
                seen.add(sentence.index)
        starts = [segment.start_s for segment in segments]
        assert starts == sorted(starts)


class TestPipeline:
    def test_two_goal_end_to_end(self, fixture_dir):
        transcript_doc = sample_transcript_doc(("eda-box", "eda-hist"), per_goal=10)
        goals_doc = sample_goals_doc(("eda-box", "eda-hist"))
        transcript = Transcript.from_dict(transcript_doc)
        goals = [LearningGoal.from_dict(g) for g in goals_doc["goals"]]

        record_gw = record_gateway(fixture_dir)
        recorded = segment_pipeline(transcript, goals, record_gw)
        replayed = segment_pipeline(transcript, goals, replay_gateway(fixture_dir))

        assert [s.to_dict() for s in recorded] == [s.to_dict() for s in replayed]
        assert [s.goal_id for s in replayed] == ["eda-box", "eda-hist"]
        assert [x.index for x in replayed[0].sentences] == list(range(10))
        assert [x.index for x in replayed[1].sentences] == list(range(10, 20))

    def test_single_goal_single_segment(self, fixture_dir):
        transcript_doc = sample_transcript_doc(("only-goal",), per_goal=6)
        transcript = Transcript.from_dict(transcript_doc)
        goals = [LearningGoal(id="only-goal", title="only-goal")]
        gateway = record_gateway(fixture_dir)
        segments = segment_pipeline(transcript, goals, gateway)
        assert len(segments) == 1
        assert [x.index for x in segments[0].sentences] == list(range(6))

    def test_long_transcript_chunked_and_merged(self, fixture_dir):
        # 9 sentences x 100 s = 15 min > 12 min limit: two retrieval chunks
        transcript_doc = sample_transcript_doc(("long-goal",), per_goal=9, sentence_s=100.0)
        transcript = Transcript.from_dict(transcript_doc)
        goals = [LearningGoal(id="long-goal", title="long-goal")]
        gateway = record_gateway(fixture_dir)
        segments = segment_pipeline(transcript, goals, gateway)
        retrievals = [
            c for c in gateway._chat_transport.calls
            if c.user_prompt.startswith("Learning goal: long-goal\nSummary")
        ]
        assert len(retrievals) == 2
        assert len(segments) == 1
        # merged without duplicating sentences at the chunk boundary
        assert [x.index for x in segments[0].sentences] == list(range(9))


class TestBoundaryAccuracy:
    def test_inclusive_threshold_hit(self):
        assert boundary_accuracy([100.0], [104.9]) == 1.0

    def test_exact_threshold_counts(self):
        assert boundary_accuracy([100.0], [105.0]) == 1.0

    def test_beyond_threshold_misses(self):
        assert boundary_accuracy([100.0], [106.0]) == 0.0

    def test_seven_of_ten_fixture(self):
        gold = [float(60 * (i + 1)) for i in range(10)]
        predicted = []
        for i, g in enumerate(gold):
            if i < 7:
                predicted.append(g + (2.0 if i % 2 == 0 else -4.5))
            else:
                predicted.append(g + 30.0)
        assert boundary_accuracy(gold, predicted) == pytest.approx(0.7)

    def test_one_to_one_matching(self):
        # two predictions near one gold boundary can only claim one hit
        assert boundary_accuracy([100.0, 300.0], [99.0, 101.0]) == pytest.approx(0.5)

    def test_empty_gold_rejected(self):
        with pytest.raises(EmptyGold):
            boundary_accuracy([], [1.0])

    def test_far_noise_never_increases_accuracy(self):
        gold = [100.0, 200.0, 300.0]
        predicted = [101.0, 204.0]
        base = boundary_accuracy(gold, predicted)
        noisy = boundary_accuracy(gold, sorted(predicted + [999.0]))
        assert noisy <= base

    def test_segments_to_boundaries(self, fixture_dir):
        transcript = transcript_of(["a.", "b.", "c.", "d."])
        segments = rearrange_segments({"A": [0, 1], "B": [2, 3]}, transcript)
        assert segments_to_boundaries(segments) == [20.0]
