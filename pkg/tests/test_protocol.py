"""Manifest and score parsing, joining, and emission."""

import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from launderbench.errors import (DuplicateId, InvalidParameter, MalformedLine,
                                 MissingScore, NonFiniteScore, OrphanScore)
from launderbench.protocol import (ManifestStats, ScoredTrial, ScoreRecord,
                                   TrialRecord, emit_manifest, emit_scores,
                                   join_scores, manifest_stats, parse_manifest,
                                   parse_scores)

MANIFEST = """\
u001 bonafide - C00 audio/u001.flac
u002 spoof A17 C03 audio/u002.flac
u003 spoof A30 C00 audio/u003.flac
"""


def trial(utt="u001", label="bonafide", attack="-", codec="C00",
          path="a/b.flac"):
    return TrialRecord(utt, label, attack, codec, path)


class TestTrialRecord:
    def test_valid_bonafide(self):
        t = trial()
        assert t.label == "bonafide" and t.attack_id == "-"

    def test_valid_spoof(self):
        t = trial(label="spoof", attack="A17")
        assert t.attack_id == "A17"

    def test_bonafide_with_attack_rejected(self):
        with pytest.raises(InvalidParameter):
            trial(label="bonafide", attack="A17")

    def test_spoof_with_placeholder_rejected(self):
        with pytest.raises(InvalidParameter):
            trial(label="spoof", attack="-")

    def test_unknown_label_rejected(self):
        with pytest.raises(InvalidParameter):
            trial(label="genuine")

    @pytest.mark.parametrize("field", ["utterance_id", "label", "attack_id",
                                       "codec_id", "source_path"])
    def test_empty_field_rejected(self, field):
        kw = dict(utterance_id="u1", label="spoof", attack_id="A1",
                  codec_id="C0", source_path="p")
        kw[field] = ""
        with pytest.raises(InvalidParameter):
            TrialRecord(**kw)

    def test_whitespace_in_field_rejected(self):
        with pytest.raises(InvalidParameter):
            trial(path="has space.flac")

    def test_comment_char_in_field_rejected(self):
        with pytest.raises(InvalidParameter):
            trial(utt="u#1")

    def test_hashable(self):
        assert len({trial(), trial(), trial(utt="u002")}) == 2


class TestParseManifest:
    def test_basic(self):
        records = parse_manifest(MANIFEST)
        assert [t.utterance_id for t in records] == ["u001", "u002", "u003"]
        assert records[0].label == "bonafide"
        assert records[1].attack_id == "A17"
        assert records[2].source_path == "audio/u003.flac"

    def test_comments_and_blanks(self):
        text = ("# header\n"
                "\n"
                "u001 bonafide - C00 p1  # trailing note\n"
                "   \n"
                "u002 spoof A01 C01 p2\n")
        records = parse_manifest(text)
        assert [t.utterance_id for t in records] == ["u001", "u002"]

    def test_no_trailing_newline(self):
        assert len(parse_manifest("u001 bonafide - C00 p")) == 1

    def test_empty_text(self):
        assert parse_manifest("") == []
        assert parse_manifest("# only comments\n\n") == []

    @pytest.mark.parametrize("line", ["u001 bonafide - C00",
                                      "u001 bonafide - C00 p extra"])
    def test_wrong_field_count(self, line):
        with pytest.raises(MalformedLine) as exc:
            parse_manifest(line + "\n")
        assert exc.value.line_no == 1

    def test_line_number_accounts_for_comments(self):
        text = "# one\nu001 bonafide - C00 p\n\nu002 spoof A1\n"
        with pytest.raises(MalformedLine) as exc:
            parse_manifest(text)
        assert exc.value.line_no == 4

    def test_bonafide_with_attack_is_malformed(self):
        with pytest.raises(MalformedLine) as exc:
            parse_manifest("u003 bonafide A17 C00 p\n")
        assert exc.value.line_no == 1
        assert "attack" in exc.value.reason

    def test_spoof_with_placeholder_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_manifest("u003 spoof - C00 p\n")

    def test_unknown_label_is_malformed(self):
        with pytest.raises(MalformedLine):
            parse_manifest("u001 real - C00 p\n")

    def test_duplicate_id(self):
        text = "u001 bonafide - C00 p1\nu001 spoof A01 C00 p2\n"
        with pytest.raises(DuplicateId):
            parse_manifest(text)

    def test_open_vocabulary(self):
        text = "u001 spoof mystery-vocoder weird.codec p\n"
        (t,) = parse_manifest(text)
        assert t.attack_id == "mystery-vocoder"
        assert t.codec_id == "weird.codec"

    def test_tabs_accepted(self):
        (t,) = parse_manifest("u001\tbonafide\t-\tC00\tp\n")
        assert t.utterance_id == "u001"


class TestParseScores:
    def test_basic(self):
        records = parse_scores("u001 1.25\nu002 -3.5\n")
        assert records == [ScoreRecord("u001", 1.25),
                           ScoreRecord("u002", -3.5)]

    def test_scientific_notation(self):
        (r,) = parse_scores("u001 -1.5e-3\n")
        assert r.score == -1.5e-3

    def test_comments(self):
        assert len(parse_scores("# hi\nu001 0.5 # ok\n")) == 1

    def test_empty(self):
        assert parse_scores("") == []

    def test_not_a_number(self):
        with pytest.raises(MalformedLine) as exc:
            parse_scores("u001 high\n")
        assert exc.value.line_no == 1

    @pytest.mark.parametrize("bad", ["nan", "inf", "-inf", "NaN", "Infinity"])
    def test_non_finite(self, bad):
        with pytest.raises(NonFiniteScore):
            parse_scores(f"u001 {bad}\n")

    @pytest.mark.parametrize("line", ["u001", "u001 1.0 2.0"])
    def test_wrong_field_count(self, line):
        with pytest.raises(MalformedLine):
            parse_scores(line + "\n")


class TestJoinScores:
    def setup_method(self):
        self.trials = parse_manifest(MANIFEST)
        self.scores = [ScoreRecord("u001", 2.0), ScoreRecord("u002", -1.0),
                       ScoreRecord("u003", 0.5)]

    def test_strict_happy_path(self):
        joined = join_scores(self.trials, self.scores)
        assert [j.trial.utterance_id for j in joined] == ["u001", "u002",
                                                          "u003"]
        assert [j.score for j in joined] == [2.0, -1.0, 0.5]

    def test_strict_order_follows_trials(self):
        joined = join_scores(self.trials, list(reversed(self.scores)))
        assert [j.trial.utterance_id for j in joined] == ["u001", "u002",
                                                          "u003"]

    def test_strict_missing(self):
        with pytest.raises(MissingScore) as exc:
            join_scores(self.trials, self.scores[:2])
        assert exc.value.ids == ["u003"]

    def test_strict_orphan(self):
        extra = self.scores + [ScoreRecord("u999", 0.0)]
        with pytest.raises(OrphanScore) as exc:
            join_scores(self.trials, extra)
        assert exc.value.ids == ["u999"]

    def test_intersect_drops_and_warns(self):
        extra = self.scores[:2] + [ScoreRecord("u999", 0.0)]
        with pytest.warns(UserWarning, match="dropped 2"):
            joined = join_scores(self.trials, extra, policy="intersect")
        assert [j.trial.utterance_id for j in joined] == ["u001", "u002"]

    def test_intersect_clean_is_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            joined = join_scores(self.trials, self.scores,
                                 policy="intersect")
        assert len(joined) == 3

    @pytest.mark.parametrize("policy", ["strict", "intersect"])
    def test_duplicate_score_id(self, policy):
        dup = self.scores + [ScoreRecord("u001", 9.0)]
        with pytest.raises(DuplicateId):
            join_scores(self.trials, dup, policy=policy)

    def test_unknown_policy(self):
        with pytest.raises(InvalidParameter):
            join_scores(self.trials, self.scores, policy="outer")

    def test_scored_trial_carries_record(self):
        joined = join_scores(self.trials, self.scores)
        assert isinstance(joined[0], ScoredTrial)
        assert joined[1].trial.attack_id == "A17"


class TestManifestStats:
    def test_counts(self):
        stats = manifest_stats(parse_manifest(MANIFEST))
        assert stats == ManifestStats(total=3, bonafide=1, spoof=2)
        assert stats.total == stats.bonafide + stats.spoof

    def test_empty(self):
        assert manifest_stats([]) == ManifestStats(0, 0, 0)


class TestEmitManifest:
    def test_exact_text(self):
        records = parse_manifest(MANIFEST)
        assert emit_manifest(records) == MANIFEST

    def test_empty(self):
        assert emit_manifest([]) == ""

    def test_round_trip_normalizes_whitespace(self):
        text = "u001\tbonafide\t-\tC00\tp\n"
        assert emit_manifest(parse_manifest(text)) == "u001 bonafide - C00 p\n"


_ID_ALPHA = "abcdefghijklmnopqrstuvwxyz0123456789_."
_PATH_ALPHA = _ID_ALPHA + "/-"


@st.composite
def trial_lists(draw):
    n = draw(st.integers(min_value=0, max_value=12))
    records = []
    for i in range(n):
        label = draw(st.sampled_from(["bonafide", "spoof"]))
        attack = "-" if label == "bonafide" else draw(
            st.text(_ID_ALPHA, min_size=1, max_size=6))
        records.append(TrialRecord(
            utterance_id=f"u{i:04d}" + draw(
                st.text(_ID_ALPHA, min_size=0, max_size=4)),
            label=label,
            attack_id=attack,
            codec_id=draw(st.text(_ID_ALPHA, min_size=1, max_size=6)),
            source_path=draw(st.text(_PATH_ALPHA, min_size=1, max_size=20)),
        ))
    return records


@given(trial_lists())
def test_emit_parse_identity(records):
    assert parse_manifest(emit_manifest(records)) == records


class TestEmitScores:
    def test_awkward_floats_round_trip(self):
        scores = [ScoreRecord(f"u{i:03d}", v) for i, v in enumerate(
            [0.1, -1 / 3, 1e-17, -3.5e300, 5e-324, 0.0, -0.0, 2.0])]
        assert parse_scores(emit_scores(scores)) == scores

    def test_exact_text(self):
        assert emit_scores([ScoreRecord("u001", 1.5)]) == "u001 1.5\n"

    def test_empty(self):
        assert emit_scores([]) == ""


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False),
                max_size=20))
def test_scores_emit_parse_identity(values):
    scores = [ScoreRecord(f"u{i:04d}", v) for i, v in enumerate(values)]
    assert parse_scores(emit_scores(scores)) == scores
