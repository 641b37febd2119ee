"""Manifest, trial, and score file handling.

Manifests are 5-field whitespace-separated text, one trial per line:

    <utterance_id> <label> <attack_id> <codec_id> <source_path>

with '#' starting a comment (full-line or trailing).  Score files carry
"<utterance_id> <score>" pairs where higher scores mean more
bonafide-like.  Attack and codec vocabularies are open; the bonafide
attack placeholder is the literal "-".
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import (DuplicateId, InvalidParameter, MalformedLine,
                     MissingScore, NonFiniteScore, OrphanScore)

LABELS = ("bonafide", "spoof")
BONAFIDE_ATTACK = "-"


def _check_field(name, value):
    if not value:
        raise InvalidParameter(f"{name} must be a non-empty string")
    if any(c.isspace() for c in value) or "#" in value:
        raise InvalidParameter(
            f"{name} {value!r} may not contain whitespace or '#'")


@dataclass(frozen=True)
class TrialRecord:
    utterance_id: str
    label: str
    attack_id: str
    codec_id: str
    source_path: str

    def __post_init__(self):
        for name in ("utterance_id", "label", "attack_id", "codec_id",
                     "source_path"):
            _check_field(name, getattr(self, name))
        if self.label not in LABELS:
            raise InvalidParameter(
                f"label must be one of {LABELS}, got {self.label!r}")
        if (self.label == "bonafide") != (self.attack_id == BONAFIDE_ATTACK):
            raise InvalidParameter(
                f"label {self.label!r} is inconsistent with attack_id "
                f"{self.attack_id!r}: bonafide trials use \"-\" and spoof "
                f"trials name their attack")


@dataclass(frozen=True)
class ScoreRecord:
    utterance_id: str
    score: float

    def __post_init__(self):
        _check_field("utterance_id", self.utterance_id)
        if not math.isfinite(self.score):
            raise NonFiniteScore(
                f"score for {self.utterance_id!r} is {self.score}")


@dataclass(frozen=True)
class ScoredTrial:
    trial: TrialRecord
    score: float


@dataclass(frozen=True)
class ManifestStats:
    total: int
    bonafide: int
    spoof: int


def _content_lines(text):
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line_no, line


def parse_manifest(text: str) -> list:
    """Parse manifest text into TrialRecords, preserving line order."""
    records = []
    seen = set()
    for line_no, line in _content_lines(text):
        fields = line.split()
        if len(fields) != 5:
            raise MalformedLine(
                line_no, f"expected 5 fields, found {len(fields)}")
        try:
            record = TrialRecord(*fields)
        except (InvalidParameter, NonFiniteScore) as e:
            raise MalformedLine(line_no, str(e)) from e
        if record.utterance_id in seen:
            raise DuplicateId(
                f"utterance {record.utterance_id!r} appears more than once "
                f"(line {line_no})")
        seen.add(record.utterance_id)
        records.append(record)
    return records


def parse_scores(text: str) -> list:
    """Parse score text into ScoreRecords, preserving line order."""
    records = []
    for line_no, line in _content_lines(text):
        fields = line.split()
        if len(fields) != 2:
            raise MalformedLine(
                line_no, f"expected 2 fields, found {len(fields)}")
        utt, raw_score = fields
        try:
            score = float(raw_score)
        except ValueError:
            raise MalformedLine(
                line_no, f"score {raw_score!r} is not a number") from None
        if not math.isfinite(score):
            raise NonFiniteScore(
                f"score for {utt!r} on line {line_no} is {raw_score}")
        records.append(ScoreRecord(utt, score))
    return records


def join_scores(trials, scores, policy: str = "strict") -> list:
    """Attach scores to trials by utterance id.

    strict demands a bijection and raises on any mismatch; intersect keeps
    the matched pairs (in trial order) and warns with the drop count.
    """
    if policy not in ("strict", "intersect"):
        raise InvalidParameter(
            f"policy must be 'strict' or 'intersect', got {policy!r}")
    by_id = {}
    for s in scores:
        if s.utterance_id in by_id:
            raise DuplicateId(
                f"utterance {s.utterance_id!r} is scored more than once")
        by_id[s.utterance_id] = s.score

    trial_ids = {t.utterance_id for t in trials}
    missing = [t.utterance_id for t in trials if t.utterance_id not in by_id]
    orphans = [u for u in by_id if u not in trial_ids]
    if policy == "strict":
        if missing:
            raise MissingScore(missing)
        if orphans:
            raise OrphanScore(orphans)
    elif missing or orphans:
        warnings.warn(
            f"dropped {len(missing) + len(orphans)} unmatched entries "
            f"({len(missing)} unscored trials, {len(orphans)} orphan scores)",
            stacklevel=2)
    return [ScoredTrial(t, by_id[t.utterance_id]) for t in trials
            if t.utterance_id in by_id]


def manifest_stats(trials) -> ManifestStats:
    bonafide = sum(1 for t in trials if t.label == "bonafide")
    return ManifestStats(len(trials), bonafide, len(trials) - bonafide)


def emit_manifest(trials) -> str:
    """Render trials back to manifest text; inverse of parse_manifest."""
    lines = [" ".join((t.utterance_id, t.label, t.attack_id, t.codec_id,
                       t.source_path))
             for t in trials]
    return "".join(line + "\n" for line in lines)


def emit_scores(scores) -> str:
    """Render score records back to text; inverse of parse_scores.

    repr() round-trips doubles exactly, so parse_scores(emit_scores(s))
    reproduces every score bit for bit.
    """
    return "".join(f"{s.utterance_id} {s.score!r}\n" for s in scores)
