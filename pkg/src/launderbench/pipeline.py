"""Batch laundering: subset selection, attack planning, and execution.

A run takes a manifest, keeps a seeded fraction of its files, and plans
nine attacked copies per kept file: one reverberation, five additive
noises (one per noise name), one recompression, one resampling, and one
fixed lowpass.  Every random draw is keyed by (run seed, utterance id,
attack slot), so plans and non-codec output bytes are reproducible from
the manifest and the seed alone, regardless of manifest line order or
worker scheduling.
"""

from __future__ import annotations

import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .audio import read_audio, write_audio
from .dsp import (BITRATE_CHOICES, LOWPASS_CUTOFF_HZ, LOWPASS_ORDER,
                  NOISE_NAMES, RT60_CHOICES, SNR_DB_CHOICES,
                  TARGET_RATE_CHOICES, AttackSpec, apply_attack)
from .errors import (EmptyInput, InvalidParameter, IoFailure,
                     LaunderbenchError, ZeroSelection)
from .protocol import emit_manifest
from .rng import derive_seed, make_rng


@dataclass(frozen=True)
class AugmentationJob:
    """One (source file, attack) pair scheduled for execution."""

    source: object
    spec: AttackSpec
    job_seed: int
    output_utterance_id: str
    output_path: str


@dataclass(frozen=True)
class AugmentReport:
    jobs_total: int
    jobs_succeeded: int
    jobs_failed: int
    clip_events: int
    failures: tuple

    def __post_init__(self):
        if self.jobs_total != self.jobs_succeeded + self.jobs_failed:
            raise InvalidParameter("job counts do not add up")


def attack_tag(spec: AttackSpec) -> str:
    """Stable injective label for one attack parameterization."""
    if spec.kind == "reverberation":
        return f"reverberation_{spec.rt60_s:.1f}"
    if spec.kind == "additive_noise":
        return f"{spec.noise_name}_{spec.snr_db}"
    if spec.kind == "recompression":
        return f"recompression_{spec.bitrate_kbps}"
    if spec.kind == "resampling":
        return f"resampling_{spec.target_rate_hz}"
    return f"lowpass_{int(spec.cutoff_hz)}_{spec.order}"


def select_subset(trials, fraction: float, seed: int) -> list:
    """Keep floor(fraction*N) records, chosen by seeded shuffle.

    Ids are sorted before shuffling so the selection depends only on the
    set of ids, not on manifest line order.  The fraction is read as a
    decimal literal, so 0.7 of 10 files is exactly 7 even though
    0.7*10 < 7 in binary floats.
    """
    trials = list(trials)
    if not trials:
        raise EmptyInput("cannot select from an empty trial list")
    if not 0.0 < fraction <= 1.0:
        raise InvalidParameter(
            f"fraction must lie in (0, 1], got {fraction}")
    count = int(Fraction(str(fraction)) * len(trials))
    if count == 0:
        raise ZeroSelection(
            f"fraction {fraction} of {len(trials)} trials floors to zero")
    ordered = sorted(trials, key=lambda t: t.utterance_id)
    perm = make_rng(seed, "select").permutation(len(ordered))
    chosen = [ordered[i] for i in perm[:count]]
    chosen.sort(key=lambda t: t.utterance_id)
    return chosen


def _draw(seed, utt, slot, choices):
    rng = make_rng(seed, utt, slot)
    return choices[int(rng.integers(len(choices)))]


def plan_attacks(selected, seed: int) -> list:
    """Expand each selected record into its nine attack jobs."""
    selected = list(selected)
    if not selected:
        raise EmptyInput("cannot plan attacks for an empty selection")
    jobs = []
    for t in selected:
        utt = t.utterance_id
        specs = [AttackSpec(kind="reverberation",
                            rt60_s=_draw(seed, utt, "reverberation",
                                         RT60_CHOICES))]
        specs.extend(
            AttackSpec(kind="additive_noise", noise_name=name,
                       snr_db=_draw(seed, utt, f"noise:{name}",
                                    SNR_DB_CHOICES))
            for name in NOISE_NAMES)
        specs.append(AttackSpec(kind="recompression",
                                bitrate_kbps=_draw(seed, utt, "recompression",
                                                   BITRATE_CHOICES)))
        specs.append(AttackSpec(kind="resampling",
                                target_rate_hz=_draw(seed, utt, "resampling",
                                                     TARGET_RATE_CHOICES)))
        specs.append(AttackSpec(kind="lowpass", cutoff_hz=LOWPASS_CUTOFF_HZ,
                                order=LOWPASS_ORDER))
        for spec in specs:
            tag = attack_tag(spec)
            out_id = f"{utt}_{tag}"
            jobs.append(AugmentationJob(
                source=t,
                spec=spec,
                job_seed=derive_seed(seed, utt, tag),
                output_utterance_id=out_id,
                output_path=f"{utt[:2]}/{out_id}.flac"))
    return jobs


def execute_plan(jobs, audio_root, out_dir, noises=None, backend=None,
                 parallelism: int = 4) -> AugmentReport:
    """Run jobs against audio under audio_root, writing FLAC to out_dir.

    Per-job failures (unreadable source, codec trouble, rate mismatch)
    are collected in the report instead of aborting the batch; only an
    unusable out_dir is fatal.
    """
    jobs = list(jobs)
    if parallelism < 1:
        raise InvalidParameter("parallelism must be at least 1")
    audio_root = Path(audio_root)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as e:
        raise IoFailure(f"output directory {out_dir} is not writable: {e}")

    with tempfile.TemporaryDirectory(prefix="launder-") as workdir:

        def run_one(job):
            try:
                buf = read_audio(audio_root / job.source.source_path)
                out = apply_attack(buf, job.spec, job.job_seed,
                                   noises=noises, backend=backend,
                                   workdir=workdir)
                dest = out_dir / job.output_path
                dest.parent.mkdir(parents=True, exist_ok=True)
                return write_audio(out, dest, format="flac"), None
            except (LaunderbenchError, OSError) as e:
                return 0, e

        if parallelism == 1:
            results = [run_one(j) for j in jobs]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                results = list(pool.map(run_one, jobs))

    succeeded = failed = clip_events = 0
    failures = []
    for job, (clips, err) in zip(jobs, results):
        if err is None:
            succeeded += 1
            clip_events += clips
        else:
            failed += 1
            failures.append((job, err))
    return AugmentReport(len(jobs), succeeded, failed, clip_events,
                         tuple(failures))


def emit_augmented_manifest(original, jobs, backend_identity=None) -> str:
    """Original manifest plus one inherited-label record per job.

    Each appended line carries a trailing comment with the attack tag;
    recompression lines also note the codec backend identity when given.
    """
    parts = [emit_manifest(original)]
    for job in jobs:
        t = job.source
        line = " ".join((job.output_utterance_id, t.label, t.attack_id,
                         t.codec_id, job.output_path))
        comment = f"  # attack={attack_tag(job.spec)}"
        if job.spec.kind == "recompression" and backend_identity:
            comment += f" backend={backend_identity}"
        parts.append(line + comment + "\n")
    return "".join(parts)
