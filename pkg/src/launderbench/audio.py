"""Mono audio container, WAV/FLAC file I/O, and the lossy-codec backend."""

from __future__ import annotations

import os
import subprocess
import uuid
import warnings
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import flacio
from .errors import (BackendInvocationFailed, CorruptFile, EmptyBuffer,
                     InvalidParameter, IoFailure, MultichannelInput,
                     SampleRateChangedByCodec, UnsupportedFormat)

FORMATS = ("wav16", "flac")


@dataclass
class AudioBuffer:
    """A single-channel signal with amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise MultichannelInput(
                f"expected a one-dimensional signal, got shape {arr.shape}")
        self.samples = arr
        self.sample_rate_hz = int(self.sample_rate_hz)
        if self.sample_rate_hz <= 0:
            raise InvalidParameter(
                f"sample rate must be positive, got {self.sample_rate_hz}")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self):
        return len(self.samples)


@dataclass
class CodecBackend:
    """Command templates for an external lossy encode/decode pair.

    Placeholders {in}, {out}, and {bitrate_kbps} are substituted literally
    into whitespace-split argument vectors; no shell is involved.
    """

    encode_command_template: str
    decode_command_template: str
    identity: str

    def __post_init__(self):
        for ph in ("{in}", "{out}", "{bitrate_kbps}"):
            if ph not in self.encode_command_template:
                raise InvalidParameter(
                    f"encode template is missing the {ph} placeholder")
        for ph in ("{in}", "{out}"):
            if ph not in self.decode_command_template:
                raise InvalidParameter(
                    f"decode template is missing the {ph} placeholder")


def _scale_to_float(data) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # 24-bit PCM arrives left-justified in int32, so one divisor serves both
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise UnsupportedFormat(f"unsupported WAV sample type {data.dtype}")


def read_audio(path) -> AudioBuffer:
    """Read a mono WAV or FLAC file into an AudioBuffer scaled to [-1, 1]."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(12)
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e

    if head[:4] == b"RIFF" and head[8:12] == b"WAVE":
        try:
            rate, data = wavfile.read(path)
        except ValueError as e:
            if "nknown wave file format" in str(e):
                raise UnsupportedFormat(f"{path}: {e}") from e
            raise CorruptFile(f"{path}: {e}") from e
        except Exception as e:
            raise CorruptFile(f"{path}: {e}") from e
        if data.ndim != 1:
            raise MultichannelInput(
                f"{path}: {data.shape[1]} channels, only mono is supported")
        return AudioBuffer(_scale_to_float(data), rate)

    if head[:4] == b"fLaC" or head[:3] == b"ID3":
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except OSError as e:
            raise IoFailure(f"cannot read {path}: {e}") from e
        samples, rate, bps = flacio.decode_flac(blob)
        return AudioBuffer(samples.astype(np.float64) / (1 << (bps - 1)), rate)

    raise UnsupportedFormat(
        f"{path}: not a RIFF/WAVE or FLAC file (header {head[:4]!r})")


def _quantize16(samples):
    q = np.rint(np.asarray(samples, dtype=np.float64) * 32768.0)
    clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    return np.clip(q, -32768, 32767).astype(np.int64), clipped


def write_audio(buf: AudioBuffer, path, format: str = "flac") -> int:
    """Write 16-bit audio; returns the count of saturated samples.

    Samples outside [-1, 1] are clamped to full scale rather than raising;
    the returned count lets callers report clipping totals.
    """
    if format not in FORMATS:
        raise UnsupportedFormat(
            f"unknown output format {format!r}; expected one of {FORMATS}")
    q, clipped = _quantize16(buf.samples)
    path = Path(path)
    try:
        if format == "wav16":
            with wave.open(str(path), "wb") as w:
                w.setnchannels(1)
                w.setsampwidth(2)
                w.setframerate(buf.sample_rate_hz)
                w.writeframes(q.astype("<i2").tobytes())
        else:
            blob = flacio.encode_flac(q, buf.sample_rate_hz)
            with open(path, "wb") as fh:
                fh.write(blob)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
    return clipped


def rms_power(buf: AudioBuffer) -> float:
    """Mean-square power (1/N)·Σ s²."""
    if len(buf.samples) == 0:
        raise EmptyBuffer("cannot compute power of an empty signal")
    return float(np.mean(np.square(buf.samples)))


def _substitute(template: str, mapping: dict) -> list:
    argv = []
    for token in template.split():
        for key, value in mapping.items():
            token = token.replace(key, value)
        argv.append(token)
    return argv


def _run_backend(argv, stage):
    try:
        proc = subprocess.run(argv, capture_output=True)
    except OSError as e:
        raise BackendInvocationFailed(
            f"{stage} command {argv[0]!r} could not be launched: {e}") from e
    if proc.returncode != 0:
        tail = proc.stderr.decode("utf-8", "replace").strip().splitlines()[-3:]
        raise BackendInvocationFailed(
            f"{stage} command exited with status {proc.returncode}: "
            + " / ".join(tail))


def codec_roundtrip(buf: AudioBuffer, bitrate_kbps: int,
                    backend: CodecBackend, workdir) -> AudioBuffer:
    """Encode to the lossy codec and decode back.

    The decoded signal is trimmed or zero-padded to the input length with
    no delay compensation, and resampled back (with a warning) if the
    decoder returns a different rate.
    """
    if bitrate_kbps <= 0:
        raise InvalidParameter(f"bitrate must be positive, got {bitrate_kbps}")
    workdir = Path(workdir)
    token = uuid.uuid4().hex
    wav_path = workdir / f"{token}.wav"
    mp3_path = workdir / f"{token}.mp3"
    try:
        write_audio(buf, wav_path, "wav16")
        _run_backend(_substitute(backend.encode_command_template, {
            "{in}": str(wav_path), "{out}": str(mp3_path),
            "{bitrate_kbps}": str(int(bitrate_kbps))}), "encode")
        if not mp3_path.exists() or mp3_path.stat().st_size == 0:
            raise BackendInvocationFailed(
                f"encode command produced no output at {mp3_path}")
        wav_path.unlink()  # the decoder writes over this name
        _run_backend(_substitute(backend.decode_command_template, {
            "{in}": str(mp3_path), "{out}": str(wav_path)}), "decode")
        if not wav_path.exists():
            raise BackendInvocationFailed(
                f"decode command produced no output at {wav_path}")
        out = read_audio(wav_path)
    finally:
        for p in (wav_path, mp3_path):
            try:
                os.unlink(p)
            except OSError:
                pass

    if out.sample_rate_hz != buf.sample_rate_hz:
        warnings.warn(
            f"codec returned {out.sample_rate_hz} Hz for "
            f"{buf.sample_rate_hz} Hz input; resampling back",
            SampleRateChangedByCodec, stacklevel=2)
        from .dsp import resample
        out = resample(out, buf.sample_rate_hz)

    y = out.samples
    n = len(buf.samples)
    if len(y) >= n:
        y = y[:n]
    else:
        y = np.pad(y, (0, n - len(y)))
    return AudioBuffer(y, buf.sample_rate_hz)
