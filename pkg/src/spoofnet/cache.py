"""Annotation cache: preprocess + annotate each utterance once.

Records live in one line-delimited JSON file per cache directory, keyed
by a content hash of (audio bytes, DSP parameters, annotator
parameters); changing any parameter invalidates exactly the affected
records. Annotation of missing entries can fan out over a process pool
(each utterance is independent); results are merged and written in one
atomic pass (temp file + rename), so the cache content never depends on
worker count or completion order.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .annotate import (FrameAnnotation, annotate_waveform, annotation_from_record,
                       annotation_to_record)
from .dsp import DEFAULT_SILENCE_THRESHOLD_DB, preprocess, read_wav
from .errors import DataError, SilentAudio
from .formants import FormantConfig
from .manifest import Manifest
from .pitch import PitchConfig

CACHE_FILENAME = "annotations.jsonl"


@dataclass
class AnnotateStats:
    computed: int = 0
    cached: int = 0
    skipped: list = field(default_factory=list)  # (utt_id, reason)


def content_key(audio_path, pitch_cfg: PitchConfig, formant_cfg: FormantConfig,
                silence_threshold_db: float) -> str:
    """Hash of file bytes and every parameter that shapes the annotation."""
    h = hashlib.sha256()
    with open(audio_path, "rb") as fh:
        h.update(fh.read())
    h.update(f"|trim:{silence_threshold_db}|{pitch_cfg.key()}|{formant_cfg.key()}"
             .encode("utf-8"))
    return h.hexdigest()


def _load_cache_file(path: Path) -> dict[str, dict]:
    if not path.exists():
        return {}
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                row = json.loads(line)
                rows[row["utt_id"]] = row
    return rows


def _write_cache_file(path: Path, rows: dict[str, dict]) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for utt_id in sorted(rows):
            fh.write(json.dumps(rows[utt_id]) + "\n")
    os.replace(tmp, path)


def _annotate_one(job) -> tuple[str, FrameAnnotation | None, str | None]:
    """Worker body: (utt_id, annotation, error) for one utterance."""
    utt_id, audio_path, pitch_cfg, formant_cfg, silence_threshold_db = job
    try:
        wave = read_wav(audio_path)
        fixed = preprocess(wave, silence_threshold_db)
        return utt_id, annotate_waveform(fixed, pitch_cfg, formant_cfg), None
    except (SilentAudio, DataError) as exc:
        return utt_id, None, str(exc)


def annotate_corpus(
    manifest: Manifest,
    cache_dir,
    pitch_cfg: PitchConfig = PitchConfig(),
    formant_cfg: FormantConfig = FormantConfig(),
    silence_threshold_db: float = DEFAULT_SILENCE_THRESHOLD_DB,
    workers: int = 1,
) -> tuple[dict[str, FrameAnnotation], AnnotateStats]:
    """Annotate every readable utterance, reusing fresh cache records.

    Returns the annotations plus stats saying how much work was reused.
    Unreadable or silent audio is skipped (and recorded as such), never
    fatal: the caller decides whether a partial corpus is acceptable.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache_path = cache_dir / CACHE_FILENAME
    rows = _load_cache_file(cache_path)

    annotations: dict[str, FrameAnnotation] = {}
    stats = AnnotateStats()
    jobs = []
    keys = {}
    for entry in manifest:
        if entry.missing:
            stats.skipped.append((entry.utt_id, "missing audio file"))
            continue
        try:
            key = content_key(entry.audio_path, pitch_cfg, formant_cfg,
                              silence_threshold_db)
        except OSError as exc:
            stats.skipped.append((entry.utt_id, f"unreadable: {exc}"))
            continue
        row = rows.get(entry.utt_id)
        if row is not None and row.get("key") == key:
            annotations[entry.utt_id] = annotation_from_record(row)
            stats.cached += 1
            continue
        keys[entry.utt_id] = key
        jobs.append((entry.utt_id, entry.audio_path, pitch_cfg, formant_cfg,
                     silence_threshold_db))

    if jobs:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_annotate_one, jobs))
        else:
            results = [_annotate_one(j) for j in jobs]
        for utt_id, ann, error in results:
            if ann is None:
                stats.skipped.append((utt_id, error))
                continue
            record = annotation_to_record(utt_id, ann)
            record["key"] = keys[utt_id]
            rows[utt_id] = record
            annotations[utt_id] = ann
            stats.computed += 1
        if stats.computed:
            _write_cache_file(cache_path, rows)
    return annotations, stats
