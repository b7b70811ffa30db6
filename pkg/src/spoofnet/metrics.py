"""EER / AUC computation and per-tag breakdowns over score records."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ClassMissing, ParseError


@dataclass
class ScoreRecord:
    """One utterance's prediction and the context needed for reporting."""

    utt_id: str
    score: float              # P(fake) in [0, 1]
    label: int                # 0 real, 1 fake
    dataset_tag: str = "default"
    codec_tag: str | None = None
    frame_weights: np.ndarray | None = None
    voicing_prob: np.ndarray | None = None
    gt_voiced: np.ndarray | None = None


def _split_scores(records) -> tuple[np.ndarray, np.ndarray]:
    fake = np.array([r.score for r in records if r.label == 1], dtype=np.float64)
    real = np.array([r.score for r in records if r.label == 0], dtype=np.float64)
    if fake.size == 0 or real.size == 0:
        raise ClassMissing(
            f"need both classes, got {fake.size} fake / {real.size} real"
        )
    return fake, real


def compute_auc(records) -> float:
    """Probability that a random fake outscores a random real; ties get
    half credit. Computed by the rank-sum identity."""
    fake, real = _split_scores(records)
    ranks = rankdata(np.concatenate([fake, real]), method="average")
    r_fake = ranks[: fake.size].sum()
    return float((r_fake - fake.size * (fake.size + 1) / 2.0) / (fake.size * real.size))


def _sweep_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between distinct sorted scores, plus below-everything
    and above-everything sentinels."""
    distinct = np.unique(scores)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate([[distinct[0] - 1.0], mids, [distinct[-1] + 1.0]])


def rates_at(thresholds: np.ndarray, fake: np.ndarray,
             real: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(false-acceptance, false-rejection) rates for score >= threshold
    meaning 'classified fake'. Rates are formed as integer-count / size
    so they equal naive counting bit-for-bit."""
    real_sorted = np.sort(real)
    fake_sorted = np.sort(fake)
    far = (real.size - np.searchsorted(real_sorted, thresholds, side="left")) / real.size
    frr = np.searchsorted(fake_sorted, thresholds, side="left") / fake.size
    return far, frr


def compute_eer(records) -> tuple[float, float]:
    """Equal error rate and its operating threshold.

    Sweeps every midpoint threshold; where FAR and FRR cross between two
    thresholds the rates (and the threshold) are linearly interpolated,
    since discrete score sets rarely cross exactly.
    """
    fake, real = _split_scores(records)
    thresholds = _sweep_thresholds(np.concatenate([fake, real]))
    far, frr = rates_at(thresholds, fake, real)
    diff = far - frr  # monotone non-increasing, starts at +1, ends at -1
    k = int(np.argmax(diff <= 0.0))
    if diff[k] == 0.0:
        return float((far[k] + frr[k]) / 2.0), float(thresholds[k])
    t = diff[k - 1] / (diff[k - 1] - diff[k])
    eer = far[k - 1] + t * (far[k] - far[k - 1])
    threshold = thresholds[k - 1] + t * (thresholds[k] - thresholds[k - 1])
    return float(eer), float(threshold)


@dataclass
class BreakdownRow:
    tag: str
    n: int
    eer: float | None
    auc: float | None

    @property
    def defined(self) -> bool:
        return self.eer is not None


def breakdown(records, tag_key: str = "dataset") -> list[BreakdownRow]:
    """Per-tag (EER, AUC) table plus an overall row.

    tag_key is "dataset" or "codec". Groups missing one class are
    reported with undefined metrics rather than failing the whole table.
    """
    if tag_key not in ("dataset", "codec"):
        raise ValueError(f"tag_key must be 'dataset' or 'codec', got {tag_key!r}")
    groups: dict[str, list] = {}
    for r in records:
        tag = r.dataset_tag if tag_key == "dataset" else (r.codec_tag or "none")
        groups.setdefault(tag, []).append(r)
    rows = []
    for tag in sorted(groups):
        members = groups[tag]
        try:
            eer, _ = compute_eer(members)
            auc = compute_auc(members)
            rows.append(BreakdownRow(tag=tag, n=len(members), eer=eer, auc=auc))
        except ClassMissing:
            rows.append(BreakdownRow(tag=tag, n=len(members), eer=None, auc=None))
    eer, _ = compute_eer(records)
    rows.append(BreakdownRow(tag="overall", n=len(records),
                             eer=eer, auc=compute_auc(records)))
    return rows


def format_breakdown(rows: list[BreakdownRow]) -> str:
    """Tags as columns, EER/AUC as percentage rows with two decimals."""
    def fmt(value):
        return "  n/a" if value is None else f"{100.0 * value:5.2f}"

    width = max(7, *(len(r.tag) for r in rows))
    header = "        " + "  ".join(r.tag.rjust(width) for r in rows)
    eer_row = "EER (%) " + "  ".join(fmt(r.eer).rjust(width) for r in rows)
    auc_row = "AUC (%) " + "  ".join(fmt(r.auc).rjust(width) for r in rows)
    return "\n".join([header, eer_row, auc_row])


# -- score file round trip -------------------------------------------------

def write_scores(path, records: list[ScoreRecord]) -> None:
    """Line-delimited JSON, one record per utterance."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            row = {
                "utt_id": r.utt_id,
                "score": r.score,
                "label": r.label,
                "dataset_tag": r.dataset_tag,
                "codec_tag": r.codec_tag,
                "frame_weights": None if r.frame_weights is None
                else [float(x) for x in r.frame_weights],
                "voicing_prob": None if r.voicing_prob is None
                else [float(x) for x in r.voicing_prob],
                "gt_voiced": None if r.gt_voiced is None
                else [bool(x) for x in r.gt_voiced],
            }
            fh.write(json.dumps(row) + "\n")


def read_scores(path) -> list[ScoreRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append(ScoreRecord(
                    utt_id=row["utt_id"],
                    score=float(row["score"]),
                    label=int(row["label"]),
                    dataset_tag=row.get("dataset_tag", "default"),
                    codec_tag=row.get("codec_tag"),
                    frame_weights=None if row.get("frame_weights") is None
                    else np.array(row["frame_weights"], dtype=np.float64),
                    voicing_prob=None if row.get("voicing_prob") is None
                    else np.array(row["voicing_prob"], dtype=np.float64),
                    gt_voiced=None if row.get("gt_voiced") is None
                    else np.array(row["gt_voiced"], dtype=bool),
                ))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad score record: {exc}", line=i) from exc
    return records
