"""Compound multi-task loss and the optimization loop.

The loss combines the utterance-level fake/real BCE, a per-frame
voicing BCE and an MSE on standardized log-formants restricted to
voiced frames, weighted 1 / 0.3 / 0.3. Formant targets are log-scaled
and standardized with training-set statistics; evaluation reuses the
training scaler. The loop halves the learning rate after 10 epochs
without validation improvement and stops after 20, keeping the best
checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .annotate import FrameAnnotation
from .autodiff import Tensor
from .errors import AlignmentError, ClassMissing, DegenerateData, NumericalError
from .model import DEFAULT_FORMANT_RANGES, ForwardPass, SpoofNet
from .optim import AdamW

BCE_EPS = 1e-7
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 1e-4
    plateau_patience: int = 10
    decay_factor: float = 0.5
    early_stop_patience: int = 20
    max_epochs: int = 100
    weight_score: float = 1.0
    weight_voicing: float = 0.3
    weight_formant: float = 0.3
    weight_decay: float = 0.01
    improve_tol: float = 1e-5
    seed: int = 0


@dataclass
class FormantScaler:
    """Per-formant mean/std of log-Hz over voiced training frames."""

    log_mean: np.ndarray  # (3,)
    log_std: np.ndarray   # (3,)
    ranges: tuple = DEFAULT_FORMANT_RANGES

    def clamp(self, hz: np.ndarray) -> np.ndarray:
        lo = np.array([r[0] for r in self.ranges])
        hi = np.array([r[1] for r in self.ranges])
        return np.clip(hz, lo, hi)

    def transform(self, hz: np.ndarray) -> np.ndarray:
        """Hz -> standardized log; expects values already inside range."""
        return (np.log(hz) - self.log_mean) / self.log_std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.exp(z * self.log_std + self.log_mean)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"scaler.log_mean": self.log_mean, "scaler.log_std": self.log_std}


def fit_scaler(
    annotations: list[FrameAnnotation],
    ranges: tuple = DEFAULT_FORMANT_RANGES,
) -> FormantScaler:
    """Fit standardization stats on voiced frames of the training set.

    Targets are clamped into the decoder's output ranges first, so every
    standardized target is reachable by the model.
    """
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    columns = [[], [], []]
    for ann in annotations:
        v = ann.voiced
        if not np.any(v):
            continue
        columns[0].append(ann.f0_hz[v])
        columns[1].append(ann.f1_hz[v])
        columns[2].append(ann.f2_hz[v])
    if not columns[0]:
        raise DegenerateData("no voiced frames in the training set")
    logs = [np.log(np.clip(np.concatenate(c), lo[i], hi[i]))
            for i, c in enumerate(columns)]
    mean = np.array([x.mean() for x in logs])
    std = np.array([x.std() for x in logs])
    if np.any(std < STD_FLOOR) or not np.all(np.isfinite(mean)):
        raise DegenerateData(
            f"formant log-std {std} below floor {STD_FLOOR}; "
            "targets carry no usable variance"
        )
    return FormantScaler(log_mean=mean, log_std=std, ranges=ranges)


def _bce_scalar(p: Tensor, target: int) -> Tensor:
    """Binary cross entropy for the utterance score, clamped for safety."""
    p = ad.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    inner = ad.log(p) if target == 1 else ad.log(1.0 - p)
    return ad.reshape(ad.mul(inner, -1.0), ())


def compound_loss(
    out: ForwardPass,
    truth: FrameAnnotation,
    label: int,
    scaler: FormantScaler,
    weights: tuple[float, float, float] = (1.0, 0.3, 0.3),
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of score BCE, voicing BCE and voiced-frame formant MSE.

    Returns the scalar loss tensor plus the unweighted component values;
    the scalar equals components["bce_p"] * w0 + ... exactly (same float
    op order). Utterances with no voiced frames contribute a zero MSE.
    """
    n_frames = out.voicing_prob.shape[0]
    if truth.n_frames != n_frames:
        raise AlignmentError(
            f"model emits {n_frames} frames but annotation has {truth.n_frames}"
        )

    bce_p = _bce_scalar(out.score, label)

    v = ad.clip(out.voicing_prob, BCE_EPS, 1.0 - BCE_EPS)  # (L, 1)
    mask = truth.voiced.astype(out.voicing_prob.data.dtype).reshape(-1, 1)
    per_frame = ad.add(ad.mul(ad.log(v), -mask), ad.mul(ad.log(1.0 - v), mask - 1.0))
    bce_v = ad.reshape(ad.tmean(per_frame), ())

    voiced_idx = truth.voiced
    n_voiced = int(voiced_idx.sum())
    if n_voiced > 0:
        target_hz = np.stack([
            np.where(voiced_idx, truth.f0_hz, scaler.ranges[0][0]),
            truth.f1_hz,
            truth.f2_hz,
        ], axis=1)
        target_std = scaler.transform(scaler.clamp(target_hz))
        pred_log = ad.log(out.formants_hz)
        pred_std = ad.mul(ad.sub(pred_log, scaler.log_mean.reshape(1, 3)),
                          (1.0 / scaler.log_std).reshape(1, 3))
        diff = ad.sub(pred_std, target_std)
        sq = ad.mul(diff, diff)
        masked = ad.mul(sq, voiced_idx.astype(sq.data.dtype).reshape(-1, 1))
        mse_f = ad.reshape(ad.mul(ad.tsum(masked), 1.0 / (3 * n_voiced)), ())
    else:
        mse_f = Tensor(np.zeros((), dtype=out.formants_hz.data.dtype))

    w0, w1, w2 = weights
    total = ad.add(ad.add(ad.mul(bce_p, w0), ad.mul(bce_v, w1)), ad.mul(mse_f, w2))
    components = {
        "bce_p": float(bce_p.data),
        "bce_v": float(bce_v.data),
        "mse_f": float(mse_f.data),
        "total": float(total.data),
    }
    return total, components


def balance_classes(entries: list) -> list:
    """Oversample the minority class by cycling its entries, in manifest
    order, until the two classes have equal counts."""
    real = [e for e in entries if e.label == "real"]
    fake = [e for e in entries if e.label == "fake"]
    if not real or not fake:
        raise ClassMissing(
            f"both classes required, got {len(real)} real / {len(fake)} fake"
        )
    if len(real) == len(fake):
        return list(entries)
    minority, n_major = (real, len(fake)) if len(real) < len(fake) else (fake, len(real))
    extra = [minority[i % len(minority)] for i in range(len(minority), n_major)]
    return list(entries) + extra


class PlateauScheduler:
    """Validation-loss plateau tracking: lr decay and early stopping."""

    def __init__(self, lr: float, factor: float = 0.5, plateau_patience: int = 10,
                 stop_patience: int = 20, tol: float = 1e-5):
        self.lr = lr
        self.factor = factor
        self.plateau_patience = plateau_patience
        self.stop_patience = stop_patience
        self.tol = tol
        self.best = np.inf
        self._plateau = 0
        self._stall = 0

    def update(self, val_loss: float) -> tuple[bool, bool]:
        """Feed one epoch's validation loss; returns (is_best, should_stop)."""
        improved = val_loss < self.best - self.tol
        if improved:
            self.best = val_loss
            self._plateau = 0
            self._stall = 0
        else:
            self._plateau += 1
            self._stall += 1
            if self._plateau >= self.plateau_patience:
                self.lr *= self.factor
                self._plateau = 0
        return improved, self._stall >= self.stop_patience


@dataclass
class TrainSample:
    """One utterance ready for the model: feature tokens plus targets."""

    utt_id: str
    mag: np.ndarray
    phase: np.ndarray
    annotation: FrameAnnotation
    label: int  # 0 real, 1 fake
    dataset_tag: str = "default"
    codec_tag: str | None = None


@dataclass
class TrainResult:
    best_state: dict[str, np.ndarray]
    best_epoch: int
    history: list[dict]


def evaluate_loss(
    model: SpoofNet, samples: list[TrainSample], scaler: FormantScaler,
    weights: tuple[float, float, float] = (1.0, 0.3, 0.3),
) -> tuple[float, dict[str, float]]:
    """Mean compound loss over a sample set, without recording a graph."""
    totals = {"total": 0.0, "bce_p": 0.0, "bce_v": 0.0, "mse_f": 0.0}
    with ad.no_grad():
        for s in samples:
            out = model.forward(s.mag, s.phase)
            _, comps = compound_loss(out, s.annotation, s.label, scaler, weights)
            for k in totals:
                totals[k] += comps[k]
    n = max(len(samples), 1)
    return totals["total"] / n, {k: v / n for k, v in totals.items()}


def train_loop(
    model: SpoofNet,
    train_samples: list[TrainSample],
    val_samples: list[TrainSample],
    cfg: TrainConfig,
    scaler: FormantScaler | None = None,
) -> TrainResult:
    """Full optimization loop with plateau decay and early stopping.

    Aborts with NumericalError (naming epoch, batch and components) the
    moment a non-finite loss appears, rather than training through NaNs.
    """
    if scaler is None:
        scaler = fit_scaler([s.annotation for s in train_samples])
    weights = (cfg.weight_score, cfg.weight_voicing, cfg.weight_formant)
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(cfg.lr, cfg.decay_factor, cfg.plateau_patience,
                             cfg.early_stop_patience, cfg.improve_tol)
    best_state = model.state_dict()
    best_epoch = 0
    history: list[dict] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        epoch_comps = {"total": 0.0, "bce_p": 0.0, "bce_v": 0.0, "mse_f": 0.0}
        for b_start in range(0, len(order), cfg.batch_size):
            batch = order[b_start:b_start + cfg.batch_size]
            losses = []
            for idx in batch:
                s = train_samples[idx]
                out = model.forward(s.mag, s.phase)
                loss, comps = compound_loss(out, s.annotation, s.label, scaler, weights)
                if not np.isfinite(comps["total"]):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch}, batch "
                        f"{b_start // cfg.batch_size}, utterance {s.utt_id}: {comps}"
                    )
                losses.append(loss)
                for k in epoch_comps:
                    epoch_comps[k] += comps[k]
            batch_loss = losses[0]
            for extra in losses[1:]:
                batch_loss = ad.add(batch_loss, extra)
            batch_loss = ad.mul(batch_loss, 1.0 / len(losses))
            opt.zero_grad()
            ad.backward(batch_loss)
            opt.lr = sched.lr
            opt.step()

        n_train = len(train_samples)
        val_total, _ = evaluate_loss(model, val_samples, scaler, weights)
        history.append({
            "epoch": epoch,
            "lr": sched.lr,
            "train_total": epoch_comps["total"] / n_train,
            "val_total": val_total,
            "bce_p": epoch_comps["bce_p"] / n_train,
            "bce_v": epoch_comps["bce_v"] / n_train,
            "mse_f": epoch_comps["mse_f"] / n_train,
        })
        is_best, should_stop = sched.update(val_total)
        if is_best:
            best_state = model.state_dict()
            best_epoch = epoch
        if should_stop:
            break

    model.load_state(best_state)
    return TrainResult(best_state=best_state, best_epoch=best_epoch, history=history)
