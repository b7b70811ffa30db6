"""The multi-task detector network.

Two transformer encoders read magnitude and phase tokens, their outputs
are fused into one sequence, and three heads decode it: per-frame
formant trajectories bounded to plausible ranges, per-frame voicing
probabilities, and an attention-pooled utterance-level synthesis score.
The pooling weights double as the frame-importance explanation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

DEFAULT_FORMANT_RANGES = ((60.0, 400.0), (200.0, 850.0), (800.0, 2700.0))


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 512
    enc_layers: int = 8
    enc_heads: int = 8
    enc_head_dim: int = 64
    mlp_dim: int = 1024
    pred_layers: int = 4
    pred_heads: int = 6
    pred_head_dim: int = 64
    pool_heads: int = 4
    n_frames: int = 128
    n_bins: int = 256
    formant_ranges: tuple = DEFAULT_FORMANT_RANGES
    dtype: str = "float32"

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


def toy_config(**overrides) -> ModelConfig:
    """A small config for tests and desk-scale training."""
    base = dict(embed_dim=16, enc_layers=1, enc_heads=2, enc_head_dim=8,
                mlp_dim=32, pred_layers=1, pred_heads=2, pred_head_dim=8,
                pool_heads=2, n_frames=128, n_bins=256)
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class ModelOutput:
    """Numpy view of one utterance's predictions."""

    formants_hz: np.ndarray   # (L, 3)
    voicing_prob: np.ndarray  # (L,)
    v_mask: np.ndarray        # (L,) bool, prob >= 0.5
    score: float              # P(fake) in (0, 1)
    frame_weights: np.ndarray  # (L,), non-negative, sums to 1

    def masked_formants(self) -> np.ndarray:
        """Formants with unvoiced frames blanked to NaN (the reported view)."""
        out = self.formants_hz.copy()
        out[~self.v_mask] = np.nan
        return out


@dataclass
class ForwardPass:
    """Differentiable outputs of one forward pass."""

    formants_hz: Tensor   # (L, 3)
    voicing_prob: Tensor  # (L, 1)
    score: Tensor         # (1, 1)
    frame_weights: Tensor  # (L, 1)


def _block_shapes(prefix: str, d: int, heads: int, head_dim: int, mlp: int):
    # no key bias: a constant added to every key cancels in the softmax,
    # so its gradient is identically zero (a dead parameter)
    a = heads * head_dim
    return [
        (f"{prefix}.ln1.g", (d,), "ones"),
        (f"{prefix}.ln1.b", (d,), "zeros"),
        (f"{prefix}.wq", (d, a), "xavier"),
        (f"{prefix}.bq", (a,), "zeros"),
        (f"{prefix}.wk", (d, a), "xavier"),
        (f"{prefix}.wv", (d, a), "xavier"),
        (f"{prefix}.bv", (a,), "zeros"),
        (f"{prefix}.wo", (a, d), "xavier"),
        (f"{prefix}.bo", (d,), "zeros"),
        (f"{prefix}.ln2.g", (d,), "ones"),
        (f"{prefix}.ln2.b", (d,), "zeros"),
        (f"{prefix}.mlp.w1", (d, mlp), "xavier"),
        (f"{prefix}.mlp.b1", (mlp,), "zeros"),
        (f"{prefix}.mlp.w2", (mlp, d), "xavier"),
        (f"{prefix}.mlp.b2", (d,), "zeros"),
    ]


def parameter_shapes(cfg: ModelConfig) -> list[tuple[str, tuple, str]]:
    """(name, shape, init kind) for every learnable parameter, in the
    fixed creation order used by both initialization and counting."""
    d, l, m = cfg.embed_dim, cfg.n_frames, cfg.n_bins
    shapes = []
    for stream in ("mag", "phase"):
        shapes.append((f"enc_{stream}.proj.w", (m, d), "xavier"))
        shapes.append((f"enc_{stream}.proj.b", (d,), "zeros"))
        shapes.append((f"enc_{stream}.pos", (l, d), "zeros"))
        for i in range(cfg.enc_layers):
            shapes += _block_shapes(f"enc_{stream}.layer{i}", d,
                                    cfg.enc_heads, cfg.enc_head_dim, cfg.mlp_dim)
    shapes.append(("fuse.w", (2 * d, d), "xavier"))
    shapes.append(("fuse.b", (d,), "zeros"))
    shapes.append(("formant.w", (d, 3), "xavier"))
    shapes.append(("formant.b", (3,), "zeros"))
    shapes.append(("voicing.w", (d, 1), "xavier"))
    shapes.append(("voicing.b", (1,), "zeros"))
    for i in range(cfg.pred_layers):
        shapes += _block_shapes(f"pred.layer{i}", d,
                                cfg.pred_heads, cfg.pred_head_dim, cfg.mlp_dim)
    shapes.append(("pool.w", (d, cfg.pool_heads), "xavier"))
    shapes.append(("score.ln.g", (d,), "ones"))
    shapes.append(("score.ln.b", (d,), "zeros"))
    shapes.append(("score.w", (d, 1), "xavier"))
    shapes.append(("score.b", (1,), "zeros"))
    return shapes


def count_params(cfg: ModelConfig) -> int:
    """Exact number of learnable scalars for a config."""
    return sum(int(np.prod(shape)) for _, shape, _ in parameter_shapes(cfg))


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Xavier-uniform projections, zero biases and positional tables,
    unit/zero layer-norm scale/shift. Draw order is fixed by
    parameter_shapes, so a seed pins every value."""
    rng = np.random.default_rng(seed)
    dtype = cfg.np_dtype()
    params: dict[str, Tensor] = {}
    for name, shape, kind in parameter_shapes(cfg):
        if kind == "xavier":
            fan_in, fan_out = shape[0], shape[1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = ad.parameter(data.astype(dtype), name=name)
    return params


def attention_pool(z: Tensor, w_pool: Tensor) -> tuple[Tensor, Tensor]:
    """Multi-head frame scoring collapsed to one weight per frame.

    Frames are scored by logsumexp over the heads' projections, the
    scores softmax to a distribution over the L frames, and the sequence
    is collapsed to its weighted average. Returns (weights (L,1),
    pooled (1,D)).
    """
    scores = ad.matmul(z, w_pool)                       # (L, H)
    s = ad.logsumexp(scores, axis=1, keepdims=True)     # (L, 1)
    weights = ad.softmax(s, axis=0)                     # (L, 1)
    pooled = ad.matmul(ad.transpose(weights), z)        # (1, D)
    return weights, pooled


class SpoofNet:
    """Detector with formant, voicing and synthesis-score heads."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.params = init_params(cfg, seed)

    # -- persistence ----------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise ShapeError(f"checkpoint is missing parameter {name!r}")
            value = np.asarray(arrays[name])
            if value.shape != p.data.shape:
                raise ShapeError(
                    f"checkpoint parameter {name!r} has shape {value.shape}, "
                    f"expected {p.data.shape}"
                )
            p.data = value.astype(self.cfg.np_dtype())

    def count_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # -- network pieces ---------------------------------------------------

    def _as_input(self, tokens) -> Tensor:
        arr = np.asarray(tokens.data if isinstance(tokens, Tensor) else tokens,
                         dtype=self.cfg.np_dtype())
        expected = (self.cfg.n_frames, self.cfg.n_bins)
        if arr.shape != expected:
            raise ShapeError(f"token grid has shape {arr.shape}, expected {expected}")
        return Tensor(arr)

    def _block(self, x: Tensor, prefix: str, heads: int, head_dim: int) -> Tensor:
        p = self.params
        h = ad.layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
        q = ad.add(ad.matmul(h, p[f"{prefix}.wq"]), p[f"{prefix}.bq"])
        k = ad.matmul(h, p[f"{prefix}.wk"])
        v = ad.add(ad.matmul(h, p[f"{prefix}.wv"]), p[f"{prefix}.bv"])
        scale = 1.0 / np.sqrt(head_dim)
        head_outs = []
        for i in range(heads):
            qi = ad.narrow(q, 1, i * head_dim, head_dim)
            ki = ad.narrow(k, 1, i * head_dim, head_dim)
            vi = ad.narrow(v, 1, i * head_dim, head_dim)
            att = ad.softmax(ad.mul(ad.matmul(qi, ad.transpose(ki)), scale), axis=-1)
            head_outs.append(ad.matmul(att, vi))
        mixed = head_outs[0] if heads == 1 else ad.concat(head_outs, axis=1)
        x = ad.add(x, ad.add(ad.matmul(mixed, p[f"{prefix}.wo"]), p[f"{prefix}.bo"]))
        h2 = ad.layer_norm(x, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
        inner = ad.gelu(ad.add(ad.matmul(h2, p[f"{prefix}.mlp.w1"]), p[f"{prefix}.mlp.b1"]))
        mlp = ad.add(ad.matmul(inner, p[f"{prefix}.mlp.w2"]), p[f"{prefix}.mlp.b2"])
        return ad.add(x, mlp)

    def _stream(self, tokens: Tensor, stream: str) -> Tensor:
        p = self.params
        x = ad.add(ad.matmul(tokens, p[f"enc_{stream}.proj.w"]), p[f"enc_{stream}.proj.b"])
        x = ad.add(x, p[f"enc_{stream}.pos"])
        for i in range(self.cfg.enc_layers):
            x = self._block(x, f"enc_{stream}.layer{i}",
                            self.cfg.enc_heads, self.cfg.enc_head_dim)
        return x

    def encode(self, mag_tokens, phase_tokens) -> Tensor:
        """Fused L x D sequence feeding all three heads."""
        z_mag = self._stream(self._as_input(mag_tokens), "mag")
        z_phase = self._stream(self._as_input(phase_tokens), "phase")
        both = ad.concat([z_mag, z_phase], axis=1)  # (L, 2D)
        return ad.add(ad.matmul(both, self.params["fuse.w"]), self.params["fuse.b"])

    def decode_formants(self, z_enc: Tensor) -> Tensor:
        """Per-frame formant trajectories in Hz, each squashed into its
        configured [lo, hi] range via lo + sigmoid(z) * (hi - lo)."""
        raw = ad.add(ad.matmul(z_enc, self.params["formant.w"]), self.params["formant.b"])
        lo = np.array([r[0] for r in self.cfg.formant_ranges], dtype=raw.data.dtype)
        span = np.array([r[1] - r[0] for r in self.cfg.formant_ranges], dtype=raw.data.dtype)
        return ad.add(ad.mul(ad.sigmoid(raw), span), lo)

    def decode_voicing(self, z_enc: Tensor) -> tuple[Tensor, np.ndarray]:
        """(per-frame voicing probability, boolean mask at the 0.5
        threshold; the boundary counts as voiced)."""
        raw = ad.add(ad.matmul(z_enc, self.params["voicing.w"]), self.params["voicing.b"])
        prob = ad.sigmoid(raw)  # (L, 1)
        return prob, prob.data[:, 0] >= 0.5

    def pool_and_score(self, z_enc: Tensor) -> tuple[Tensor, Tensor]:
        """(synthesis score (1,1), frame weights (L,1))."""
        z = z_enc
        for i in range(self.cfg.pred_layers):
            z = self._block(z, f"pred.layer{i}",
                            self.cfg.pred_heads, self.cfg.pred_head_dim)
        weights, pooled = attention_pool(z, self.params["pool.w"])
        normed = ad.layer_norm(pooled, self.params["score.ln.g"], self.params["score.ln.b"])
        logit = ad.add(ad.matmul(normed, self.params["score.w"]), self.params["score.b"])
        return ad.sigmoid(logit), weights

    def forward(self, mag_tokens, phase_tokens) -> ForwardPass:
        """Full differentiable pass; all heads read the same encoding."""
        z_enc = self.encode(mag_tokens, phase_tokens)
        formants = self.decode_formants(z_enc)
        voicing_prob, _ = self.decode_voicing(z_enc)
        score, weights = self.pool_and_score(z_enc)
        return ForwardPass(formants_hz=formants, voicing_prob=voicing_prob,
                           score=score, frame_weights=weights)

    def predict(self, mag_tokens, phase_tokens) -> ModelOutput:
        """Inference-mode forward returning plain numpy values."""
        with ad.no_grad():
            out = self.forward(mag_tokens, phase_tokens)
        prob = out.voicing_prob.data[:, 0]
        return ModelOutput(
            formants_hz=out.formants_hz.data.copy(),
            voicing_prob=prob.copy(),
            v_mask=prob >= 0.5,
            score=float(out.score.data[0, 0]),
            frame_weights=out.frame_weights.data[:, 0].copy(),
        )
