"""Human-readable key=value config documents.

One flat file covers the model and training sections; `#` starts a
comment. Values are typed after the dataclass defaults they override,
e.g. `formant_ranges = 60:400,200:850,800:2700`.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import ParseError
from .model import ModelConfig
from .synth import SyntheticCorpusSpec
from .train import TrainConfig


def parse_kv(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {raw.strip()!r}",
                                 line=line_no)
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _format_value(value) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{lo:g}:{hi:g}" for lo, hi in value)
        return ",".join(str(v) for v in value)
    return str(value)


def _coerce(text: str, default, key: str):
    try:
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            if not text:
                return ()
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if default and isinstance(default[0], tuple):
                ranges = []
                for p in parts:
                    lo, hi = p.split(":")
                    ranges.append((float(lo), float(hi)))
                return tuple(ranges)
            return tuple(parts)
        return text
    except (ValueError, TypeError) as exc:
        raise ParseError(f"cannot parse {key} = {text!r}: {exc}") from exc


def _from_kv(cls, kv: dict[str, str]):
    defaults = cls()
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in kv:
            kwargs[f.name] = _coerce(kv[f.name], getattr(defaults, f.name), f.name)
    return cls(**kwargs)


def load_model_config(path) -> ModelConfig:
    return _from_kv(ModelConfig, parse_kv(path))


def load_train_config(path) -> TrainConfig:
    return _from_kv(TrainConfig, parse_kv(path))


def load_corpus_spec(path) -> SyntheticCorpusSpec:
    return _from_kv(SyntheticCorpusSpec, parse_kv(path))


def write_config(path, *configs, header: str | None = None) -> None:
    """Serialize dataclass configs; later sections may not repeat keys."""
    lines = []
    if header:
        lines.append(f"# {header}")
    seen = set()
    for cfg in configs:
        lines.append(f"# {type(cfg).__name__}")
        for f in dataclasses.fields(cfg):
            if f.name in seen:
                raise ValueError(f"duplicate config key {f.name!r}")
            seen.add(f.name)
            lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_run_config(path) -> tuple[ModelConfig, TrainConfig]:
    """One document configures both the model and the training run;
    keys belonging to neither are rejected as likely typos."""
    kv = parse_kv(path)
    known = {f.name for f in dataclasses.fields(ModelConfig)} \
        | {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(kv) - known)
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(unknown)}")
    return _from_kv(ModelConfig, kv), _from_kv(TrainConfig, kv)
