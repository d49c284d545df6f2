"""Flat text configuration: `key = value` lines with dotted namespaces.

Lines are `key = value`; `#` starts a comment (full line or trailing);
blank lines are ignored. Every key must exist in the registry below, typed
and defaulted, so typos fail loudly instead of silently using a default.
The digest is a SHA-256 over the fully resolved configuration (defaults
applied, keys sorted), so two files that mean the same thing share a digest
regardless of comments, ordering, or spacing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .data.synthetic import SyntheticConfig
from .encoders import EncoderConfig
from .evaluation.heads import ProbeConfig
from .objectives.models import OBJECTIVES, TrainConfig

__all__ = [
    "ConfigError",
    "Config",
    "REGISTRY",
    "parse_config_text",
    "load_config",
    "default_config",
    "config_from_values",
    "render_config",
    "make_synthetic_config",
    "make_encoder_config",
    "make_train_config",
    "make_probe_config",
]


class ConfigError(ValueError):
    """Malformed text, unknown key, or a value of the wrong type."""


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# key -> (type converter, default). The registry is the single source of
# truth for what may appear in a config file.
REGISTRY: dict[str, tuple] = {
    # synthetic data generation
    "data.n_clients": (int, 1000),
    "data.length_min": (int, 100),
    "data.length_max": (int, 300),
    "data.n_mcc": (int, 20),
    "data.n_regimes": (int, 5),
    "data.label_coupling": (float, 0.9),
    "data.transition_sharpness": (float, 0.12),
    "data.exo_switch_rate": (float, 1.0 / 45.0),
    "data.exo_strength": (float, 0.25),
    "data.cp_probability": (float, 0.3),
    "data.cp_distress_prob": (float, 0.5),
    "data.distress_blend": (float, 0.6),
    "data.amount_sigma": (float, 0.6),
    "data.distress_amount_shift": (float, -0.4),
    "data.exo_amount_shift": (float, 0.15),
    "data.refund_prob": (float, 0.03),
    "data.gap_mean_days": (float, 1.0),
    "data.start_window_days": (float, 30.0),
    "data.base_time": (int, 1577836800),
    "data.seed": (int, 0),
    "data.horizon_days": (float, 30.0),
    # vocabulary and splits
    "vocab.k": (int, 100),
    "split.train": (float, 0.8),
    "split.val": (float, 0.1),
    "split.test": (float, 0.1),
    "split.seed": (int, 0),
    # encoder
    "encoder.d_emb": (int, 16),
    "encoder.hidden": (int, 64),
    "encoder.arch": (str, "gru"),
    "encoder.blocks": (int, 2),
    "encoder.heads": (int, 4),
    "encoder.ff": (int, 128),
    # objective training
    "train.objective": (str, "coles"),
    "train.epochs": (int, 5),
    "train.batch_size": (int, 64),
    "train.lr": (float, 1e-3),
    "train.max_len": (int, 100),
    "train.pool": (str, "auto"),
    "train.margin": (float, 0.5),
    "train.slices_per_client": (int, 5),
    "train.slice_min": (int, 15),
    "train.slice_max": (int, 50),
    "train.clients_per_batch": (int, 16),
    "train.ts2vec_overlap_min": (int, 8),
    "train.ts2vec_overlap_max": (int, 40),
    "train.ts2vec_extend_max": (int, 24),
    "train.ts2vec_alpha": (float, 0.5),
    "train.mlm_select_p": (float, 0.1),
    "train.mlm_mask_p": (float, 0.8),
    "train.mlm_swap_p": (float, 0.1),
    "train.ce_weight": (float, 5.0),
    "train.mse_weight": (float, 1.0),
    "train.head_hidden": (int, 64),
    # evaluation protocol
    "eval.window": (int, 32),
    "eval.stride": (int, 16),
    "eval.n_seeds": (int, 3),
    "eval.probe_hidden": (int, 128),
    "eval.probe_epochs": (int, 10),
    "eval.probe_batch_size": (int, 512),
    "eval.probe_lr": (float, 1e-3),
    # cross-client context
    "context.store_size": (int, 500),
    "context.method": (str, "mean"),
    "context.attn_epochs": (int, 3),
    "context.attn_lr": (float, 1e-2),
}


@dataclass(frozen=True)
class Config:
    """Resolved key/value mapping plus its canonical digest."""

    values: dict
    digest: str

    def get(self, key: str):
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def section(self, prefix: str) -> dict:
        """All keys under `prefix.`, with the prefix stripped."""
        head = prefix + "."
        return {k[len(head):]: v for k, v in self.values.items()
                if k.startswith(head)}


def parse_config_text(text: str) -> dict[str, str]:
    """Raw `key = value` pairs, before type conversion."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _resolve(raw: dict[str, str]) -> dict:
    unknown = sorted(set(raw) - set(REGISTRY))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {}
    for key, (conv, default) in REGISTRY.items():
        if key in raw:
            try:
                values[key] = _bool(raw[key]) if conv is bool else conv(raw[key])
            except ValueError as err:
                raise ConfigError(
                    f"key {key!r}: cannot parse {raw[key]!r} as {conv.__name__}"
                ) from err
        else:
            values[key] = default
    return values


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_config(values: dict) -> str:
    """Canonical text form: sorted keys, one `key = value` per line."""
    lines = [f"{k} = {_render_value(values[k])}" for k in sorted(values)]
    return "\n".join(lines) + "\n"


def _digest(values: dict) -> str:
    return hashlib.sha256(render_config(values).encode("utf-8")).hexdigest()


def config_from_values(values: dict) -> Config:
    return Config(values=dict(values), digest=_digest(values))


def default_config() -> Config:
    return config_from_values({k: d for k, (_, d) in REGISTRY.items()})


def load_config(path: Optional[str | Path]) -> Config:
    """Config from a file, or pure defaults when no path is given."""
    if path is None:
        return default_config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return config_from_values(_resolve(parse_config_text(text)))


def make_synthetic_config(cfg: Config) -> SyntheticConfig:
    d = cfg.section("data")
    return SyntheticConfig(
        n_clients=d["n_clients"],
        length_min=d["length_min"],
        length_max=d["length_max"],
        n_mcc=d["n_mcc"],
        n_regimes=d["n_regimes"],
        label_coupling=d["label_coupling"],
        transition_sharpness=d["transition_sharpness"],
        exo_switch_rate=d["exo_switch_rate"],
        exo_strength=d["exo_strength"],
        cp_probability=d["cp_probability"],
        cp_distress_prob=d["cp_distress_prob"],
        distress_blend=d["distress_blend"],
        amount_sigma=d["amount_sigma"],
        distress_amount_shift=d["distress_amount_shift"],
        exo_amount_shift=d["exo_amount_shift"],
        refund_prob=d["refund_prob"],
        gap_mean_days=d["gap_mean_days"],
        start_window_days=d["start_window_days"],
        base_time=d["base_time"],
        seed=d["seed"],
    )


def make_encoder_config(cfg: Config, n_indices: int,
                        arch: Optional[str] = None) -> EncoderConfig:
    e = cfg.section("encoder")
    return EncoderConfig(
        n_indices=n_indices,
        d_emb=e["d_emb"],
        hidden=e["hidden"],
        arch=arch if arch is not None else e["arch"],
        blocks=e["blocks"],
        heads=e["heads"],
        ff=e["ff"],
    )


def make_train_config(cfg: Config) -> TrainConfig:
    t = cfg.section("train")
    objective = t["objective"]
    if objective not in OBJECTIVES:
        raise ConfigError(
            f"train.objective must be one of {OBJECTIVES}, got {objective!r}"
        )
    return TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        lr=t["lr"],
        max_len=t["max_len"],
        pool=t["pool"],
        margin=t["margin"],
        slices_per_client=t["slices_per_client"],
        slice_min=t["slice_min"],
        slice_max=t["slice_max"],
        clients_per_batch=t["clients_per_batch"],
        ts2vec_overlap_min=t["ts2vec_overlap_min"],
        ts2vec_overlap_max=t["ts2vec_overlap_max"],
        ts2vec_extend_max=t["ts2vec_extend_max"],
        ts2vec_alpha=t["ts2vec_alpha"],
        mlm_select_p=t["mlm_select_p"],
        mlm_mask_p=t["mlm_mask_p"],
        mlm_swap_p=t["mlm_swap_p"],
        ce_weight=t["ce_weight"],
        mse_weight=t["mse_weight"],
        head_hidden=t["head_hidden"],
    )


def make_probe_config(cfg: Config) -> ProbeConfig:
    e = cfg.section("eval")
    return ProbeConfig(
        hidden=e["probe_hidden"],
        epochs=e["probe_epochs"],
        batch_size=e["probe_batch_size"],
        lr=e["probe_lr"],
    )
