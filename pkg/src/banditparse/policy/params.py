"""Parameter container for the encoder-decoder policy, plus checkpoint IO.

Parameters live in a flat ``dict[str, np.ndarray]`` so that gradient
dictionaries share the same structure and elementwise helpers (norms,
clipping, axpy) apply uniformly to both.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    """Architecture sizes; desk-scale defaults (full scale would be 1024/1000)."""

    n_src: int
    n_tgt: int
    emb: int = 32
    hidden: int = 64
    attn: int = 64
    max_len: int = 60

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"NetConfig.{name} must be positive")


def _gru_shapes(in_dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for gate in ("r", "z", "h"):
        shapes[f"W{gate}"] = (in_dim, hidden)
        shapes[f"U{gate}"] = (hidden, hidden)
        shapes[f"b{gate}"] = (hidden,)
    return shapes


def param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    h, e, a = cfg.hidden, cfg.emb, cfg.attn
    shapes: dict[str, tuple[int, ...]] = {
        "src_emb": (cfg.n_src, e),
        "tgt_emb": (cfg.n_tgt, e),
        "init_W": (2 * h, h),
        "init_b": (h,),
        "att_W": (h, a),
        "att_U": (2 * h, a),
        "att_v": (a,),
        "out_W": (h + 2 * h + e, cfg.n_tgt),
        "out_b": (cfg.n_tgt,),
    }
    for prefix, in_dim in (("ef", e), ("eb", e), ("d1", e), ("d2", 2 * h)):
        for name, shape in _gru_shapes(in_dim, h).items():
            shapes[f"{prefix}_{name}"] = shape
    return shapes


def init_params(cfg: NetConfig, seed: int, scale: float = 0.08) -> dict[str, np.ndarray]:
    """Uniform init in [-scale, scale], float64 throughout."""
    rng = np.random.default_rng(seed)
    return {
        name: rng.uniform(-scale, scale, size=shape)
        for name, shape in sorted(param_shapes(cfg).items())
    }


def zeros_like_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def copy_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def add_scaled(dst: dict[str, np.ndarray], src: dict[str, np.ndarray], alpha: float = 1.0) -> None:
    for k in dst:
        dst[k] += alpha * src[k]


def scale_params(grads: dict[str, np.ndarray], alpha: float) -> dict[str, np.ndarray]:
    return {k: alpha * v for k, v in grads.items()}


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(v * v)) for v in grads.values())))


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """In-place clip; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        for v in grads.values():
            v *= factor
    return norm


def flatten_params(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def save_checkpoint(path, params: dict[str, np.ndarray], cfg: NetConfig,
                    extra: dict | None = None) -> None:
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(cfg), "extra": extra or {}}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **params)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], NetConfig, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        params = {k: data[k] for k in data.files if k != "__meta__"}
    return params, NetConfig(**meta["config"]), meta["extra"]
