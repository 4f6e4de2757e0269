"""Convolutional brain module: spatial attention, subject layer, dilated blocks.

The same builder also produces the speech-side tower ("deep mel"): identical
convolutional stack with the subject layer disabled and a learned input
projection instead of sensor-position attention.
"""

from __future__ import annotations

from dataclasses import dataclass, replace, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from .numerics import (
    BatchNormState,
    Tensor,
    add,
    batchnorm1d,
    conv1d,
    gelu,
    glu,
    matmul2d,
    mix,
    parameter,
    relu,
    reshape,
    softmax,
    subject_mix,
)

ABLATION_FLAGS = (
    "spatial-attention-dropout",
    "relu",
    "final-convs",
    "glu-conv",
    "skip-connections",
    "initial-conv",
    "spatial-attention",
    "subject-layer",
)


@dataclass
class BrainNetConfig:
    in_channels: int
    out_features: int
    n_subjects: int = 1
    d1: int = 270
    d2: int = 320
    blocks: int = 5
    kernel: int = 3
    harmonics: int = 32
    drop_radius: float = 0.2
    pos_margin: float = 0.1
    use_subject_layer: bool = True
    use_spatial_attention: bool = True
    use_spatial_dropout: bool = True
    use_skip_connections: bool = True
    use_initial_conv: bool = True
    use_final_convs: bool = True
    use_glu_conv: bool = True
    activation: str = "gelu"

    def validate(self) -> None:
        for key in ("in_channels", "out_features", "n_subjects", "d1", "d2",
                    "blocks", "harmonics"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be >= 1")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if not (0.0 <= self.drop_radius <= np.sqrt(2.0)):
            raise ValueError("drop_radius must lie in [0, sqrt(2)]")
        if self.activation not in ("gelu", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "BrainNetConfig":
        return cls(**obj)


def build_ablation(config: BrainNetConfig, flag: str) -> BrainNetConfig:
    """Config for one ablated variant; each flag disables exactly one piece."""
    mapping = {
        "spatial-attention-dropout": {"use_spatial_dropout": False},
        "relu": {"activation": "relu"},
        "final-convs": {"use_final_convs": False},
        "glu-conv": {"use_glu_conv": False},
        "skip-connections": {"use_skip_connections": False},
        "initial-conv": {"use_initial_conv": False},
        "spatial-attention": {"use_spatial_attention": False},
        "subject-layer": {"use_subject_layer": False},
    }
    if flag not in mapping:
        raise ValueError(f"unknown ablation flag {flag!r}; choose from {ABLATION_FLAGS}")
    return replace(config, **mapping[flag])


def dilation_schedule(blocks: int) -> List[Tuple[int, int]]:
    return [(2 ** ((2 * k) % 5), 2 ** ((2 * k + 1) % 5)) for k in range(blocks)]


def receptive_field_radius(config: BrainNetConfig) -> int:
    """Input samples around t that can influence output sample t."""
    per_tap = (config.kernel - 1) // 2
    radius = 0
    for d_a, d_b in dilation_schedule(config.blocks):
        radius += (d_a + d_b) * per_tap
        if config.use_glu_conv:
            radius += per_tap
    return radius


def fourier_basis(positions: np.ndarray, harmonics: int, margin: float,
                  dtype=np.float64) -> Tuple[np.ndarray, np.ndarray]:
    """cos/sin basis of shape (K*K, C) evaluated at rescaled sensor positions."""
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise ValueError("positions must be (C, 2)")
    if pos.min() < 0.0 or pos.max() > 1.0:
        raise ValueError("positions must lie in [0, 1]^2")
    scaled = margin + (1.0 - 2.0 * margin) * pos
    k = np.arange(1, harmonics + 1)
    # phase[(k,l), i] = 2*pi*(k*x_i + l*y_i)
    phase = 2.0 * np.pi * (
        k[:, None, None] * scaled[None, None, :, 0]
        + k[None, :, None] * scaled[None, None, :, 1]
    ).reshape(harmonics * harmonics, -1)
    return np.cos(phase).astype(dtype), np.sin(phase).astype(dtype)


def rescaled_positions(positions: np.ndarray, margin: float) -> np.ndarray:
    return margin + (1.0 - 2.0 * margin) * np.asarray(positions, dtype=np.float64)


class NonFiniteActivation(RuntimeError):
    def __init__(self, layer: str):
        super().__init__(f"non-finite activations after layer {layer!r}")
        self.layer = layer


class BrainNet:
    """Parameter container plus forward pass. One instance, many subjects."""

    def __init__(self, config: BrainNetConfig, rng: np.random.Generator,
                 dtype=np.float32, prefix: str = ""):
        config.validate()
        self.config = config
        self.dtype = dtype
        self.prefix = prefix
        self.params: Dict[str, Tensor] = {}
        self.bn_states: Dict[str, BatchNormState] = {}
        self._basis_cache: Dict[bytes, Tuple[np.ndarray, np.ndarray]] = {}

        c = config
        if c.use_spatial_attention:
            std = 1.0 / c.harmonics
            self._add("spatial.re", rng.normal(0.0, std, size=(c.d1, c.harmonics, c.harmonics)))
            self._add("spatial.im", rng.normal(0.0, std, size=(c.d1, c.harmonics, c.harmonics)))
        else:
            self._add_conv("input_proj", rng, c.in_channels, c.d1, 1)
        if c.use_initial_conv:
            self._add_conv("initial", rng, c.d1, c.d1, 1)
        if c.use_subject_layer:
            eye = np.eye(c.d1)[None].repeat(c.n_subjects, axis=0)
            noise = rng.normal(0.0, 0.01, size=(c.n_subjects, c.d1, c.d1))
            self._add("subject.m", eye + noise)
        ch = c.d1
        for b in range(c.blocks):
            self._add_conv(f"block{b}.conv1", rng, ch, c.d2, c.kernel)
            self.bn_states[f"block{b}.bn1"] = BatchNormState(c.d2, dtype=dtype)
            self._add(f"block{b}.bn1.gamma", np.ones(c.d2))
            self._add(f"block{b}.bn1.beta", np.zeros(c.d2))
            self._add_conv(f"block{b}.conv2", rng, c.d2, c.d2, c.kernel)
            self.bn_states[f"block{b}.bn2"] = BatchNormState(c.d2, dtype=dtype)
            self._add(f"block{b}.bn2.gamma", np.ones(c.d2))
            self._add(f"block{b}.bn2.beta", np.zeros(c.d2))
            if c.use_glu_conv:
                self._add_conv(f"block{b}.conv3", rng, c.d2, 2 * c.d2, c.kernel)
            ch = c.d2
        if c.use_final_convs:
            self._add_conv("head.conv1", rng, c.d2, 2 * c.d2, 1)
            self._add_conv("head.conv2", rng, 2 * c.d2, c.out_features, 1)
        else:
            self._add_conv("head.direct", rng, c.d2, c.out_features, 1)

    def _add(self, name: str, data: np.ndarray) -> None:
        # dict keys stay unprefixed; tensor names carry the prefix for the
        # optimizer and checkpoint namespaces
        self.params[name] = parameter(np.asarray(data, dtype=self.dtype),
                                      self.prefix + name)

    def _add_conv(self, name: str, rng: np.random.Generator, cin: int, cout: int,
                  kernel: int) -> None:
        bound = 1.0 / np.sqrt(cin * kernel)
        self._add(f"{name}.w", rng.uniform(-bound, bound, size=(cout, cin, kernel)))
        self._add(f"{name}.b", rng.uniform(-bound, bound, size=cout))

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def _act(self, t: Tensor) -> Tensor:
        return gelu(t) if self.config.activation == "gelu" else relu(t)

    def _basis(self, positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        key = np.ascontiguousarray(positions).tobytes()
        if key not in self._basis_cache:
            self._basis_cache[key] = fourier_basis(
                positions, self.config.harmonics, self.config.pos_margin, self.dtype
            )
        return self._basis_cache[key]

    def _dropout_keep(self, positions: np.ndarray, rng: np.random.Generator,
                      max_retries: int = 100) -> np.ndarray:
        scaled = rescaled_positions(positions, self.config.pos_margin)
        lo = scaled.min(axis=0)
        hi = scaled.max(axis=0)
        for _ in range(max_retries):
            center = rng.uniform(lo, hi)
            keep = np.hypot(*(scaled - center).T) > self.config.drop_radius
            if keep.any():
                return keep
        raise RuntimeError("spatial dropout removed every sensor; drop_radius too large")

    def attention_logits(self, positions: np.ndarray) -> Tensor:
        cos_b, sin_b = self._basis(positions)
        c = self.config
        k2 = c.harmonics * c.harmonics
        re2 = reshape(self.params["spatial.re"], (c.d1, k2))
        im2 = reshape(self.params["spatial.im"], (c.d1, k2))
        return add(matmul2d(re2, Tensor(cos_b)), matmul2d(im2, Tensor(sin_b)))

    def attention_weights(self, positions: np.ndarray) -> np.ndarray:
        """Eval-mode softmax weights (no dropout), (D1, C)."""
        logits = self.attention_logits(positions)
        return softmax(logits, axis=1).data

    def forward(
        self,
        x: Tensor,
        subject_idx: np.ndarray,
        positions: Optional[np.ndarray],
        training: bool,
        rng: Optional[np.random.Generator] = None,
        update_running: bool = True,
        subject_fallback: bool = False,
    ) -> Tensor:
        """(B, C, T) -> (B, F, T). Same time length throughout."""
        c = self.config
        if x.ndim != 3 or x.shape[1] != c.in_channels:
            raise ValueError(f"expected (B, {c.in_channels}, T), got {x.shape}")

        if c.use_spatial_attention:
            if positions is None:
                raise ValueError("spatial attention requires sensor positions")
            logits = self.attention_logits(positions)
            keep = None
            if training and c.use_spatial_dropout:
                if rng is None:
                    raise ValueError("train-mode spatial dropout needs an rng")
                keep = np.broadcast_to(self._dropout_keep(positions, rng), logits.shape)
            weights = softmax(logits, axis=1, keep=keep)
            h = mix(weights, x)
        else:
            h = conv1d(x, self.params["input_proj.w"], self.params["input_proj.b"])
        self._check(h, "spatial")

        if c.use_initial_conv:
            h = conv1d(h, self.params["initial.w"], self.params["initial.b"])

        if c.use_subject_layer:
            sidx = np.asarray(subject_idx)
            m = self.params["subject.m"]
            if np.any(sidx < 0) or np.any(sidx >= c.n_subjects):
                if not subject_fallback:
                    raise IndexError(
                        "unknown subject index; pass subject_fallback=True to use the "
                        "average subject matrix"
                    )
                mean_m = m.data.mean(axis=0, keepdims=True)
                m = Tensor(np.concatenate([m.data, mean_m], axis=0))
                sidx = np.where((sidx < 0) | (sidx >= c.n_subjects), c.n_subjects, sidx)
            h = subject_mix(m, h, sidx)
        self._check(h, "subject")

        for b, (d_a, d_b) in enumerate(dilation_schedule(c.blocks)):
            c1 = conv1d(h, self.params[f"block{b}.conv1.w"], self.params[f"block{b}.conv1.b"],
                        dilation=d_a)
            if c.use_skip_connections and h.shape[1] == c1.shape[1]:
                c1 = add(c1, h)
            h1 = self._act(batchnorm1d(c1, self.params[f"block{b}.bn1.gamma"],
                                       self.params[f"block{b}.bn1.beta"],
                                       self.bn_states[f"block{b}.bn1"], training,
                                       update_running))
            c2 = conv1d(h1, self.params[f"block{b}.conv2.w"], self.params[f"block{b}.conv2.b"],
                        dilation=d_b)
            if c.use_skip_connections:
                c2 = add(c2, h1)
            h2 = self._act(batchnorm1d(c2, self.params[f"block{b}.bn2.gamma"],
                                       self.params[f"block{b}.bn2.beta"],
                                       self.bn_states[f"block{b}.bn2"], training,
                                       update_running))
            if c.use_glu_conv:
                h = glu(conv1d(h2, self.params[f"block{b}.conv3.w"],
                               self.params[f"block{b}.conv3.b"]))
            else:
                h = h2
            self._check(h, f"block{b}")

        if c.use_final_convs:
            h = conv1d(h, self.params["head.conv1.w"], self.params["head.conv1.b"])
            h = self._act(h)
            out = conv1d(h, self.params["head.conv2.w"], self.params["head.conv2.b"])
        else:
            out = conv1d(h, self.params["head.direct.w"], self.params["head.direct.b"])
        self._check(out, "head")
        return out

    @staticmethod
    def _check(t: Tensor, layer: str) -> None:
        if not np.all(np.isfinite(t.data)):
            raise NonFiniteActivation(layer)


def deep_mel_config(n_mels: int, out_features: int, base: BrainNetConfig) -> BrainNetConfig:
    """Speech-side tower: same conv stack, no subject layer, learned input
    projection in place of sensor attention."""
    return replace(
        base,
        in_channels=n_mels,
        out_features=out_features,
        n_subjects=1,
        use_subject_layer=False,
        use_spatial_attention=False,
        use_spatial_dropout=False,
    )
