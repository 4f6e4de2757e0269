"""Checkpoint serialization: JSON manifest plus raw float32 blobs.

``manifest.json`` carries names, shapes, seeds, the full run config, the
per-recording scaler statistics and feature normalization; ``params.bin``
holds every parameter little-endian float32 in manifest order, and
``adam.bin`` both Adam moment buffers in the same order.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .brain_net import BrainNet, BrainNetConfig
from .numerics import AdamState, BatchNormState
from .preprocessing import ScalerParams
from .speech import FeatureStats


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(
    out_dir,
    brain: BrainNet,
    run_config: dict,
    scalers: Dict[str, ScalerParams],
    feature_stats: FeatureStats,
    deep_mel: Optional[BrainNet] = None,
    adam: Optional[AdamState] = None,
    extra: Optional[dict] = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    nets = [("", brain)] + ([("deepmel.", deep_mel)] if deep_mel is not None else [])
    entries = []
    blobs = []
    for prefix, net in nets:
        for key in sorted(net.params):
            p = net.params[key]
            entries.append({"name": prefix + key, "shape": list(p.shape)})
            blobs.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    _atomic_write(out_dir / "params.bin", b"".join(blobs))

    bn_entries = []
    bn_blobs = []
    for prefix, net in nets:
        for key in sorted(net.bn_states):
            st = net.bn_states[key]
            bn_entries.append(
                {"name": prefix + key, "channels": int(st.running_mean.shape[0]),
                 "initialized": bool(st.initialized), "momentum": st.momentum,
                 "eps": st.eps}
            )
            bn_blobs.append(np.ascontiguousarray(st.running_mean, dtype="<f4").tobytes())
            bn_blobs.append(np.ascontiguousarray(st.running_var, dtype="<f4").tobytes())
    _atomic_write(out_dir / "bn.bin", b"".join(bn_blobs))

    if adam is not None:
        adam_blobs = []
        for prefix, net in nets:
            for key in sorted(net.params):
                name = net.params[key].name
                adam_blobs.append(np.ascontiguousarray(adam.m[name], dtype="<f4").tobytes())
        for prefix, net in nets:
            for key in sorted(net.params):
                name = net.params[key].name
                adam_blobs.append(np.ascontiguousarray(adam.v[name], dtype="<f4").tobytes())
        _atomic_write(out_dir / "adam.bin", b"".join(adam_blobs))

    manifest = {
        "format": 1,
        "config": run_config,
        "config_hash": config_hash(run_config),
        "params": entries,
        "bn": bn_entries,
        "adam": {"step": adam.step, "lr": adam.lr, "beta1": adam.beta1,
                 "beta2": adam.beta2, "eps": adam.eps} if adam is not None else None,
        "brain_config": brain.config.to_dict(),
        "deep_mel_config": deep_mel.config.to_dict() if deep_mel is not None else None,
        "scalers": {k: v.to_dict() for k, v in sorted(scalers.items())},
        "feature_stats": feature_stats.to_dict(),
        "extra": extra or {},
    }
    _atomic_write(
        out_dir / "manifest.json",
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode(),
    )
    return out_dir


def load_checkpoint(ckpt_dir) -> dict:
    """Rebuild networks and preprocessing state from a checkpoint directory."""
    ckpt_dir = Path(ckpt_dir)
    manifest = json.loads((ckpt_dir / "manifest.json").read_text())
    raw = (ckpt_dir / "params.bin").read_bytes()

    brain = BrainNet(BrainNetConfig.from_dict(manifest["brain_config"]),
                     np.random.default_rng(0))
    deep_mel = None
    if manifest["deep_mel_config"] is not None:
        deep_mel = BrainNet(BrainNetConfig.from_dict(manifest["deep_mel_config"]),
                            np.random.default_rng(0), prefix="deepmel.")

    by_name: Dict[str, Tuple[BrainNet, str]] = {}
    for key in brain.params:
        by_name[key] = (brain, key)
    if deep_mel is not None:
        for key in deep_mel.params:
            by_name["deepmel." + key] = (deep_mel, key)

    offset = 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 4
        arr = np.frombuffer(raw[offset : offset + size], dtype="<f4").reshape(shape)
        net, key = by_name[entry["name"]]
        net.params[key].data = arr.astype(np.float32).copy()
        offset += size
    if offset != len(raw):
        raise ValueError(
            f"params.bin: expected {offset} bytes per manifest, found {len(raw)}"
        )

    bn_raw = (ckpt_dir / "bn.bin").read_bytes()
    offset = 0
    for entry in manifest["bn"]:
        c = entry["channels"]
        name = entry["name"]
        net = deep_mel if name.startswith("deepmel.") else brain
        key = name[len("deepmel."):] if name.startswith("deepmel.") else name
        st = BatchNormState(c, momentum=entry["momentum"], eps=entry["eps"])
        st.running_mean = np.frombuffer(bn_raw[offset : offset + 4 * c], "<f4").astype(
            np.float32
        )
        offset += 4 * c
        st.running_var = np.frombuffer(bn_raw[offset : offset + 4 * c], "<f4").astype(
            np.float32
        )
        offset += 4 * c
        st.initialized = entry["initialized"]
        net.bn_states[key] = st

    return {
        "manifest": manifest,
        "config": manifest["config"],
        "brain": brain,
        "deep_mel": deep_mel,
        "scalers": {k: ScalerParams.from_dict(v) for k, v in manifest["scalers"].items()},
        "feature_stats": FeatureStats.from_dict(manifest["feature_stats"]),
    }
