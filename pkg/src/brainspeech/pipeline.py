"""Dataset preparation: recordings to preprocessed windows and feature targets.

Materialization is lazy per split and every materialization is recorded by
the access guard, which is how training proves it never touched the test
split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from . import preprocessing
from .dataset import io as dataset_io
from .dataset.types import Recording, Sample, SpeechSegment
from .dataset.windows import try_extract_sample
from .speech import (
    FeatureStats,
    align_feature_rate,
    load_external_features,
    log_compress,
    mel_spectrogram,
)

logger = logging.getLogger(__name__)

WORKING_RATE = 120.0


class SplitLeakError(RuntimeError):
    pass


class SplitAccessGuard:
    """Records which splits had sample data served."""

    def __init__(self):
        self.reads: Set[str] = set()

    def record(self, split: str) -> None:
        self.reads.add(split)

    def assert_no_test_reads(self) -> None:
        if "test" in self.reads:
            raise SplitLeakError("test-split samples were read during training")


@dataclass
class PreparedSplit:
    x: np.ndarray  # (n, C, W) preprocessed brain windows
    subject_idx: np.ndarray  # (n,)
    segment_ids: np.ndarray  # (n,)
    recording_ids: List[str]


@dataclass
class DataConfig:
    representation: str = "external"  # mel | deep-mel | external
    n_mels: int = 40
    window_s: float = 3.0
    anchor_s: float = 0.5
    shift_s: float = 0.150
    baseline_s: float = 0.5
    clamp: Optional[float] = 20.0

    def to_dict(self) -> dict:
        return {
            "representation": self.representation,
            "n_mels": self.n_mels,
            "window_s": self.window_s,
            "anchor_s": self.anchor_s,
            "shift_s": self.shift_s,
            "baseline_s": self.baseline_s,
            "clamp": self.clamp,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DataConfig":
        return cls(**obj)


class DataPipeline:
    """Loads one dataset root and serves preprocessed windows and targets."""

    def __init__(self, root, config: DataConfig,
                 scalers: Optional[Dict[str, preprocessing.ScalerParams]] = None,
                 feature_stats: Optional[FeatureStats] = None):
        self.root = Path(root)
        self.config = config
        if config.representation not in ("mel", "deep-mel", "external"):
            raise ValueError(f"unknown speech representation {config.representation!r}")
        self.guard = SplitAccessGuard()
        self.manifest = dataset_io.read_manifest(self.root)
        self.splits = dataset_io.read_splits(self.root)
        self.segments: Dict[int, SpeechSegment] = dataset_io.load_segments(
            self.root, self.manifest
        )
        self.subjects: List[str] = list(self.manifest["subjects"])
        self._sub_index = {name: i for i, name in enumerate(self.subjects)}
        self.window_samples = int(round(config.window_s * WORKING_RATE))

        self.recordings: Dict[str, Recording] = {}
        self.positions: Optional[np.ndarray] = None
        for rec_id in dataset_io.recording_ids(self.root):
            subject = rec_id.rsplit("_", 1)[0]
            rec = dataset_io.read_recording(self.root, rec_id, self._sub_index[subject])
            if rec.sample_rate != WORKING_RATE:
                rec = Recording(
                    rec.recording_id, rec.subject_id, rec.channel_names, rec.positions,
                    preprocessing.resample(rec.signal, rec.sample_rate, WORKING_RATE)
                    .astype(np.float32),
                    WORKING_RATE,
                )
            if self.positions is None:
                self.positions = rec.positions
            elif not np.array_equal(self.positions, rec.positions):
                raise ValueError(
                    "recordings disagree on sensor positions; mixed layouts are unsupported"
                )
            self.recordings[rec_id] = rec

        if not self.recordings:
            raise ValueError(f"no recordings under {self.root}")

        self._samples: Dict[str, List[Sample]] = {"train": [], "valid": [], "test": []}
        self._collect_samples()
        self.scalers = scalers if scalers is not None else self._fit_scalers()
        self._raw_features: Dict[int, np.ndarray] = {}
        self._mel_inputs: Dict[int, np.ndarray] = {}
        self._load_segment_features()
        if feature_stats is not None:
            self.feature_stats = feature_stats
        else:
            train_ids = self.splits.ids_in("train")
            self.feature_stats = FeatureStats.fit(
                [self._raw_features[sid] for sid in train_ids]
            )
        self.features: Dict[int, np.ndarray] = {
            sid: self.feature_stats.apply(arr).astype(np.float32)
            for sid, arr in self._raw_features.items()
        }

    # -- sample collection ------------------------------------------------

    def _collect_samples(self) -> None:
        for rec_id in sorted(self.recordings):
            rec = self.recordings[rec_id]
            per_segment: Dict[int, float] = {}
            for onset, _dur, _word, sid in dataset_io.read_events(self.root, rec_id):
                per_segment[sid] = min(per_segment.get(sid, np.inf), onset)
            for sid in sorted(per_segment):
                split = self.splits.split_of(sid)
                if split is None:
                    continue
                sample = try_extract_sample(
                    rec,
                    self.segments[sid],
                    word_onset=per_segment[sid],
                    shift=self.config.shift_s,
                    pre_onset=self.config.anchor_s,
                    duration=self.config.window_s,
                )
                if sample is not None:
                    self._samples[split].append(sample)

    def _fit_scalers(self) -> Dict[str, preprocessing.ScalerParams]:
        scalers = {}
        for rec_id, rec in self.recordings.items():
            slices = [
                rec.signal[:, s.brain_start : s.brain_start + s.window_samples]
                for s in self._samples["train"]
                if s.recording_id == rec_id
            ]
            if not slices:
                raise ValueError(f"{rec_id}: no training-split samples to fit the scaler")
            scalers[rec_id] = preprocessing.ScalerParams.fit(np.concatenate(slices, axis=1))
        return scalers

    # -- speech targets ----------------------------------------------------

    def segment_mel(self, sid: int) -> np.ndarray:
        audio, rate = dataset_io.read_audio(self.root, sid)
        mel = log_compress(mel_spectrogram(audio, n_mels=self.config.n_mels))
        return align_feature_rate(mel, rate / 128.0, self.config.window_s, WORKING_RATE)

    def _load_segment_features(self) -> None:
        rep = self.config.representation
        for sid in sorted(self.segments):
            if self.splits.split_of(sid) is None:
                continue
            if rep in ("mel", "deep-mel"):
                mel = self.segment_mel(sid)
                self._raw_features[sid] = mel
                if rep == "deep-mel":
                    self._mel_inputs[sid] = mel
            else:
                arr, rate = load_external_features(self.root, sid)
                self._raw_features[sid] = align_feature_rate(
                    arr, rate, self.config.window_s, WORKING_RATE
                )

    # -- public accessors ---------------------------------------------------

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def n_channels(self) -> int:
        return int(next(iter(self.recordings.values())).n_channels)

    @property
    def feature_dim(self) -> int:
        return int(next(iter(self.features.values())).shape[0])

    def sample_count(self, split: str) -> int:
        return len(self._samples[split])

    def split_samples(self, split: str) -> List[Sample]:
        return list(self._samples[split])

    def materialize(self, split: str) -> PreparedSplit:
        """Preprocessed brain windows for every sample of a split."""
        self.guard.record(split)
        samples = self._samples[split]
        if not samples:
            raise ValueError(f"no samples in split {split!r}")
        x = np.empty((len(samples), self.n_channels, self.window_samples), dtype=np.float32)
        for i, s in enumerate(samples):
            raw = self.recordings[s.recording_id].signal[
                :, s.brain_start : s.brain_start + s.window_samples
            ]
            x[i] = preprocessing.preprocess_window(
                raw,
                self.scalers[s.recording_id],
                baseline_dur=self.config.baseline_s,
                sample_rate=WORKING_RATE,
                clamp_limit=self.config.clamp,
            )
        return PreparedSplit(
            x=x,
            subject_idx=np.array([s.subject_id for s in samples], dtype=int),
            segment_ids=np.array([s.segment_id for s in samples], dtype=int),
            recording_ids=[s.recording_id for s in samples],
        )

    def candidate_features(self, split: str) -> Tuple[List[int], np.ndarray]:
        """Normalized feature targets of a split's segments, in id order."""
        ids = self.splits.ids_in(split)
        return ids, np.stack([self.features[sid] for sid in ids])

    def mel_input(self, sid: int) -> np.ndarray:
        """Speech-tower input (normalized log-mel) for deep-mel training."""
        if self.config.representation != "deep-mel":
            raise ValueError("mel inputs only exist for the deep-mel representation")
        return self.features[sid]

    def anchor_word(self, sid: int) -> str:
        w = self.segments[sid].anchor_word(self.config.anchor_s)
        if w is None:
            raise ValueError(f"segment {sid} lacks a word at +{self.config.anchor_s}s")
        return w.word

    def train_vocabulary(self) -> Set[str]:
        from .dataset.splits import vocabulary

        words = []
        for sid in self.splits.ids_in("train"):
            words.extend(w.word for w in self.segments[sid].words)
        return vocabulary(words)
