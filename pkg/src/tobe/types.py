"""Core domain types: stream identity, sample chunks, metric readings and events.

``SampleChunk`` is the universal currency between pipeline stages: a block of
timestamped rows, one column per channel. ``StreamMeta`` names and shapes a
stream so outlets and inlets can agree on what is flowing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


class Modality(enum.Enum):
    ECG = "ECG"
    EDA = "EDA"
    RESP = "RESP"
    EOG = "EOG"
    EEG = "EEG"
    METRIC = "METRIC"


class MetricId(enum.Enum):
    HEART_RATE = "HEART_RATE"
    AROUSAL = "AROUSAL"
    RESPIRATION = "RESPIRATION"
    VIGILANCE = "VIGILANCE"
    WORKLOAD = "WORKLOAD"
    MEDITATION = "MEDITATION"
    VALENCE = "VALENCE"
    CARDIAC_COHERENCE = "CARDIAC_COHERENCE"
    PAIR_SYNCHRONY = "PAIR_SYNCHRONY"


#: Canonical 8-channel montage used throughout: occipital/parietal pairs plus
#: the frontal and temporal sites needed by the mental-state indices.
EEG_CHANNELS: tuple[str, ...] = ("O1", "P7", "F7", "FP1", "F8", "T8", "P8", "O2")


#: Who can perceive a metric without instrumentation: level 1 is visible to
#: self and others (blinks), level 2 to self only (heart, breath), level 3 is
#: hidden to both (mental-state indices and derived coherence measures).
VISIBILITY_LEVEL: dict[MetricId, int] = {
    MetricId.HEART_RATE: 2,
    MetricId.RESPIRATION: 2,
    MetricId.AROUSAL: 3,
    MetricId.VIGILANCE: 3,
    MetricId.WORKLOAD: 3,
    MetricId.MEDITATION: 3,
    MetricId.VALENCE: 3,
    MetricId.CARDIAC_COHERENCE: 3,
    MetricId.PAIR_SYNCHRONY: 3,
}


@dataclass(frozen=True)
class StreamMeta:
    """Identity and shape of a signal stream.

    nominal_rate of 0 marks an irregular / event stream.
    """

    name: str
    modality: Modality
    channel_labels: tuple[str, ...]
    nominal_rate: float
    unit: str
    source_id: str

    def __post_init__(self):
        if not self.name:
            raise ContractError("stream name must be non-empty")
        labels = tuple(self.channel_labels)
        object.__setattr__(self, "channel_labels", labels)
        if not labels:
            raise ContractError("channel_labels must be non-empty")
        if len(set(labels)) != len(labels):
            raise ContractError(f"channel_labels must be unique, got {labels}")
        if self.nominal_rate < 0:
            raise ContractError("nominal_rate must be >= 0")
        if not self.source_id:
            raise ContractError("source_id must be non-empty")
        if isinstance(self.modality, str):
            object.__setattr__(self, "modality", Modality[self.modality])

    @property
    def n_channels(self) -> int:
        return len(self.channel_labels)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "modality": self.modality.value,
            "channel_labels": list(self.channel_labels),
            "nominal_rate": self.nominal_rate,
            "unit": self.unit,
            "source_id": self.source_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StreamMeta":
        return cls(
            name=d["name"],
            modality=Modality(d["modality"]),
            channel_labels=tuple(d["channel_labels"]),
            nominal_rate=float(d["nominal_rate"]),
            unit=d["unit"],
            source_id=d["source_id"],
        )


class SampleChunk:
    """A timestamped block of multichannel samples.

    timestamps are float64 seconds on the sender's clock, one per row;
    samples is an (n_samples, n_channels) float32 matrix. Timestamps must be
    strictly increasing and samples must be finite.
    """

    __slots__ = ("timestamps", "samples")

    def __init__(self, timestamps, samples):
        ts = np.asarray(timestamps, dtype=np.float64).reshape(-1)
        data = np.asarray(samples, dtype=np.float32)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ContractError(f"samples must be 2-D, got shape {data.shape}")
        if ts.shape[0] != data.shape[0]:
            raise ContractError(
                f"{ts.shape[0]} timestamps for {data.shape[0]} sample rows"
            )
        if ts.shape[0] == 0:
            raise ContractError("chunk must contain at least one sample")
        if ts.shape[0] > 1 and not np.all(np.diff(ts) > 0):
            raise ContractError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(data)):
            raise ContractError("samples contain NaN or Inf")
        self.timestamps = ts
        self.samples = data

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    def __repr__(self):
        return (
            f"SampleChunk(n_samples={self.n_samples}, "
            f"n_channels={self.n_channels}, t0={self.timestamps[0]:.3f})"
        )

    def __eq__(self, other):
        return (
            isinstance(other, SampleChunk)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class ClockOffset:
    """Receiver minus sender clock, estimated from one ping/pong exchange."""

    offset_s: float
    rtt_s: float

    def __post_init__(self):
        if self.rtt_s < 0:
            raise ContractError("rtt_s must be >= 0")


@dataclass(frozen=True)
class MetricValue:
    """One reading of a named metric: raw native units plus normalized [0,1]."""

    metric_id: MetricId
    t: float
    raw: float
    normalized: float
    visibility_level: int = 0

    def __post_init__(self):
        if not np.isfinite(self.raw):
            raise ContractError(f"{self.metric_id.value}: raw must be finite")
        if not 0.0 <= self.normalized <= 1.0:
            raise ContractError(
                f"{self.metric_id.value}: normalized {self.normalized} outside [0,1]"
            )
        if self.visibility_level == 0:
            object.__setattr__(
                self, "visibility_level", VISIBILITY_LEVEL[self.metric_id]
            )


@dataclass(frozen=True)
class BeatEvent:
    """One detected heartbeat (R peak) at time t."""

    t: float


@dataclass(frozen=True)
class BlinkEvent:
    """One detected eye blink with the peak excursion that triggered it."""

    t: float
    peak_amplitude: float


@dataclass(frozen=True)
class BreathPhase:
    """Breath cycle position: phase in [0,1) with 0 at inhale onset, plus
    chest inflation in [0,1]. stale marks output held from degenerate input."""

    t: float
    phase: float
    inflation: float
    stale: bool = False
