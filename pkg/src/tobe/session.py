"""Multi-user session orchestration: pipelines, relaxation protocol, events.

A session wires each user's signal sources into the metric extractors,
drives per-user avatar mappers, runs the optional three-phase relaxation
protocol (GUIDED with a breathing gauge, SOLO, SYNC with the pair-synchrony
metric), and merges everything into one ordered event stream.

Time is owned by a pluggable clock. With a SimulatedClock the stream of a
fully generator- or recording-driven session is deterministic: running the
same config twice yields byte-identical NDJSON logs, which is how the
replay tests pin the whole stack down.
"""

from __future__ import annotations

import json
import math
import zlib
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import yaml

from .dsp import BandSpec, Normalizer
from .errors import ConfigurationError, ContractError
from .mapper import (
    Anchor,
    AvatarConfig,
    AvatarMapper,
    Binding,
    BindingMode,
    Keyframe,
    Timeline,
    Transform,
    default_avatar_config,
    load_avatar_config,
)
from .metrics import (
    ArousalExtractor,
    BlinkDetector,
    CardiacCoherenceTracker,
    DEFAULT_LAYOUT,
    EegMetricsPipeline,
    HeartRateEstimator,
    PairSynchronyTracker,
    RespirationExtractor,
    RPeakDetector,
)
from .synth import (
    EcgSpec,
    EegSpec,
    EegComponent,
    CouplingSpec,
    ScrEvent,
    concat_chunks,
    gen_ecg,
    gen_eda,
    gen_eeg,
    gen_respiration,
    read_recording,
)
from .types import MetricId, MetricValue, Modality, SampleChunk, StreamMeta

#: Session loop granularity; renders are emitted once per step.
STEP_S = 0.25
#: Gauge messages during GUIDED phases go out on this grid.
GAUGE_EVERY_S = 0.2
#: Events are held back this long before release so late-stamped values
#: still merge in order. The QRS detector's search-back emits first-second
#: beats up to ~1.25 s after their fiducial times, which bounds this.
HOLDBACK_S = 1.5
#: Arousal values are centre-stamped 1 s behind real time, so EDA sessions
#: need a wider reorder horizon.
HOLDBACK_EDA_S = 1.5
#: Coherence values for second S wait for the heart-rate series to cross S,
#: which trails by up to an inter-beat interval plus detection latency.
HOLDBACK_MSC_S = 2.5
#: A user's latest value is dropped from group aggregates after this long.
GROUP_STALE_S = 5.0


class PhaseId(Enum):
    GUIDED = "GUIDED"
    SOLO = "SOLO"
    SYNC = "SYNC"


class GaugeDirection(Enum):
    RISING = "RISING"
    FALLING = "FALLING"


@dataclass(frozen=True)
class ProtocolPhase:
    phase_id: PhaseId
    duration_s: float

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ContractError("phase duration must be > 0")


@dataclass(frozen=True)
class RelaxationProtocol:
    """Ordered protocol phases plus the breathing-gauge cycle length."""

    phases: tuple[ProtocolPhase, ...]
    gauge_half_cycle_s: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ContractError("protocol needs at least one phase")
        if not self.gauge_half_cycle_s > 0:
            raise ContractError("gauge half cycle must be > 0")

    @classmethod
    def default(cls) -> "RelaxationProtocol":
        return cls(phases=(
            ProtocolPhase(PhaseId.GUIDED, 300.0),
            ProtocolPhase(PhaseId.SOLO, 300.0),
            ProtocolPhase(PhaseId.SYNC, 300.0),
        ))

    @property
    def total_s(self) -> float:
        return float(sum(p.duration_s for p in self.phases))

    def phase_at(self, t: float) -> tuple[int, ProtocolPhase, float] | None:
        """(index, phase, phase start time) containing t, or None."""
        start = 0.0
        for i, phase in enumerate(self.phases):
            if start <= t < start + phase.duration_s:
                return i, phase, start
            start += phase.duration_s
        return None


@dataclass(frozen=True)
class GaugeState:
    t: float
    level: float
    direction: GaugeDirection


def gauge_level(protocol: RelaxationProtocol, t: float) -> GaugeState | None:
    """Triangular breathing gauge, or None outside GUIDED phases.

    Rises from 0 at each GUIDED phase start, one half cycle up then one
    half cycle down: at half_cycle 5 s the guide paces ~10 s breaths.
    """
    hit = protocol.phase_at(t)
    if hit is None or hit[1].phase_id is not PhaseId.GUIDED:
        return None
    local = t - hit[2]
    half = protocol.gauge_half_cycle_s
    pos = local % (2.0 * half)
    if pos <= half:
        return GaugeState(t, pos / half, GaugeDirection.RISING)
    return GaugeState(t, 2.0 - pos / half, GaugeDirection.FALLING)


def group_aggregate(values: Mapping[str, MetricValue | None],
                    metric_id: MetricId, now: float, *,
                    stale_after_s: float = GROUP_STALE_S) -> MetricValue | None:
    """Mean of the users' fresh normalized values, as a group MetricValue.

    values maps user_id to that user's latest reading of the metric (None
    when the user has never reported it). Readings older than
    stale_after_s are excluded; with nobody fresh there is no output.
    """
    fresh = []
    for user_id, mv in values.items():
        if mv is None:
            continue
        if mv.metric_id is not metric_id:
            raise ContractError(
                f"user {user_id!r} supplied {mv.metric_id.value}, "
                f"expected {metric_id.value}")
        if now - mv.t <= stale_after_s:
            fresh.append(mv.normalized)
    if not fresh:
        return None
    raw = float(np.mean(fresh))
    return MetricValue(metric_id, now, raw, raw)


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class StreamSource:
    """A live outlet found by discovery; modality declared up front so the
    config validates without the network."""

    name: str
    modality: Modality


@dataclass(frozen=True)
class RecordingSource:
    path: str
    meta: StreamMeta

    @property
    def modality(self) -> Modality:
        return self.meta.modality


@dataclass(frozen=True)
class GeneratorSource:
    kind: str
    params: Mapping
    seed: int
    modality: Modality


@dataclass(frozen=True)
class UserConfig:
    user_id: str
    sources: tuple
    metrics: tuple[MetricId, ...]
    avatar: AvatarConfig
    normalizers: Mapping[MetricId, Normalizer] = field(default_factory=dict)


@dataclass(frozen=True)
class SessionConfig:
    users: tuple[UserConfig, ...]
    protocol: RelaxationProtocol | None
    duration_s: float


#: Modalities each metric needs among a user's sources.
METRIC_REQUIRES: dict[MetricId, tuple[Modality, ...]] = {
    MetricId.HEART_RATE: (Modality.ECG,),
    MetricId.RESPIRATION: (Modality.RESP,),
    MetricId.CARDIAC_COHERENCE: (Modality.ECG, Modality.RESP),
    MetricId.AROUSAL: (Modality.EDA,),
    MetricId.VIGILANCE: (Modality.EEG,),
    MetricId.WORKLOAD: (Modality.EEG,),
    MetricId.VALENCE: (Modality.EEG,),
    MetricId.MEDITATION: (Modality.EEG,),
}

_GENERATOR_MODALITY = {
    "ecg": Modality.ECG,
    "respiration": Modality.RESP,
    "eeg": Modality.EEG,
    "eda": Modality.EDA,
}


def _check_keys(obj, path, required, optional=frozenset()):
    where = path or "session config"
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{where}: expected a mapping")
    for key in obj:
        if key not in required and key not in optional:
            full = f"{path}.{key}" if path else key
            raise ConfigurationError(f"unknown field {full!r}")
    for key in sorted(required):
        if key not in obj:
            raise ConfigurationError(f"{where}: missing field {key!r}")


def _default_seed(user_id: str, index: int) -> int:
    # stable across processes, unlike hash()
    return zlib.crc32(f"{user_id}/{index}".encode())


def _band(entry, path) -> BandSpec:
    if (not isinstance(entry, (list, tuple)) or len(entry) != 2):
        raise ConfigurationError(f"{path}: expected [low_hz, high_hz]")
    return BandSpec(float(entry[0]), float(entry[1]))


def _load_generator(doc, path, seed_fallback: int) -> GeneratorSource:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigurationError(f"{path}: generator needs a 'kind'")
    kind = doc["kind"]
    if kind not in _GENERATOR_MODALITY:
        raise ConfigurationError(
            f"{path}.kind: unknown generator {kind!r} "
            f"(expected one of {sorted(_GENERATOR_MODALITY)})")
    params = {k: v for k, v in doc.items() if k not in ("kind", "seed")}
    seed = int(doc.get("seed", seed_fallback))
    try:
        if kind == "ecg":
            bpm = params.pop("bpm", 60.0)
            if isinstance(bpm, (list, tuple)):
                bpm = tuple((float(t), float(b)) for t, b in bpm)
            spec = EcgSpec(bpm_profile=bpm, **params)
            params = {"spec": spec}
        elif kind == "respiration":
            params.setdefault("period_s", 10.0)
            params.setdefault("fs", 25.0)
            params = {k: float(v) for k, v in params.items()}
            if not set(params) <= {"period_s", "fs", "amplitude", "jitter"}:
                extra = sorted(set(params) - {"period_s", "fs", "amplitude", "jitter"})
                raise ConfigurationError(f"{path}: unknown field {extra[0]!r}")
        elif kind == "eeg":
            comps = params.pop("components", [])
            if isinstance(comps, dict):
                components = {
                    ch: tuple(EegComponent(float(c["center_hz"]),
                                           float(c["bandwidth_hz"]),
                                           float(c["amplitude_uV"]))
                              for c in entries)
                    for ch, entries in comps.items()}
            else:
                components = tuple(
                    EegComponent(float(c["center_hz"]), float(c["bandwidth_hz"]),
                                 float(c["amplitude_uV"])) for c in comps)
            coupling = tuple(
                CouplingSpec(tuple(c["channels"]), float(c["coefficient"]),
                             _band(c["band"], f"{path}.coupling"),
                             float(c.get("amplitude_uV", 10.0)))
                for c in params.pop("coupling", []))
            spec = EegSpec(components=components, coupling=coupling, **params)
            params = {"spec": spec}
        elif kind == "eda":
            events = tuple(
                ScrEvent(float(e["t"]), float(e["amplitude_uS"]),
                         float(e.get("rise_s", 1.0)), float(e.get("decay_s", 3.0)))
                for e in params.pop("scr", []))
            params = {"tonic_uS": float(params.pop("tonic_uS", 5.0)),
                      "fs": float(params.pop("fs", 25.0)),
                      "noise_uS": float(params.pop("noise_uS", 0.0)),
                      "events": events, **params}
            if set(params) != {"tonic_uS", "fs", "noise_uS", "events"}:
                extra = sorted(set(params) - {"tonic_uS", "fs", "noise_uS", "events"})
                raise ConfigurationError(f"{path}: unknown field {extra[0]!r}")
    except ConfigurationError:
        raise
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return GeneratorSource(kind, params, seed, _GENERATOR_MODALITY[kind])


def _load_source(doc, path, seed_fallback):
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: expected a mapping")
    forms = [k for k in ("stream", "recording", "generator") if k in doc]
    if len(forms) != 1:
        raise ConfigurationError(
            f"{path}: need exactly one of stream/recording/generator")
    if forms[0] == "stream":
        _check_keys(doc, path, frozenset({"stream", "modality"}))
        try:
            modality = Modality(doc["modality"])
        except ValueError as exc:
            raise ConfigurationError(
                f"{path}.modality: unknown modality {doc['modality']!r}") from exc
        return StreamSource(str(doc["stream"]), modality)
    if forms[0] == "recording":
        _check_keys(doc, path, frozenset({"recording"}))
        rec_path = str(doc["recording"])
        meta, _ts, _xs = read_recording(rec_path)
        return RecordingSource(rec_path, meta)
    _check_keys(doc, path, frozenset({"generator"}))
    return _load_generator(doc["generator"], path, seed_fallback)


def _load_normalizer(doc, path) -> Normalizer:
    _check_keys(doc, path, frozenset({"kind"}),
                frozenset({"lo", "hi", "window_s", "margin", "center", "slope"}))
    kind = doc["kind"]
    try:
        if kind == "fixed":
            return Normalizer.fixed(float(doc["lo"]), float(doc["hi"]))
        if kind == "rolling":
            return Normalizer.rolling_minmax(
                float(doc.get("window_s", 60.0)), float(doc.get("margin", 0.05)))
        if kind == "logistic":
            return Normalizer.logistic(
                float(doc.get("center", 0.0)), float(doc.get("slope", 1.0)))
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing field {exc}") from exc
    raise ConfigurationError(f"{path}.kind: unknown normalizer {kind!r}")


def _load_protocol(doc, path) -> RelaxationProtocol:
    _check_keys(doc, path, frozenset(), frozenset({"phases", "gauge"}))
    half = 5.0
    if "gauge" in doc:
        _check_keys(doc["gauge"], f"{path}.gauge", frozenset({"half_cycle_s"}))
        half = float(doc["gauge"]["half_cycle_s"])
    if "phases" not in doc:
        return RelaxationProtocol(RelaxationProtocol.default().phases, half)
    phases = []
    for i, entry in enumerate(doc["phases"]):
        p = f"{path}.phases[{i}]"
        _check_keys(entry, p, frozenset({"phase", "duration_s"}))
        try:
            phase_id = PhaseId(entry["phase"])
        except ValueError as exc:
            raise ConfigurationError(
                f"{p}.phase: unknown phase {entry['phase']!r}") from exc
        try:
            phases.append(ProtocolPhase(phase_id, float(entry["duration_s"])))
        except ContractError as exc:
            raise ConfigurationError(f"{p}: {exc}") from exc
    try:
        return RelaxationProtocol(tuple(phases), half)
    except ContractError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def load_session(doc) -> SessionConfig:
    """Validate a parsed session document into a SessionConfig.

    Checks user-id uniqueness and that every enabled metric's required
    modalities appear among that user's sources, so a bad wiring fails
    here rather than minutes into a run.
    """
    _check_keys(doc, "", frozenset({"users"}),
                frozenset({"protocol", "duration_s"}))
    protocol = None
    if doc.get("protocol") is not None:
        protocol = _load_protocol(doc["protocol"], "protocol")
    if "duration_s" in doc:
        duration = float(doc["duration_s"])
        if duration <= 0:
            raise ConfigurationError("duration_s must be > 0")
    elif protocol is not None:
        duration = protocol.total_s
    else:
        raise ConfigurationError("need a protocol or an explicit duration_s")

    if not isinstance(doc["users"], list) or not doc["users"]:
        raise ConfigurationError("users: expected a non-empty list")
    users = []
    seen_ids = set()
    for ui, entry in enumerate(doc["users"]):
        path = f"users[{ui}]"
        _check_keys(entry, path, frozenset({"user_id", "sources", "metrics"}),
                    frozenset({"avatar", "normalizers"}))
        user_id = str(entry["user_id"])
        if user_id in seen_ids:
            raise ConfigurationError(f"duplicate user_id {user_id!r}")
        seen_ids.add(user_id)

        sources = tuple(
            _load_source(s, f"{path}.sources[{i}]", _default_seed(user_id, i))
            for i, s in enumerate(entry["sources"]))
        by_modality = {}
        for i, src in enumerate(sources):
            if src.modality in by_modality:
                raise ConfigurationError(
                    f"user {user_id!r} has more than one "
                    f"{src.modality.value} source")
            by_modality[src.modality] = src

        metrics = []
        for m in entry["metrics"]:
            try:
                metric = MetricId(m)
            except ValueError as exc:
                raise ConfigurationError(
                    f"{path}.metrics: unknown metric {m!r}") from exc
            if metric is MetricId.PAIR_SYNCHRONY:
                raise ConfigurationError(
                    "PAIR_SYNCHRONY is computed for the pair during SYNC, "
                    "not enabled per user")
            for modality in METRIC_REQUIRES[metric]:
                if modality not in by_modality:
                    raise ConfigurationError(
                        f"user {user_id!r}: metric {metric.value} requires "
                        f"a {modality.value} source")
            metrics.append(metric)

        avatar = (load_avatar_config(entry["avatar"]) if "avatar" in entry
                  else default_avatar_config(user_id))
        normalizers = {}
        for m, spec in (entry.get("normalizers") or {}).items():
            try:
                metric = MetricId(m)
            except ValueError as exc:
                raise ConfigurationError(
                    f"{path}.normalizers: unknown metric {m!r}") from exc
            normalizers[metric] = _load_normalizer(
                spec, f"{path}.normalizers.{m}")
        users.append(UserConfig(user_id, sources, tuple(metrics), avatar,
                                normalizers))
    return SessionConfig(tuple(users), protocol, duration)


def load_session_file(path) -> SessionConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: expected a mapping document")
    return load_session(doc)


# -- clocks ------------------------------------------------------------------


class SimulatedClock:
    """Session time that jumps instantly; makes 900 s runs take milliseconds."""

    def __init__(self, start: float = 0.0):
        self._t = start

    def now(self) -> float:
        return self._t

    def sleep_until(self, t: float):
        if t > self._t:
            self._t = t


class WallClock:
    """Real time, zeroed at construction; pause() freezes session time."""

    def __init__(self):
        import time

        self._time = time
        self._t0 = time.monotonic()
        self._paused_at: float | None = None

    def now(self) -> float:
        base = (self._paused_at if self._paused_at is not None
                else self._time.monotonic())
        return base - self._t0

    def sleep_until(self, t: float):
        delay = t - self.now()
        if delay > 0:
            self._time.sleep(delay)

    def pause(self):
        if self._paused_at is None:
            self._paused_at = self._time.monotonic()

    def resume(self):
        if self._paused_at is not None:
            self._t0 += self._time.monotonic() - self._paused_at
            self._paused_at = None


# -- events ------------------------------------------------------------------


@dataclass(frozen=True)
class SessionEvent:
    t: float
    kind: str
    user_id: str | None
    payload: dict

    def to_json(self) -> str:
        doc = {"t": self.t, "kind": self.kind}
        if self.user_id is not None:
            doc["user_id"] = self.user_id
        doc["payload"] = self.payload
        return json.dumps(doc, sort_keys=True, separators=(",", ":"),
                          allow_nan=False)


def _metric_event(mv: MetricValue, user_id: str | None) -> SessionEvent:
    return SessionEvent(float(mv.t), "metric", user_id, {
        "metric_id": mv.metric_id.value,
        "raw": float(mv.raw),
        "normalized": float(mv.normalized),
        "visibility_level": int(mv.visibility_level),
    })


def _render_event(frame, user_id: str | None, avatar_id: str) -> SessionEvent:
    items = [{
        "anchor": i.anchor_id,
        "sprite": i.sprite_ref,
        "sx": float(i.transform.scale_x),
        "sy": float(i.transform.scale_y),
        "rot": float(i.transform.rotation),
        "tx": float(i.transform.translate_x),
        "ty": float(i.transform.translate_y),
        "stale": bool(i.stale),
    } for i in frame.items]
    return SessionEvent(float(frame.t), "render", user_id,
                        {"avatar_id": avatar_id, "items": items})


class _EventBuffer:
    """Reorder buffer: holds events briefly so late-stamped values merge in
    timestamp order, then releases them sorted by (t, user_id, kind)."""

    def __init__(self, holdback_s: float):
        self._hold = holdback_s
        self._pending: list[tuple[tuple, SessionEvent]] = []
        self._seq = 0

    def push(self, ev: SessionEvent):
        key = (ev.t, ev.user_id or "", ev.kind, self._seq)
        self._seq += 1
        self._pending.append((key, ev))

    def release(self, now: float) -> list[SessionEvent]:
        cut = now - self._hold
        due = sorted(k for k, _ in self._pending if k[0] <= cut)
        if not due:
            return []
        by_key = dict(self._pending)
        self._pending = [(k, e) for k, e in self._pending if k[0] > cut]
        return [by_key[k] for k in due]

    def drain(self) -> list[SessionEvent]:
        out = [e for _, e in sorted(self._pending)]
        self._pending = []
        return out


# -- data feeds --------------------------------------------------------------


class _ArrayFeed:
    """Pre-materialized samples (generator output or a recording)."""

    def __init__(self, meta: StreamMeta, ts: np.ndarray, xs: np.ndarray):
        self.meta = meta
        self._ts = np.asarray(ts, dtype=np.float64)
        self._xs = np.asarray(xs, dtype=np.float32)
        self._i = 0

    def take(self, until_t: float) -> list[SampleChunk]:
        j = int(np.searchsorted(self._ts, until_t, side="right"))
        if j <= self._i:
            return []
        chunk = SampleChunk(self._ts[self._i:j], self._xs[self._i:j])
        self._i = j
        return [chunk]

    def close(self):
        pass


class _InletFeed:
    """A live subscription; take() drains whatever has arrived."""

    def __init__(self, inlet):
        self.meta = inlet.meta
        self._inlet = inlet

    def take(self, until_t: float) -> list[SampleChunk]:
        out = []
        while True:
            chunk = self._inlet.pull_chunk(max_wait=0.0)
            if chunk is None:
                return out
            out.append(chunk)

    def close(self):
        self._inlet.close()


def _materialize(source: GeneratorSource, user_id: str,
                 duration_s: float) -> tuple[StreamMeta, np.ndarray, np.ndarray]:
    kind, params, seed = source.kind, dict(source.params), source.seed
    if kind == "ecg":
        spec: EcgSpec = params["spec"]
        chunks, _beats = gen_ecg(spec, duration_s, seed=seed)
        meta = StreamMeta(f"{user_id}/ecg", Modality.ECG, ("ECG",), spec.fs,
                          "uV", f"session-{user_id}-ecg")
    elif kind == "respiration":
        chunks, _phase = gen_respiration(
            params["period_s"], params["fs"], duration_s,
            amplitude=params.get("amplitude", 1.0),
            jitter=params.get("jitter", 0.0), seed=seed)
        meta = StreamMeta(f"{user_id}/resp", Modality.RESP, ("belt",),
                          params["fs"], "au", f"session-{user_id}-resp")
    elif kind == "eeg":
        eeg_spec: EegSpec = params["spec"]
        chunks, _truth = gen_eeg(eeg_spec, duration_s, seed=seed)
        meta = StreamMeta(f"{user_id}/eeg", Modality.EEG,
                          eeg_spec.channel_labels, eeg_spec.fs, "uV",
                          f"session-{user_id}-eeg")
    else:
        chunks = gen_eda(params["tonic_uS"], params["events"], params["fs"],
                         duration_s, noise_uS=params["noise_uS"], seed=seed)
        meta = StreamMeta(f"{user_id}/eda", Modality.EDA, ("EDA",),
                          params["fs"], "uS", f"session-{user_id}-eda")
    ts, xs = concat_chunks(chunks)
    return meta, ts, xs


# -- per-user pipeline -------------------------------------------------------

_EEG_METRICS = frozenset({MetricId.VIGILANCE, MetricId.WORKLOAD,
                          MetricId.VALENCE, MetricId.MEDITATION})


class _UserRuntime:
    """One user's feeds, extractors and avatar; stepped by the session."""

    def __init__(self, user: UserConfig, duration_s: float,
                 resolve, hr_sink=None):
        self.user = user
        self.dead = False
        self.latest: dict[MetricId, MetricValue] = {}
        self._hr_sink = hr_sink
        self.feeds: dict[Modality, object] = {}
        for source in user.sources:
            if isinstance(source, GeneratorSource):
                meta, ts, xs = _materialize(source, user.user_id, duration_s)
                self.feeds[source.modality] = _ArrayFeed(meta, ts, xs)
            elif isinstance(source, RecordingSource):
                meta, ts, xs = read_recording(source.path)
                self.feeds[source.modality] = _ArrayFeed(meta, ts, xs)
            else:
                self.feeds[source.modality] = _InletFeed(resolve(source))

        norm = user.normalizers
        metrics = set(user.metrics)
        self._r_peaks = None
        self._hr = None
        if MetricId.HEART_RATE in metrics or MetricId.CARDIAC_COHERENCE in metrics:
            fs = self.feeds[Modality.ECG].meta.nominal_rate
            self._r_peaks = RPeakDetector(fs)
            self._hr = HeartRateEstimator(norm.get(MetricId.HEART_RATE))
        self._resp = None
        if MetricId.RESPIRATION in metrics or MetricId.CARDIAC_COHERENCE in metrics:
            fs = self.feeds[Modality.RESP].meta.nominal_rate
            self._resp = RespirationExtractor(fs)
            self._next_breath: float | None = None
        self._coherence = None
        if MetricId.CARDIAC_COHERENCE in metrics:
            self._coherence = CardiacCoherenceTracker()
        self._arousal = None
        if MetricId.AROUSAL in metrics:
            fs = self.feeds[Modality.EDA].meta.nominal_rate
            self._arousal = ArousalExtractor(fs, norm.get(MetricId.AROUSAL))
        self._eeg = None
        self._blinks = None
        if metrics & _EEG_METRICS:
            feed = self.feeds[Modality.EEG]
            if tuple(feed.meta.channel_labels) != DEFAULT_LAYOUT.labels:
                raise ConfigurationError(
                    f"user {user.user_id!r}: EEG source channels "
                    f"{feed.meta.channel_labels} do not match the expected "
                    f"montage {DEFAULT_LAYOUT.labels}")
            fs = feed.meta.nominal_rate
            self._eeg = EegMetricsPipeline(
                fs, normalizers={m: norm[m] for m in norm if m in _EEG_METRICS})
            self._blinks = BlinkDetector(fs)
        self._wanted = metrics
        self.mapper = AvatarMapper(user.avatar)

    def close(self):
        for feed in self.feeds.values():
            feed.close()

    def step(self, t1: float, msc_cut: float | None = None) -> list[SessionEvent]:
        """Advance to session time t1; returns this user's new events."""
        if self.dead:
            return []
        uid = self.user.user_id
        events: list[SessionEvent] = []
        beat_triggers: list[tuple[MetricId, float]] = []
        try:
            for modality, feed in self.feeds.items():
                for chunk in feed.take(t1):
                    events.extend(self._ingest(modality, chunk, beat_triggers))
            if self._coherence is not None:
                if msc_cut is not None and msc_cut > 0:
                    # a stalled input must not back-fill emissions older
                    # than the reorder horizon once it recovers
                    self._coherence.skip_to(msc_cut)
                for mv in self._coherence.advance(t1):
                    self._saw(mv)
                    events.append(_metric_event(mv, uid))
        except Exception as exc:  # isolation: one user's failure stays theirs
            self.dead = True
            events.append(SessionEvent(t1, "degraded", uid,
                                       {"reason": str(exc) or repr(exc)}))
        frame = self.mapper.tick(t1, self.latest, beat_triggers)
        events.append(_render_event(frame, uid, self.user.avatar.avatar_id))
        return events

    def _saw(self, mv: MetricValue):
        if mv.metric_id in self._wanted:
            self.latest[mv.metric_id] = mv

    def _ingest(self, modality: Modality, chunk: SampleChunk,
                beat_triggers: list) -> list[SessionEvent]:
        uid = self.user.user_id
        events: list[SessionEvent] = []
        if modality is Modality.ECG and self._r_peaks is not None:
            for beat in self._r_peaks.process(chunk):
                events.append(SessionEvent(float(beat.t), "beat", uid, {}))
                beat_triggers.append((MetricId.HEART_RATE, beat.t))
                mv = self._hr.add(beat)
                if mv is None:
                    continue
                if self._coherence is not None:
                    self._coherence.add_heart_rate(mv)
                if self._hr_sink is not None:
                    self._hr_sink(mv)
                if MetricId.HEART_RATE in self._wanted:
                    self._saw(mv)
                    events.append(_metric_event(mv, uid))
        elif modality is Modality.RESP and self._resp is not None:
            phases, mvs = self._resp.process(chunk)
            for bp, mv in zip(phases, mvs):
                if self._next_breath is not None and bp.t < self._next_breath:
                    continue
                self._next_breath = (math.floor(bp.t / 0.25) + 1) * 0.25
                if self._coherence is not None and not bp.stale:
                    self._coherence.add_breath(bp.t, bp.inflation)
                if MetricId.RESPIRATION in self._wanted:
                    self._saw(mv)
                    events.append(_metric_event(mv, uid))
        elif modality is Modality.EDA and self._arousal is not None:
            for mv in self._arousal.process(chunk):
                self._saw(mv)
                events.append(_metric_event(mv, uid))
        elif modality is Modality.EEG and self._eeg is not None:
            for mv in self._eeg.process(chunk):
                if mv.metric_id in self._wanted:
                    self._saw(mv)
                    events.append(_metric_event(mv, uid))
            for blink in self._blinks.process(chunk):
                events.append(SessionEvent(
                    float(blink.t), "blink", uid,
                    {"peak_amplitude": float(blink.peak_amplitude)}))
        return events


def _shared_avatar() -> AvatarConfig:
    bloom = Timeline("bloom", (
        Keyframe(0.0, Transform(scale_x=0.1, scale_y=0.1)),
        Keyframe(1.0, Transform(scale_x=1.0, scale_y=1.0)),
    ), sprite_ref="flower")
    return AvatarConfig("shared", (Anchor("shared", 0.5, 0.5, 0.3),), (bloom,), (
        Binding(MetricId.PAIR_SYNCHRONY, "shared", "bloom",
                BindingMode.CONTINUOUS),))


def run_session(config: SessionConfig, clock=None, *,
                step_s: float = STEP_S,
                resolve_timeout: float = 2.0,
                control=None) -> Iterator[SessionEvent]:
    """Run the session to completion, yielding ordered events.

    The defining property: with a SimulatedClock and generator or recording
    sources this is fully deterministic, so two runs of the same config
    produce byte-identical event logs. Live (stream) sources and WallClock
    give the same event shapes in real time.

    control, if given, is called before every step as
    ``control(t, mappers)`` with the per-user avatar mappers (keyed by
    user id); it may rebind or upload timelines between frames, block to
    hold the session, and returns False to end the run early (the log
    still closes with a session_end event).
    """
    if clock is None:
        clock = WallClock()
    protocol = config.protocol
    total = config.duration_s

    def resolve(source: StreamSource):
        from .transport import Inlet, resolve_streams

        found = resolve_streams(source.name, timeout=resolve_timeout)
        if not found:
            raise ConfigurationError(
                f"stream {source.name!r} not found on the network")
        return Inlet(found[0])

    has_eda = any(s.modality is Modality.EDA for u in config.users
                  for s in u.sources)
    has_msc = any(MetricId.CARDIAC_COHERENCE in u.metrics
                  for u in config.users)

    pair = None
    pair_users: list[str] = []
    if (protocol is not None
            and any(p.phase_id is PhaseId.SYNC for p in protocol.phases)):
        with_ecg = [u.user_id for u in config.users
                    if any(s.modality is Modality.ECG for s in u.sources)]
        if len(with_ecg) >= 2:
            pair = PairSynchronyTracker()
            pair_users = with_ecg[:2]
            has_msc = True

    holdback = HOLDBACK_S
    if has_eda:
        holdback = max(holdback, HOLDBACK_EDA_S)
    if has_msc:
        holdback = max(holdback, HOLDBACK_MSC_S)
    buffer = _EventBuffer(holdback)
    msc_margin = HOLDBACK_MSC_S - 0.25

    def hr_sink_for(user_id: str):
        if pair is None or user_id not in pair_users:
            return None
        add = pair.add_hr_a if user_id == pair_users[0] else pair.add_hr_b
        return lambda mv: add(mv.t, mv.raw)

    users = [
        _UserRuntime(u, total, resolve, hr_sink=hr_sink_for(u.user_id))
        for u in config.users
    ]
    mappers = {u.user.user_id: u.mapper for u in users}
    shared = AvatarMapper(_shared_avatar()) if pair is not None else None
    shared_latest: dict[MetricId, MetricValue] = {}

    try:
        yield SessionEvent(0.0, "session_start", None, {
            "users": [u.user_id for u in config.users],
            "duration_s": float(total),
            "protocol": None if protocol is None else {
                "phases": [{"phase": p.phase_id.value,
                            "duration_s": float(p.duration_s)}
                           for p in protocol.phases],
                "gauge_half_cycle_s": float(protocol.gauge_half_cycle_s),
            },
        })

        boundaries = []
        sync_starts = []
        if protocol is not None:
            start = 0.0
            for phase in protocol.phases:
                boundaries.append((start, phase))
                if phase.phase_id is PhaseId.SYNC:
                    sync_starts.append(start)
                start += phase.duration_s
        next_boundary = 0
        in_sync = False
        next_gauge = 0.0

        t = 0.0
        while t < total:
            t1 = min(t + step_s, total)
            if control is not None and not control(t, mappers):
                break
            clock.sleep_until(t1)

            while next_boundary < len(boundaries) and boundaries[next_boundary][0] <= t1:
                b_t, phase = boundaries[next_boundary]
                buffer.push(SessionEvent(b_t, "phase", None, {
                    "phase_id": phase.phase_id.value,
                    "index": next_boundary,
                    "duration_s": float(phase.duration_s),
                }))
                in_sync = phase.phase_id is PhaseId.SYNC
                if in_sync and pair is not None:
                    pair.skip_to(b_t)
                next_boundary += 1

            if protocol is not None:
                while next_gauge <= t1:
                    g = gauge_level(protocol, next_gauge)
                    if g is not None:
                        buffer.push(SessionEvent(g.t, "gauge", None, {
                            "level": float(g.level),
                            "direction": g.direction.value,
                        }))
                    next_gauge = round(next_gauge / GAUGE_EVERY_S + 1) * GAUGE_EVERY_S

            for runtime in users:
                for ev in runtime.step(t1, msc_cut=t1 - msc_margin):
                    buffer.push(ev)

            if pair is not None and in_sync:
                if t1 - msc_margin > 0:
                    pair.skip_to(t1 - msc_margin)
                for mv in pair.advance(t1):
                    shared_latest[MetricId.PAIR_SYNCHRONY] = mv
                    buffer.push(_metric_event(mv, None))
            if shared is not None:
                frame = shared.tick(t1, shared_latest)
                buffer.push(_render_event(frame, None, "shared"))

            yield from buffer.release(t1)
            t = t1

        yield from buffer.drain()
        yield SessionEvent(float(t), "session_end", None, {})
    finally:
        for runtime in users:
            runtime.close()


def write_event_log(events: Iterable[SessionEvent], fh) -> int:
    """Write events as NDJSON lines; returns the line count."""
    n = 0
    for ev in events:
        fh.write(ev.to_json() + "\n")
        n += 1
    return n
