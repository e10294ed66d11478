"""Keyframe timelines, metric-to-anchor bindings, and per-frame rendering.

The customization layer: a recorded gesture becomes a Timeline (ordered
keyframes of sprite transforms), a Binding attaches a metric to an anchor
point through a timeline, and AvatarMapper.tick() turns the latest metric
values into concrete render instructions. CONTINUOUS bindings map the
normalized metric straight onto timeline phase (smoothed by a 200 ms EMA
so 1 Hz metrics do not look stepped); PERIODIC bindings play the timeline
once per trigger event, e.g. a heart sprite pulsing on every beat.

All time is supplied by the caller, so replaying a logged input sequence
through tick() reproduces byte-identical frames.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigurationError, ContractError
from .types import MetricId, MetricValue

#: Recorded gestures are decimated to at most this many keyframes.
MAX_KEYFRAMES = 64
#: Time constant of the smoothing EMA applied to CONTINUOUS bindings.
EMA_TAU_S = 0.2
#: A binding whose metric has not updated for this long is flagged stale.
STALE_AFTER_S = 5.0
#: Stale anchors ease back to phase 0 over this long.
EASE_S = 1.0

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Transform:
    """Sprite placement: anisotropic scale, rotation (rad), translation.

    Translation is in normalized avatar units (the anchor's own frame).
    """

    scale_x: float = 1.0
    scale_y: float = 1.0
    rotation: float = 0.0
    translate_x: float = 0.0
    translate_y: float = 0.0

    def __post_init__(self):
        if not (self.scale_x > 0.0 and self.scale_y > 0.0):
            raise ContractError(
                f"scale must be positive, got ({self.scale_x}, {self.scale_y})")


IDENTITY = Transform()


@dataclass(frozen=True)
class Keyframe:
    phase: float
    transform: Transform


@dataclass(frozen=True)
class Timeline:
    """Keyframed animation over phase [0, 1], driving one sprite."""

    id: str
    keyframes: tuple[Keyframe, ...]
    sprite_ref: str

    def __post_init__(self):
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        if len(self.keyframes) < 2:
            raise ContractError(
                f"timeline {self.id!r} needs at least 2 keyframes")
        phases = [k.phase for k in self.keyframes]
        if phases[0] != 0.0 or phases[-1] != 1.0:
            raise ContractError(
                f"timeline {self.id!r} keyframes must span phase 0 to 1")
        if any(b <= a for a, b in zip(phases, phases[1:])):
            raise ContractError(
                f"timeline {self.id!r} keyframe phases must be strictly increasing")


def record_timeline(samples: Iterable[tuple[float, Transform]], *,
                    timeline_id: str = "recorded", sprite_ref: str = "sprite",
                    max_keyframes: int = MAX_KEYFRAMES) -> Timeline:
    """Turn a recorded gesture into a Timeline.

    samples are (t, Transform) pairs captured while the user animated the
    sprite. Times are rescaled so the gesture spans phase 0..1; gestures
    longer than max_keyframes samples are decimated by uniform index
    selection, always keeping both endpoints exactly.
    """
    pairs = [(float(t), tr) for t, tr in samples]
    if len(pairs) < 2:
        raise ContractError(
            f"need at least 2 gesture samples, got {len(pairs)}")
    ts = np.array([t for t, _ in pairs])
    if np.any(np.diff(ts) <= 0):
        raise ContractError("gesture sample times must be strictly increasing")
    if len(pairs) > max_keyframes:
        idx = np.round(np.linspace(0, len(pairs) - 1, max_keyframes)).astype(int)
    else:
        idx = np.arange(len(pairs))
    span = ts[-1] - ts[0]
    keyframes = tuple(
        Keyframe(float((ts[i] - ts[0]) / span), pairs[i][1]) for i in idx)
    return Timeline(timeline_id, keyframes, sprite_ref)


def _lerp_angle(a: float, b: float, u: float) -> float:
    # Interpolate on the shortest arc so 3 rad -> -3 rad crosses pi, not 0.
    delta = (b - a + math.pi) % _TWO_PI - math.pi
    return a + u * delta


def evaluate_timeline(timeline: Timeline, phase: float) -> Transform:
    """Piecewise-linear transform at the given phase (clamped to [0, 1]).

    Exact at keyframes; rotation interpolates along the shortest arc.
    """
    p = min(max(float(phase), 0.0), 1.0)
    kfs = timeline.keyframes
    lo = kfs[0]
    for kf in kfs:
        if kf.phase == p:
            return kf.transform
        if kf.phase > p:
            hi = kf
            break
        lo = kf
    else:  # pragma: no cover - p == 1.0 always hits the exact branch
        return kfs[-1].transform
    u = (p - lo.phase) / (hi.phase - lo.phase)
    a, b = lo.transform, hi.transform
    return Transform(
        scale_x=a.scale_x + u * (b.scale_x - a.scale_x),
        scale_y=a.scale_y + u * (b.scale_y - a.scale_y),
        rotation=_lerp_angle(a.rotation, b.rotation, u),
        translate_x=a.translate_x + u * (b.translate_x - a.translate_x),
        translate_y=a.translate_y + u * (b.translate_y - a.translate_y),
    )


@dataclass(frozen=True)
class Anchor:
    """A named attachment point on the avatar, in normalized [0,1] coords."""

    anchor_id: str
    x: float
    y: float
    size: float


class BindingMode(Enum):
    #: Timeline phase follows the normalized metric value.
    CONTINUOUS = "CONTINUOUS"
    #: One full playback (duration_s long) per trigger event.
    PERIODIC = "PERIODIC"


@dataclass(frozen=True)
class Binding:
    metric_id: MetricId
    anchor_id: str
    timeline_id: str
    mode: BindingMode
    duration_s: float | None = None

    def __post_init__(self):
        if self.mode is BindingMode.PERIODIC:
            if self.duration_s is None or not self.duration_s > 0.0:
                raise ContractError(
                    f"PERIODIC binding on {self.anchor_id!r} needs duration_s > 0")


@dataclass(frozen=True)
class AvatarConfig:
    """One avatar: its anchor points, timeline library, and live bindings.

    version counts bind() mutations; it is runtime bookkeeping and takes
    no part in equality or serialization.
    """

    avatar_id: str
    anchors: tuple[Anchor, ...]
    timelines: tuple[Timeline, ...]
    bindings: tuple[Binding, ...] = ()
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "timelines", tuple(self.timelines))
        object.__setattr__(self, "bindings", tuple(self.bindings))
        anchor_ids = [a.anchor_id for a in self.anchors]
        if len(set(anchor_ids)) != len(anchor_ids):
            raise ContractError(f"duplicate anchor ids in {self.avatar_id!r}")
        timeline_ids = [t.id for t in self.timelines]
        if len(set(timeline_ids)) != len(timeline_ids):
            raise ContractError(f"duplicate timeline ids in {self.avatar_id!r}")
        bound = set()
        for b in self.bindings:
            if b.anchor_id not in anchor_ids:
                raise ContractError(
                    f"binding references unknown anchor {b.anchor_id!r}")
            if b.timeline_id not in timeline_ids:
                raise ContractError(
                    f"binding references unknown timeline {b.timeline_id!r}")
            if b.anchor_id in bound:
                raise ContractError(
                    f"anchor {b.anchor_id!r} has more than one binding")
            bound.add(b.anchor_id)

    def timeline(self, timeline_id: str) -> Timeline:
        for t in self.timelines:
            if t.id == timeline_id:
                return t
        raise KeyError(timeline_id)

    def anchor(self, anchor_id: str) -> Anchor:
        for a in self.anchors:
            if a.anchor_id == anchor_id:
                return a
        raise KeyError(anchor_id)


def bind(config: AvatarConfig, metric_id: MetricId | str, anchor_id: str,
         timeline_id: str, mode: BindingMode | str,
         duration_s: float | None = None) -> AvatarConfig:
    """Attach a metric to an anchor, replacing any previous binding there."""
    if not any(a.anchor_id == anchor_id for a in config.anchors):
        raise ConfigurationError(f"unknown anchor {anchor_id!r}")
    if not any(t.id == timeline_id for t in config.timelines):
        raise ConfigurationError(f"unknown timeline {timeline_id!r}")
    try:
        metric = MetricId(metric_id) if not isinstance(metric_id, MetricId) else metric_id
    except ValueError as exc:
        raise ConfigurationError(f"unknown metric {metric_id!r}") from exc
    try:
        mode = BindingMode(mode) if not isinstance(mode, BindingMode) else mode
    except ValueError as exc:
        raise ConfigurationError(f"unknown binding mode {mode!r}") from exc
    try:
        new = Binding(metric, anchor_id, timeline_id, mode, duration_s)
    except ContractError as exc:
        raise ConfigurationError(str(exc)) from exc
    kept = tuple(b for b in config.bindings if b.anchor_id != anchor_id)
    return replace(config, bindings=kept + (new,), version=config.version + 1)


def add_timeline(config: AvatarConfig, timeline: Timeline) -> AvatarConfig:
    """Add a timeline to the library, replacing any existing one of that id."""
    kept = tuple(t for t in config.timelines if t.id != timeline.id)
    return replace(config, timelines=kept + (timeline,),
                   version=config.version + 1)


# -- JSON persistence --------------------------------------------------------
#
# Schema: {avatar_id, anchors:[{id,x,y,size}],
#          timelines:[{id, sprite, keys:[{phase,sx,sy,rot,tx,ty}]}],
#          bindings:[{metric, anchor, timeline, mode, duration_s?}]}
# Unknown fields are rejected with the offending key path so a typo in a
# hand-edited config fails loudly instead of being silently ignored.


def _check_keys(obj, path: str, required: frozenset, optional: frozenset = frozenset()):
    where = path or "config"
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{where}: expected a JSON object")
    for key in obj:
        if key not in required and key not in optional:
            full = f"{path}.{key}" if path else key
            raise ConfigurationError(f"unknown field {full!r}")
    for key in sorted(required):
        if key not in obj:
            raise ConfigurationError(f"{where}: missing field {key!r}")


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: expected a number")
    return float(value)


def _text(value, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigurationError(f"{path}: expected a string")
    return value


def _items(value, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigurationError(f"{path}: expected an array")
    return value


def config_to_dict(config: AvatarConfig) -> dict:
    doc = {
        "avatar_id": config.avatar_id,
        "anchors": [
            {"id": a.anchor_id, "x": a.x, "y": a.y, "size": a.size}
            for a in config.anchors
        ],
        "timelines": [
            {
                "id": t.id,
                "sprite": t.sprite_ref,
                "keys": [
                    {"phase": k.phase, "sx": k.transform.scale_x,
                     "sy": k.transform.scale_y, "rot": k.transform.rotation,
                     "tx": k.transform.translate_x, "ty": k.transform.translate_y}
                    for k in t.keyframes
                ],
            }
            for t in config.timelines
        ],
        "bindings": [],
    }
    for b in config.bindings:
        entry = {"metric": b.metric_id.value, "anchor": b.anchor_id,
                 "timeline": b.timeline_id, "mode": b.mode.value}
        if b.duration_s is not None:
            entry["duration_s"] = b.duration_s
        doc["bindings"].append(entry)
    return doc


def timeline_from_dict(entry, path: str = "timeline") -> Timeline:
    p = path
    _check_keys(entry, p, frozenset({"id", "sprite", "keys"}))
    keys = []
    for j, kf in enumerate(_items(entry["keys"], f"{p}.keys")):
        kp = f"{p}.keys[{j}]"
        _check_keys(kf, kp, frozenset({"phase", "sx", "sy", "rot", "tx", "ty"}))
        try:
            transform = Transform(
                _num(kf["sx"], f"{kp}.sx"), _num(kf["sy"], f"{kp}.sy"),
                _num(kf["rot"], f"{kp}.rot"), _num(kf["tx"], f"{kp}.tx"),
                _num(kf["ty"], f"{kp}.ty"))
        except ContractError as exc:
            raise ConfigurationError(f"{kp}: {exc}") from exc
        keys.append(Keyframe(_num(kf["phase"], f"{kp}.phase"), transform))
    try:
        return Timeline(_text(entry["id"], f"{p}.id"), tuple(keys),
                        _text(entry["sprite"], f"{p}.sprite"))
    except ContractError as exc:
        raise ConfigurationError(f"{p}: {exc}") from exc


def config_from_dict(doc) -> AvatarConfig:
    _check_keys(doc, "", frozenset({"avatar_id", "anchors", "timelines", "bindings"}))
    avatar_id = _text(doc["avatar_id"], "avatar_id")

    anchors = []
    for i, entry in enumerate(_items(doc["anchors"], "anchors")):
        p = f"anchors[{i}]"
        _check_keys(entry, p, frozenset({"id", "x", "y", "size"}))
        anchors.append(Anchor(
            _text(entry["id"], f"{p}.id"), _num(entry["x"], f"{p}.x"),
            _num(entry["y"], f"{p}.y"), _num(entry["size"], f"{p}.size")))

    timelines = []
    for i, entry in enumerate(_items(doc["timelines"], "timelines")):
        timelines.append(timeline_from_dict(entry, f"timelines[{i}]"))

    bindings = []
    for i, entry in enumerate(_items(doc["bindings"], "bindings")):
        p = f"bindings[{i}]"
        _check_keys(entry, p, frozenset({"metric", "anchor", "timeline", "mode"}),
                    frozenset({"duration_s"}))
        try:
            metric = MetricId(_text(entry["metric"], f"{p}.metric"))
        except ValueError as exc:
            raise ConfigurationError(
                f"{p}.metric: unknown metric {entry['metric']!r}") from exc
        try:
            mode = BindingMode(_text(entry["mode"], f"{p}.mode"))
        except ValueError as exc:
            raise ConfigurationError(
                f"{p}.mode: unknown mode {entry['mode']!r}") from exc
        duration = None
        if "duration_s" in entry:
            duration = _num(entry["duration_s"], f"{p}.duration_s")
        try:
            bindings.append(Binding(
                metric, _text(entry["anchor"], f"{p}.anchor"),
                _text(entry["timeline"], f"{p}.timeline"), mode, duration))
        except ContractError as exc:
            raise ConfigurationError(f"{p}: {exc}") from exc

    try:
        return AvatarConfig(avatar_id, tuple(anchors), tuple(timelines),
                            tuple(bindings))
    except ContractError as exc:
        raise ConfigurationError(str(exc)) from exc


def config_to_json(config: AvatarConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2) + "\n"


def config_from_json(text: str) -> AvatarConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}") from exc
    return config_from_dict(doc)


def load_avatar_config(path) -> AvatarConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(fh.read())


def save_avatar_config(config: AvatarConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_json(config))


def default_avatar_config(avatar_id: str = "tobe") -> AvatarConfig:
    """A ready-to-run avatar: heart pulse, breathing lungs, blooming flower.

    Anchor layout is a front-facing silhouette in normalized coordinates
    (origin top-left). Serves as the starting point the dashboard's
    drag-and-drop then customizes.
    """
    pulse = Timeline("pulse", (
        Keyframe(0.0, Transform()),
        Keyframe(0.35, Transform(scale_x=1.35, scale_y=1.35)),
        Keyframe(1.0, Transform()),
    ), sprite_ref="heart")
    inflate = Timeline("inflate", (
        Keyframe(0.0, Transform()),
        Keyframe(1.0, Transform(scale_x=1.5, scale_y=1.5)),
    ), sprite_ref="lungs")
    bloom = Timeline("bloom", (
        Keyframe(0.0, Transform(scale_x=0.1, scale_y=0.1)),
        Keyframe(1.0, Transform(scale_x=1.0, scale_y=1.0)),
    ), sprite_ref="flower")
    # A full revolution needs intermediate keyframes: shortest-arc
    # interpolation would treat 0 -> 2*pi as no motion at all.
    spin = Timeline("spin", (
        Keyframe(0.0, Transform(rotation=0.0)),
        Keyframe(1.0 / 3.0, Transform(rotation=_TWO_PI / 3.0)),
        Keyframe(2.0 / 3.0, Transform(rotation=2.0 * _TWO_PI / 3.0)),
        Keyframe(1.0, Transform(rotation=_TWO_PI)),
    ), sprite_ref="cog")
    anchors = (
        Anchor("head", 0.5, 0.12, 0.18),
        Anchor("forehead", 0.5, 0.20, 0.14),
        Anchor("eyes", 0.5, 0.26, 0.10),
        Anchor("chest", 0.5, 0.48, 0.16),
        Anchor("torso", 0.5, 0.62, 0.22),
    )
    bindings = (
        Binding(MetricId.HEART_RATE, "chest", "pulse", BindingMode.PERIODIC, 0.6),
        Binding(MetricId.RESPIRATION, "torso", "inflate", BindingMode.CONTINUOUS),
        Binding(MetricId.CARDIAC_COHERENCE, "forehead", "bloom", BindingMode.CONTINUOUS),
        Binding(MetricId.WORKLOAD, "head", "spin", BindingMode.CONTINUOUS),
    )
    return AvatarConfig(avatar_id, anchors, (pulse, inflate, bloom, spin),
                        bindings)


# -- per-frame rendering -----------------------------------------------------


@dataclass(frozen=True)
class RenderInstruction:
    anchor_id: str
    sprite_ref: str
    transform: Transform
    stale: bool = False


@dataclass(frozen=True)
class RenderFrame:
    t: float
    items: tuple[RenderInstruction, ...]


class _AnchorState:
    """Playback bookkeeping for one bound anchor."""

    __slots__ = ("ema", "target", "seen_t", "trigger_t", "stale_at", "ease_from")

    def __init__(self, epoch: float):
        self.ema: float | None = None
        self.target: float | None = None
        self.seen_t = epoch  # treat session start as the last update
        self.trigger_t: float | None = None
        self.stale_at: float | None = None
        self.ease_from = 0.0


class AvatarMapper:
    """Owns one avatar's config and playback state; tick() renders it.

    tick() must be called from a single thread with a monotone `now`.
    Nothing here reads the wall clock, so the mapper is deterministic:
    the same sequence of (now, metrics, events) yields identical frames.
    """

    def __init__(self, config: AvatarConfig, *, ema_tau_s: float = EMA_TAU_S,
                 stale_after_s: float = STALE_AFTER_S, ease_s: float = EASE_S):
        self.config = config
        self._tau = float(ema_tau_s)
        self._stale_after = float(stale_after_s)
        self._ease = float(ease_s)
        self._states: dict[str, _AnchorState] = {}
        self._last_tick: float | None = None
        self._epoch: float | None = None

    def bind(self, metric_id, anchor_id, timeline_id, mode,
             duration_s: float | None = None) -> AvatarConfig:
        """Rebind an anchor; its playback state restarts from scratch."""
        self.config = bind(self.config, metric_id, anchor_id, timeline_id,
                           mode, duration_s)
        self._states.pop(anchor_id, None)
        return self.config

    def add_timeline(self, timeline: Timeline) -> AvatarConfig:
        """Extend (or replace in) the timeline library in place."""
        self.config = add_timeline(self.config, timeline)
        return self.config

    def reset(self):
        """Drop all playback state; the next tick starts a fresh epoch."""
        self._states.clear()
        self._last_tick = None
        self._epoch = None

    def tick(self, now: float,
             metrics: Mapping[MetricId, MetricValue] | None = None,
             events: Iterable[tuple[MetricId, float]] = ()) -> RenderFrame:
        """Render instructions for every bound anchor at session time `now`.

        metrics carries the latest MetricValue per metric; events carries
        (metric_id, t) triggers (e.g. one entry per detected beat) that
        restart PERIODIC playback.
        """
        if self._epoch is None:
            self._epoch = now
        dt = 0.0 if self._last_tick is None else max(0.0, now - self._last_tick)
        self._last_tick = now
        metrics = metrics or {}
        triggers: dict[MetricId, float] = {}
        for metric_id, t in events:
            prev = triggers.get(metric_id)
            triggers[metric_id] = t if prev is None else max(prev, t)

        alpha = 1.0 - math.exp(-dt / self._tau) if dt > 0.0 else 0.0
        items = []
        for binding in sorted(self.config.bindings, key=lambda b: b.anchor_id):
            timeline = self.config.timeline(binding.timeline_id)
            st = self._states.get(binding.anchor_id)
            if st is None:
                st = self._states[binding.anchor_id] = _AnchorState(self._epoch)

            value = metrics.get(binding.metric_id)
            if value is not None:
                st.target = float(value.normalized)
                st.seen_t = max(st.seen_t, value.t)
            if binding.metric_id in triggers:
                st.trigger_t = triggers[binding.metric_id]
                st.seen_t = max(st.seen_t, st.trigger_t)

            stale = (now - st.seen_t) > self._stale_after
            if stale and st.stale_at is None:
                st.stale_at = st.seen_t + self._stale_after
                st.ease_from = self._live_phase(binding, st, now, alpha)
            elif not stale:
                st.stale_at = None

            if stale:
                frac = (now - st.stale_at) / self._ease
                phase = st.ease_from * max(0.0, 1.0 - frac)
                st.ema = phase  # recovery resumes from the eased position
            else:
                phase = self._live_phase(binding, st, now, alpha)

            items.append(RenderInstruction(
                binding.anchor_id, timeline.sprite_ref,
                evaluate_timeline(timeline, phase), stale))
        return RenderFrame(t=now, items=tuple(items))

    def _live_phase(self, binding: Binding, st: _AnchorState, now: float,
                    alpha: float) -> float:
        if binding.mode is BindingMode.CONTINUOUS:
            if st.target is None:
                return 0.0
            if st.ema is None:
                st.ema = st.target
            else:
                st.ema += alpha * (st.target - st.ema)
            return st.ema
        if st.trigger_t is None:
            return 0.0
        elapsed = now - st.trigger_t
        if 0.0 <= elapsed < binding.duration_s:
            return elapsed / binding.duration_s
        return 0.0
