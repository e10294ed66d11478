"""Synthetic physiological signal generators and CSV record/replay.

Every generator is seeded and returns its own ground truth (beat times, breath
phase, blink times) so downstream estimators can be scored against construction
rather than against another estimator. Waveform realism is deliberately
minimal: an ECG is three Gaussian bumps per beat, EEG is band-limited noise.
That is enough to exercise every detector while keeping the math checkable.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.signal

from .dsp import BandSpec, design_bandpass
from .errors import ConfigurationError, ReplayError
from .types import EEG_CHANNELS, Modality, SampleChunk, StreamMeta

BPM_MIN, BPM_MAX = 30.0, 220.0

# Q/R/S Gaussian bump template: (time offset s, amplitude uV, sigma s)
_QRS_TEMPLATE = (
    (-0.030, -150.0, 0.010),
    (0.0, 1000.0, 0.012),
    (0.030, -250.0, 0.010),
)


def _chunk(signal: np.ndarray, fs: float, t0: float, chunk_s: float) -> list[SampleChunk]:
    """Slice a generated array into SampleChunks of roughly chunk_s seconds."""
    if signal.ndim == 1:
        signal = signal[:, np.newaxis]
    n = signal.shape[0]
    step = max(1, int(round(chunk_s * fs)))
    out = []
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        ts = t0 + np.arange(lo, hi) / fs
        out.append(SampleChunk(ts, signal[lo:hi].astype(np.float32)))
    return out


def concat_chunks(chunks: Sequence[SampleChunk]) -> tuple[np.ndarray, np.ndarray]:
    """Stitch a chunk sequence back into (timestamps, samples) arrays."""
    ts = np.concatenate([c.timestamps for c in chunks])
    xs = np.concatenate([c.samples for c in chunks], axis=0)
    return ts, xs


@dataclass(frozen=True)
class EcgSpec:
    """Parameters for the ECG generator.

    bpm_profile is either a constant or a piecewise-linear breakpoint list
    [(t, bpm), ...]; rsa_depth adds a sinusoidal heart-rate modulation of the
    given peak amplitude with rsa_period_s, mimicking respiratory sinus
    arrhythmia (rate up on the inhale).
    """

    fs: float = 250.0
    bpm_profile: float | Sequence[tuple[float, float]] = 60.0
    rsa_depth: float = 0.0
    rsa_period_s: float = 10.0
    noise_uV: float = 0.0

    def __post_init__(self):
        if self.fs <= 0:
            raise ConfigurationError("fs must be > 0")
        bpms = ([self.bpm_profile] if np.isscalar(self.bpm_profile)
                else [b for _, b in self.bpm_profile])
        if not bpms:
            raise ConfigurationError("bpm_profile must not be empty")
        for b in bpms:
            if not BPM_MIN <= b <= BPM_MAX:
                raise ConfigurationError(
                    f"bpm {b:g} outside [{BPM_MIN:g}, {BPM_MAX:g}]")
        if self.rsa_depth < 0:
            raise ConfigurationError("rsa_depth must be >= 0")
        if self.rsa_period_s <= 0:
            raise ConfigurationError("rsa_period_s must be > 0")
        if self.noise_uV < 0:
            raise ConfigurationError("noise_uV must be >= 0")

    def bpm_at(self, t: np.ndarray) -> np.ndarray:
        if np.isscalar(self.bpm_profile):
            return np.full_like(np.asarray(t, dtype=float), float(self.bpm_profile))
        pts = sorted(self.bpm_profile)
        return np.interp(t, [p[0] for p in pts], [p[1] for p in pts])


def gen_ecg(
    spec: EcgSpec,
    duration_s: float,
    *,
    seed: int = 0,
    t0: float = 0.0,
    chunk_s: float = 1.0,
) -> tuple[list[SampleChunk], np.ndarray]:
    """Generate ECG chunks plus ground-truth R-peak times.

    Beat times come from integrating the instantaneous rate (base profile plus
    RSA sinusoid) and marking half-integer crossings of the accumulated beat
    phase, so the template never truncates at t=0 and the inter-beat intervals
    follow the profile exactly.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * spec.fs))
    t = np.arange(n) / spec.fs
    inst_bpm = spec.bpm_at(t)
    if spec.rsa_depth > 0:
        inst_bpm = inst_bpm + spec.rsa_depth * np.sin(
            2 * np.pi * t / spec.rsa_period_s)
    phase = scipy.integrate.cumulative_trapezoid(inst_bpm / 60.0, t, initial=0.0)

    beat_times = []
    k = 0.5
    while k < phase[-1]:
        idx = np.searchsorted(phase, k)
        # linear interpolation between the bracketing samples
        p0, p1 = phase[idx - 1], phase[idx]
        tb = t[idx - 1] + (k - p0) / (p1 - p0) * (t[idx] - t[idx - 1])
        beat_times.append(tb)
        k += 1.0

    x = np.zeros(n)
    for tb in beat_times:
        for off, amp, sigma in _QRS_TEMPLATE:
            lo = max(0, int((tb + off - 5 * sigma) * spec.fs))
            hi = min(n, int((tb + off + 5 * sigma) * spec.fs) + 1)
            seg = t[lo:hi]
            x[lo:hi] += amp * np.exp(-0.5 * ((seg - tb - off) / sigma) ** 2)
    if spec.noise_uV > 0:
        x += rng.normal(0.0, spec.noise_uV, size=n)

    return _chunk(x, spec.fs, t0, chunk_s), t0 + np.asarray(beat_times)


def gen_respiration(
    period_s: float,
    fs: float,
    duration_s: float,
    *,
    amplitude: float = 1.0,
    jitter: float = 0.0,
    seed: int = 0,
    t0: float = 0.0,
    chunk_s: float = 1.0,
) -> tuple[list[SampleChunk], np.ndarray]:
    """Generate a breathing inflation trace plus ground-truth phase.

    Inflation is amplitude * (1 - cos(2*pi*phase)) / 2, so phase 0 is the start
    of an inhale (empty lungs) and phase 0.5 the fully inflated midpoint.
    jitter smoothly modulates the instantaneous breathing frequency by up to
    the given fraction; the returned phase is in cycles (unwrapped).
    """
    if period_s <= 0:
        raise ConfigurationError("period_s must be > 0")
    if amplitude < 0:
        raise ConfigurationError("amplitude must be >= 0")
    if not 0 <= jitter < 1:
        raise ConfigurationError("jitter must be in [0, 1)")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    f_inst = np.full(n, 1.0 / period_s)
    if jitter > 0:
        # low-pass filtered noise, normalized to unit peak-ish scale
        raw = rng.standard_normal(n)
        sos = scipy.signal.butter(2, min(0.05, 0.45 * fs) / (fs / 2), output="sos")
        smooth = scipy.signal.sosfiltfilt(sos, raw)
        smooth /= max(1e-12, np.max(np.abs(smooth)))
        f_inst = f_inst * (1.0 + jitter * smooth)
    phase = scipy.integrate.cumulative_trapezoid(f_inst, t, initial=0.0)
    x = amplitude * (1.0 - np.cos(2 * np.pi * phase)) / 2.0
    return _chunk(x, fs, t0, chunk_s), phase


@dataclass(frozen=True)
class EegComponent:
    """One band-limited noise component: white noise filtered to
    center_hz +/- bandwidth_hz/2 and scaled to RMS amplitude_uV."""

    center_hz: float
    bandwidth_hz: float
    amplitude_uV: float

    def __post_init__(self):
        if self.amplitude_uV < 0:
            raise ConfigurationError("amplitude_uV must be >= 0")
        if self.bandwidth_hz <= 0 or self.center_hz <= self.bandwidth_hz / 2:
            raise ConfigurationError("component band must be positive-frequency")

    @property
    def band(self) -> BandSpec:
        return BandSpec(self.center_hz - self.bandwidth_hz / 2,
                        self.center_hz + self.bandwidth_hz / 2)


@dataclass(frozen=True)
class CouplingSpec:
    """A shared band-limited source mixed into a set of channels.

    Each listed channel receives amplitude_uV * (c*s + sqrt(1-c^2)*n_i) where
    s is common to the set and n_i is per-channel, both unit-RMS noise in
    band; c=1 makes the channels phase-locked copies, c=0 independent.
    """

    channels: tuple[str, ...]
    coefficient: float
    band: BandSpec
    amplitude_uV: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not 0.0 <= self.coefficient <= 1.0:
            raise ConfigurationError("coupling coefficient must be in [0, 1]")
        if self.amplitude_uV < 0:
            raise ConfigurationError("amplitude_uV must be >= 0")


@dataclass(frozen=True)
class EegSpec:
    fs: float = 250.0
    channel_labels: tuple[str, ...] = EEG_CHANNELS
    components: Mapping[str, Sequence[EegComponent]] | Sequence[EegComponent] = ()
    coupling: Sequence[CouplingSpec] = ()
    blink_rate_per_min: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        if self.fs <= 0:
            raise ConfigurationError("fs must be > 0")
        if self.blink_rate_per_min < 0:
            raise ConfigurationError("blink_rate_per_min must be >= 0")
        for comp in self._all_components():
            if comp.band.high_hz >= self.fs / 2:
                raise ConfigurationError(
                    f"component band {comp.band} exceeds Nyquist for fs={self.fs:g}")
        for cpl in self.coupling:
            for label in cpl.channels:
                if label not in self.channel_labels:
                    raise ConfigurationError(f"unknown coupled channel {label!r}")
            if cpl.band.high_hz >= self.fs / 2:
                raise ConfigurationError("coupling band exceeds Nyquist")

    def _all_components(self) -> Iterator[EegComponent]:
        if isinstance(self.components, Mapping):
            for label, comps in self.components.items():
                if label not in self.channel_labels:
                    raise ConfigurationError(f"unknown channel {label!r}")
                yield from comps
        else:
            yield from self.components

    def components_for(self, label: str) -> Sequence[EegComponent]:
        if isinstance(self.components, Mapping):
            return tuple(self.components.get(label, ()))
        return tuple(self.components)


@dataclass
class EegTruth:
    """Ground truth emitted next to the EEG chunks."""

    blink_times: np.ndarray = field(default_factory=lambda: np.empty(0))


_BLINK_CHANNELS = ("FP1", "F8")
BLINK_WIDTH_S = 0.200
BLINK_AMPLITUDE_UV = 80.0


def _band_noise(rng: np.random.Generator, n: int, fs: float, band: BandSpec) -> np.ndarray:
    """Unit-RMS white noise confined to band (zero-phase filtering)."""
    x = scipy.signal.sosfiltfilt(design_bandpass(fs, band), rng.standard_normal(n))
    rms = np.sqrt(np.mean(x**2))
    return x / max(rms, 1e-12)


def gen_eeg(
    spec: EegSpec,
    duration_s: float,
    *,
    seed: int = 0,
    t0: float = 0.0,
    chunk_s: float = 1.0,
) -> tuple[list[SampleChunk], EegTruth]:
    """Generate multichannel EEG chunks plus ground truth.

    Blinks (when blink_rate_per_min > 0) are raised-cosine pulses, 200 ms wide
    and 80 uV peak, injected simultaneously on FP1 and F8 at Poisson times with
    a 1 s dead time so individual events stay countable.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * spec.fs))
    t = np.arange(n) / spec.fs
    nch = len(spec.channel_labels)
    x = np.zeros((n, nch))

    for ci, label in enumerate(spec.channel_labels):
        for comp in spec.components_for(label):
            x[:, ci] += comp.amplitude_uV * _band_noise(rng, n, spec.fs, comp.band)

    for cpl in spec.coupling:
        shared = _band_noise(rng, n, spec.fs, cpl.band)
        c = cpl.coefficient
        resid_scale = math.sqrt(max(0.0, 1.0 - c * c))
        for label in cpl.channels:
            ci = spec.channel_labels.index(label)
            own = _band_noise(rng, n, spec.fs, cpl.band) if resid_scale > 0 else 0.0
            x[:, ci] += cpl.amplitude_uV * (c * shared + resid_scale * own)

    blink_times: list[float] = []
    if spec.blink_rate_per_min > 0:
        rate_hz = spec.blink_rate_per_min / 60.0
        tb = rng.exponential(1.0 / rate_hz)
        while tb < duration_s - BLINK_WIDTH_S:
            blink_times.append(tb)
            tb += 1.0 + rng.exponential(1.0 / rate_hz)
        half = BLINK_WIDTH_S / 2
        blink_cols = [spec.channel_labels.index(c)
                      for c in _BLINK_CHANNELS if c in spec.channel_labels]
        for tb in blink_times:
            lo = int((tb - half) * spec.fs)
            hi = min(n, int((tb + half) * spec.fs) + 1)
            seg = t[max(0, lo):hi]
            pulse = BLINK_AMPLITUDE_UV * 0.5 * (
                1.0 + np.cos(np.pi * (seg - tb) / half))
            pulse[np.abs(seg - tb) > half] = 0.0
            for ci in blink_cols:
                x[max(0, lo):hi, ci] += pulse

    truth = EegTruth(blink_times=t0 + np.asarray(blink_times))
    return _chunk(x, spec.fs, t0, chunk_s), truth


@dataclass(frozen=True)
class ScrEvent:
    """One skin-conductance response: bi-exponential bump peaking rise_s
    after onset and relaxing with the decay_s time constant."""

    t: float
    amplitude_uS: float
    rise_s: float = 1.0
    decay_s: float = 3.0

    def __post_init__(self):
        if self.amplitude_uS < 0:
            raise ConfigurationError("amplitude_uS must be >= 0")
        if not 0 < self.rise_s < self.decay_s:
            raise ConfigurationError("need 0 < rise_s < decay_s")


def _scr_kernel(tau: np.ndarray, rise_s: float, decay_s: float) -> np.ndarray:
    """Unit-peak bi-exponential exp(-t/decay) - exp(-t/tau_r), with tau_r
    solved so the peak lands exactly at rise_s."""

    def peak_time(tau_r: float) -> float:
        return tau_r * decay_s / (decay_s - tau_r) * math.log(decay_s / tau_r)

    tau_r = scipy.optimize.brentq(
        lambda v: peak_time(v) - rise_s, 1e-6 * decay_s, decay_s * (1 - 1e-9))
    h = np.where(tau >= 0, np.exp(-tau / decay_s) - np.exp(-tau / tau_r), 0.0)
    return h / (math.exp(-rise_s / decay_s) - math.exp(-rise_s / tau_r))


def gen_eda(
    tonic_uS: float,
    scr_events: Sequence[ScrEvent],
    fs: float,
    duration_s: float,
    *,
    noise_uS: float = 0.0,
    seed: int = 0,
    t0: float = 0.0,
    chunk_s: float = 1.0,
) -> list[SampleChunk]:
    """Tonic skin conductance plus superposed SCR bumps."""
    if tonic_uS < 0:
        raise ConfigurationError("tonic_uS must be >= 0")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    x = np.full(n, float(tonic_uS))
    for ev in scr_events:
        x += ev.amplitude_uS * _scr_kernel(t - ev.t, ev.rise_s, ev.decay_s)
    if noise_uS > 0:
        x += rng.normal(0.0, noise_uS, size=n)
    return _chunk(x, fs, t0, chunk_s)


# --------------------------------------------------------------------------
# CSV recording


_HEADER_RE = re.compile(
    r"^# tobe-recording v1 name=(?P<name>.*) modality=(?P<modality>\S+) "
    r"rate=(?P<rate>\S+) channels=(?P<channels>\S+) unit=(?P<unit>.*)$"
)


def record_csv(path, meta: StreamMeta, chunks: Iterable[SampleChunk]) -> int:
    """Write chunks to a tobe-recording v1 CSV file; returns rows written.

    Sample values are written with 9 significant digits, which round-trips
    float32 exactly; timestamps use repr so float64 survives as well.
    """
    n_rows = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# tobe-recording v1 name={meta.name} modality={meta.modality.value} "
            f"rate={meta.nominal_rate:g} channels={';'.join(meta.channel_labels)} "
            f"unit={meta.unit}\n"
        )
        for chunk in chunks:
            if chunk.samples.shape[1] != meta.n_channels:
                raise ConfigurationError(
                    f"chunk has {chunk.samples.shape[1]} channels, "
                    f"meta declares {meta.n_channels}")
            for ts, row in zip(chunk.timestamps, chunk.samples):
                vals = ",".join(f"{v:.9g}" for v in row)
                fh.write(f"{float(ts)!r},{vals}\n")
                n_rows += 1
    return n_rows


def read_recording(path) -> tuple[StreamMeta, np.ndarray, np.ndarray]:
    """Parse a recording file into (meta, timestamps, samples).

    Malformed headers or rows raise ReplayError carrying the 1-based line
    number; timestamps must be strictly increasing.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        m = _HEADER_RE.match(header)
        if not m:
            raise ReplayError("not a tobe-recording v1 header", line=1)
        try:
            meta = StreamMeta(
                name=m["name"],
                modality=Modality(m["modality"]),
                channel_labels=tuple(m["channels"].split(";")),
                nominal_rate=float(m["rate"]),
                unit=m["unit"],
                source_id="replay",
            )
        except (ValueError, KeyError) as exc:
            raise ReplayError(f"bad header field: {exc}", line=1) from exc

        ts_list: list[float] = []
        rows: list[list[float]] = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 1 + meta.n_channels:
                raise ReplayError(
                    f"expected {1 + meta.n_channels} columns, got {len(parts)}",
                    line=lineno)
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise ReplayError(f"non-numeric value: {exc}", line=lineno) from exc
            if ts_list and values[0] <= ts_list[-1]:
                raise ReplayError(
                    f"timestamp {values[0]!r} not increasing", line=lineno)
            ts_list.append(values[0])
            rows.append(values[1:])

    ts = np.asarray(ts_list, dtype=np.float64)
    xs = np.asarray(rows, dtype=np.float32) if rows else np.empty((0, meta.n_channels),
                                                                  dtype=np.float32)
    return meta, ts, xs


def replay_csv(
    path,
    speed: float = 0.0,
    *,
    chunk_s: float = 1.0,
    sleep=time.sleep,
    clock=time.monotonic,
) -> tuple[StreamMeta, Iterator[SampleChunk]]:
    """Replay a recording as a paced chunk iterator.

    speed is a real-time multiplier: 2.0 plays twice as fast, 0 streams as
    fast as the consumer can pull. Pacing sleeps until each chunk's last
    timestamp (scaled) is due, so total wall time tracks duration/speed.
    """
    if speed < 0:
        raise ConfigurationError("speed must be >= 0")
    meta, ts, xs = read_recording(path)

    def _iter() -> Iterator[SampleChunk]:
        if len(ts) == 0:
            return
        t_start = clock()
        t_first = ts[0]
        lo = 0
        while lo < len(ts):
            hi = np.searchsorted(ts, ts[lo] + chunk_s, side="left")
            hi = max(hi, lo + 1)
            chunk = SampleChunk(ts[lo:hi], xs[lo:hi])
            if speed > 0:
                due = (ts[hi - 1] - t_first) / speed
                delay = due - (clock() - t_start)
                if delay > 0:
                    sleep(delay)
            yield chunk
            lo = hi

    return meta, _iter()
