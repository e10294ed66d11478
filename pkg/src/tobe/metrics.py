"""Metric extraction: raw modality streams in, MetricValue streams and events out.

The extractors are deliberately split into two shapes. Stateful detectors
(R peaks, blinks, arousal, respiration, the coherence trackers) accept
SampleChunks in timestamp order and return whatever became available.
Window metrics (vigilance, workload, meditation, valence) are pure functions
of one EEG window; EegMetricsPipeline wires them to a sliding window and a
common average reference for streaming use.

All EEG indices follow the same recipe: common average reference, Welch log
band power or phase locking on named electrode subsets, differences taken in
the log domain so uniform gain cancels exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dsp import (
    ALPHA,
    ALPHA_BETA,
    BETA,
    DELTA_THETA,
    THETA_LOW_ALPHA,
    WIDE_ALPHA,
    BandSpec,
    Normalizer,
    SlidingWindower,
    StreamingFilter,
    Window,
    band_log_power,
    common_average_reference,
    dc_blocker,
    design_bandpass,
    design_lowpass,
    msc,
    plv,
)
from .errors import ConfigurationError, ContractError
from .types import (
    EEG_CHANNELS,
    BeatEvent,
    BlinkEvent,
    BreathPhase,
    MetricId,
    MetricValue,
    SampleChunk,
)

#: Respiratory/heart-rate variability band used by both coherence metrics.
COHERENCE_BAND = BandSpec(0.05, 0.3)


@dataclass(frozen=True)
class ChannelLayout:
    """Electrode montage and the named subsets the EEG indices draw from."""

    labels: tuple[str, ...] = EEG_CHANNELS
    frontal: tuple[str, ...] = ("F7", "FP1", "F8", "T8")
    parietal_occipital: tuple[str, ...] = ("P8", "P7", "O2", "O1")
    front: tuple[str, ...] = ("FP1", "F7", "F8")
    rear: tuple[str, ...] = ("O1", "P7", "P8")
    left: tuple[str, ...] = ("F7", "P7", "O1")
    right: tuple[str, ...] = ("F8", "P8", "O2")

    def __post_init__(self):
        for name in ("frontal", "parietal_occipital", "front", "rear",
                     "left", "right"):
            subset = getattr(self, name)
            unknown = set(subset) - set(self.labels)
            if unknown:
                raise ConfigurationError(f"{name} contains unknown labels {unknown}")
        if set(self.left) & set(self.right):
            raise ConfigurationError("left and right subsets must be disjoint")

    def indices(self, subset: Sequence[str]) -> list[int]:
        return [self.labels.index(lbl) for lbl in subset]


DEFAULT_LAYOUT = ChannelLayout()


# --------------------------------------------------------------------------
# R peaks and heart rate


class RPeakDetector:
    """Streaming QRS detector.

    Classic chain: 5-15 Hz band-pass, derivative, squaring, 150 ms moving
    integration, then an adaptive signal/noise threshold with a 250 ms
    refractory period. The reported beat time is the band-passed maximum
    just before the integrated peak, so the fiducial sits on the R wave and
    detection lags real time by well under 300 ms.

    Saturated input (a flat run at the extreme of the signal range, e.g. a
    railed amplifier) suppresses detection for half a second and raises the
    ``saturated`` flag rather than producing spurious beats.

    The first second of input only trains the thresholds, so beats landing
    there would normally vanish. Instead the detector keeps the candidate
    peaks it saw while learning and emits the qualifying ones retroactively
    as soon as the thresholds exist -- those events arrive about a second
    after the fact, but carry their true fiducial times.
    """

    def __init__(self, fs: float, *, refractory_s: float = 0.250):
        if fs < 100:
            raise ConfigurationError(f"need fs >= 100 Hz, got {fs:g}")
        self.fs = fs
        self._bp = StreamingFilter(design_bandpass(fs, BandSpec(5.0, 15.0)), 1)
        self._n_int = max(1, int(round(0.150 * fs)))
        self._n_sat = max(2, int(round(0.050 * fs)))
        self._refractory = refractory_s
        self._mwi_carry = np.zeros(0)
        self._prev_bp = 0.0
        self._spki = 0.0
        self._npki = 0.0
        self._learn_n = int(fs)  # 1 s threshold learning, no events emitted
        self._learn_peaks: list[tuple[float, float, float]] | None = []
        self._n_seen = 0
        self._last_beat_t = -math.inf
        self._recent = deque(maxlen=int(0.30 * fs))
        self._y1 = self._y2 = 0.0
        self._t1: float | None = None
        self._run_val: float | None = None
        self._run_len = 0
        self._max_abs = 0.0
        self._suppress_until = -math.inf
        self._t_now = -math.inf

    @property
    def saturated(self) -> bool:
        """True while detection is suppressed after railed input."""
        return self._t_now < self._suppress_until

    def _fiducial(self, t_peak: float) -> float:
        # the integrated peak trails the R wave by the filter and window
        # delays; the R itself is the largest raw excursion just before it
        lo = t_peak - 0.225
        base = sum(v for _, v in self._recent) / len(self._recent)
        best_t, best_v = t_peak, -math.inf
        for t, v in self._recent:
            if lo <= t <= t_peak and abs(v - base) > best_v:
                best_t, best_v = t, abs(v - base)
        return best_t

    def _search_back(self) -> list[BeatEvent]:
        # beats that fell inside the learning second were withheld; replay
        # the candidate peaks against the thresholds they helped build
        out: list[BeatEvent] = []
        thr = self._npki + 0.25 * (self._spki - self._npki)
        for t, y, fid in self._learn_peaks:
            if (y > thr and y > 0.0
                    and t - self._last_beat_t > self._refractory
                    and t > self._suppress_until):
                out.append(BeatEvent(fid))
                self._last_beat_t = t
                self._spki = 0.125 * y + 0.875 * self._spki
        self._learn_peaks = None
        return out

    def process(self, chunk: SampleChunk) -> list[BeatEvent]:
        ts = chunk.timestamps
        x = chunk.samples[:, 0].astype(np.float64)
        if len(x) == 0:
            return []
        self._max_abs = max(self._max_abs, float(np.max(np.abs(x))))

        bp = self._bp.process(x)
        d = np.diff(np.concatenate([[self._prev_bp], bp])) * self.fs
        self._prev_bp = float(bp[-1])
        sq = d * d
        buf = np.concatenate([self._mwi_carry, sq])
        csum = np.cumsum(np.concatenate([[0.0], buf]))
        idx = np.arange(len(self._mwi_carry), len(buf))
        y = (csum[idx + 1] - csum[np.maximum(0, idx + 1 - self._n_int)]) / self._n_int
        self._mwi_carry = buf[max(0, len(buf) - self._n_int + 1):]

        events: list[BeatEvent] = []
        for i in range(len(y)):
            t = float(ts[i])
            v = float(y[i])
            xi = float(x[i])
            if self._run_val is not None and xi == self._run_val:
                self._run_len += 1
            else:
                self._run_val = xi
                self._run_len = 1
            if (self._run_len >= self._n_sat and xi != 0.0
                    and abs(xi) >= 0.7 * self._max_abs):
                self._suppress_until = t + 0.5
            self._recent.append((t, xi))
            self._n_seen += 1
            if self._n_seen <= self._learn_n:
                self._spki = max(self._spki, 0.5 * v)
                self._npki = 0.875 * self._npki + 0.125 * v
                if self._t1 is not None and self._y1 > self._y2 and self._y1 >= v:
                    self._learn_peaks.append(
                        (self._t1, self._y1, self._fiducial(self._t1)))
            else:
                if self._learn_peaks is not None:
                    events.extend(self._search_back())
                if self._t1 is not None and self._y1 > self._y2 and self._y1 >= v:
                    thr = self._npki + 0.25 * (self._spki - self._npki)
                    if (self._y1 > thr and self._y1 > 0.0
                            and self._t1 - self._last_beat_t > self._refractory
                            and self._t1 > self._suppress_until):
                        events.append(BeatEvent(self._fiducial(self._t1)))
                        self._last_beat_t = self._t1
                        self._spki = 0.125 * self._y1 + 0.875 * self._spki
                    else:
                        self._npki = 0.125 * self._y1 + 0.875 * self._npki
            self._y2, self._y1, self._t1 = self._y1, v, t
        self._t_now = float(ts[-1])
        return events


def detect_r_peaks(chunks: Iterable[SampleChunk], fs: float) -> list[BeatEvent]:
    """Offline convenience: run RPeakDetector over a chunk sequence."""
    det = RPeakDetector(fs)
    out: list[BeatEvent] = []
    for chunk in chunks:
        out.extend(det.process(chunk))
    return out


class HeartRateEstimator:
    """Per-beat heart rate: 60 over the median of the last four inter-beat
    intervals, which rides out a single ectopic or missed beat."""

    def __init__(self, normalizer: Normalizer | None = None):
        self._beats: deque[float] = deque(maxlen=5)
        self._norm = normalizer or Normalizer.fixed(40.0, 140.0)

    def add(self, beat: BeatEvent) -> MetricValue | None:
        if self._beats and beat.t <= self._beats[-1]:
            raise ContractError("beat times must increase")
        self._beats.append(beat.t)
        if len(self._beats) < 2:
            return None
        ibis = np.diff(np.asarray(self._beats))[-4:]
        raw = 60.0 / float(np.median(ibis))
        return MetricValue(MetricId.HEART_RATE, beat.t, raw,
                           self._norm(raw, beat.t))


def heart_rate(beats: Iterable[BeatEvent],
               normalizer: Normalizer | None = None) -> list[MetricValue]:
    """Offline convenience: heart-rate series for a beat list."""
    est = HeartRateEstimator(normalizer)
    return [mv for b in beats if (mv := est.add(b)) is not None]


# --------------------------------------------------------------------------
# Blinks


class BlinkDetector:
    """Threshold blink detector on a frontal (F8) channel.

    The trigger level is four times the dispersion of a rolling 5 s baseline.
    Dispersion is a MAD-based robust standard deviation so the blinks
    themselves do not inflate it, and a candidate must stay above threshold
    for 40 ms with positive polarity — brief noise excursions past 4 sigma
    are common at EEG rates and would otherwise swamp the output.

    The sustain test runs on a 20 ms moving average of the trace: a blink
    deflection is two orders of magnitude slower than one sample, so the
    averaging costs no blink amplitude, while a single noise dip in the
    middle of an otherwise clean deflection no longer vetoes it. The
    dispersion is still measured on the unaveraged trace, which keeps the
    trigger level itself unchanged.

    Samples above the trigger are treated as candidate blink, not baseline,
    and stay out of the dispersion history — otherwise a burst of blinks in
    close succession inflates the level and vetoes its own later members.
    """

    def __init__(self, fs: float, *, threshold_sigma: float = 4.0,
                 baseline_s: float = 5.0, refractory_s: float = 0.300,
                 sustain_s: float = 0.040, smooth_s: float = 0.020):
        if fs <= 0:
            raise ConfigurationError("fs must be > 0")
        self.fs = fs
        self._dc = dc_blocker(fs)
        self._hist: deque[float] = deque(maxlen=int(baseline_s * fs))
        self._baseline_n = int(baseline_s * fs)
        self._sustain_n = max(1, int(round(sustain_s * fs)))
        self._ma: deque[float] = deque(maxlen=max(1, int(round(smooth_s * fs))))
        self._k = threshold_sigma
        self._refractory = refractory_s
        self._sigma = 0.0
        self._since_sigma = 10**9
        self._n_seen = 0
        self._run = 0
        self._run_peak = -math.inf
        self._run_peak_t = 0.0
        self._last_event_t = -math.inf

    def process(self, chunk: SampleChunk) -> list[BlinkEvent]:
        ts = chunk.timestamps
        y = self._dc.process(chunk.samples[:, 0].astype(np.float64))
        events: list[BlinkEvent] = []
        for i in range(len(y)):
            t = float(ts[i])
            self._ma.append(float(y[i]))
            v = sum(self._ma) / len(self._ma)
            self._n_seen += 1
            # tiny absolute floor so a noise-free baseline still has a
            # meaningful (not zero) trigger level
            thr = max(self._k * self._sigma, 1e-6)
            warming = self._n_seen < self._baseline_n
            if warming or v <= thr:
                self._hist.append(float(y[i]))
            self._since_sigma += 1
            if self._since_sigma >= 25 and self._hist:
                arr = np.asarray(self._hist)
                self._sigma = 1.4826 * float(np.median(np.abs(arr - np.median(arr))))
                self._since_sigma = 0
            if warming:
                continue
            if v > thr:
                self._run += 1
                if v > self._run_peak:
                    self._run_peak, self._run_peak_t = v, t
            else:
                if (self._run >= self._sustain_n
                        and self._run_peak_t - self._last_event_t >= self._refractory):
                    events.append(BlinkEvent(self._run_peak_t, self._run_peak))
                    self._last_event_t = self._run_peak_t
                self._run = 0
                self._run_peak = -math.inf
        return events


def detect_blinks(chunks: Iterable[SampleChunk], fs: float,
                  **kwargs) -> list[BlinkEvent]:
    """Offline convenience: run BlinkDetector over a chunk sequence."""
    det = BlinkDetector(fs, **kwargs)
    out: list[BlinkEvent] = []
    for chunk in chunks:
        out.extend(det.process(chunk))
    return out


# --------------------------------------------------------------------------
# EEG window metrics


def _check_window(window: Window, layout: ChannelLayout, min_s: float = 2.0):
    if window.duration_s < min_s - 1e-9:
        raise ContractError(
            f"window of {window.duration_s:.2f}s is shorter than {min_s:g}s")
    if window.n_channels != len(layout.labels):
        raise ContractError(
            f"window has {window.n_channels} channels, layout expects "
            f"{len(layout.labels)}")


def _emit(metric_id: MetricId, window: Window, raw: float,
          normalizer: Normalizer | None) -> MetricValue:
    t = window.t_start + window.duration_s
    norm = normalizer or Normalizer.logistic(0.0, 1.0)
    return MetricValue(metric_id, t, raw, norm(raw, t))


def vigilance(window: Window, layout: ChannelLayout = DEFAULT_LAYOUT,
              *, normalizer: Normalizer | None = None) -> MetricValue:
    """Alertness index: beta (15-20 Hz) over theta/low-alpha (4-10 Hz) log
    band power averaged across all electrodes. Expects a referenced window."""
    _check_window(window, layout)
    diff = band_log_power(window, BETA) - band_log_power(window, THETA_LOW_ALPHA)
    return _emit(MetricId.VIGILANCE, window, float(diff.mean()), normalizer)


def workload(window: Window, layout: ChannelLayout = DEFAULT_LAYOUT,
             *, normalizer: Normalizer | None = None) -> MetricValue:
    """Mental-effort index: frontal delta/theta (1-8 Hz) against
    parietal-occipital wide alpha (8-14 Hz), in log band power."""
    _check_window(window, layout)
    fr = band_log_power(window, DELTA_THETA, channels=layout.indices(layout.frontal))
    po = band_log_power(window, WIDE_ALPHA,
                        channels=layout.indices(layout.parietal_occipital))
    return _emit(MetricId.WORKLOAD, window, float(fr.mean() - po.mean()), normalizer)


def meditation(window: Window, layout: ChannelLayout = DEFAULT_LAYOUT,
               *, normalizer: Normalizer | None = None) -> MetricValue:
    """Relaxed-focus index: mean phase locking between front and rear
    electrodes in the 7-28 Hz range. Raw is already in [0,1]."""
    _check_window(window, layout)
    vals = [
        plv(window.data[:, i], window.data[:, j], ALPHA_BETA, fs=window.fs)
        for i in layout.indices(layout.front)
        for j in layout.indices(layout.rear)
    ]
    raw = float(np.mean(vals))
    t = window.t_start + window.duration_s
    norm = normalizer(raw, t) if normalizer else raw
    return MetricValue(MetricId.MEDITATION, t, raw, norm)


def valence(window: Window, layout: ChannelLayout = DEFAULT_LAYOUT,
            *, normalizer: Normalizer | None = None) -> MetricValue:
    """Affective tilt: left-vs-right alpha (8-12 Hz) log band power
    asymmetry; positive raw means more left-hemisphere alpha."""
    _check_window(window, layout)
    lf = band_log_power(window, ALPHA, channels=layout.indices(layout.left))
    rt = band_log_power(window, ALPHA, channels=layout.indices(layout.right))
    return _emit(MetricId.VALENCE, window, float(lf.mean() - rt.mean()), normalizer)


class EegMetricsPipeline:
    """Streaming wrapper: common average reference, 2 s / 1 s hop windows for
    the band-power indices, 10 s / 1 s hop for meditation."""

    def __init__(self, fs: float, layout: ChannelLayout = DEFAULT_LAYOUT,
                 normalizers: Mapping[MetricId, Normalizer] | None = None):
        n = len(layout.labels)
        self.layout = layout
        self._fast = SlidingWindower(2.0, 1.0, fs, n)
        self._slow = SlidingWindower(10.0, 1.0, fs, n)
        defaults = {
            MetricId.VIGILANCE: Normalizer.rolling_minmax(60.0),
            MetricId.WORKLOAD: Normalizer.rolling_minmax(60.0),
            MetricId.VALENCE: Normalizer.logistic(0.0, 1.0),
            MetricId.MEDITATION: None,
        }
        self._norm = {**defaults, **(normalizers or {})}

    def process(self, chunk: SampleChunk) -> list[MetricValue]:
        car = common_average_reference(chunk.samples.astype(np.float64))
        t0 = float(chunk.timestamps[0])
        out: list[MetricValue] = []
        for w in self._fast.feed(car, t_first=t0):
            out.append(vigilance(w, self.layout,
                                 normalizer=self._norm[MetricId.VIGILANCE]))
            out.append(workload(w, self.layout,
                                normalizer=self._norm[MetricId.WORKLOAD]))
            out.append(valence(w, self.layout,
                               normalizer=self._norm[MetricId.VALENCE]))
        for w in self._slow.feed(car, t_first=t0):
            out.append(meditation(w, self.layout,
                                  normalizer=self._norm[MetricId.MEDITATION]))
        out.sort(key=lambda m: (m.t, m.metric_id.value))
        return out


# --------------------------------------------------------------------------
# Arousal (EDA)


class ArousalExtractor:
    """Skin conductance level: 2 s trailing moving average emitted on a 4 Hz
    grid. Values are stamped at the window centre (1 s behind the newest
    sample) so the smoothed peak stays aligned with the underlying response.
    """

    def __init__(self, fs: float, normalizer: Normalizer | None = None):
        if fs < 10:
            raise ConfigurationError(f"need fs >= 10 Hz, got {fs:g}")
        self.fs = fs
        self._buf: deque[float] = deque(maxlen=int(round(2.0 * fs)))
        self._norm = normalizer or Normalizer.rolling_minmax(60.0)
        self._next_emit: float | None = None
        self._t0: float | None = None

    def process(self, chunk: SampleChunk) -> list[MetricValue]:
        out: list[MetricValue] = []
        for t, v in zip(chunk.timestamps, chunk.samples[:, 0]):
            t = float(t)
            if self._t0 is None:
                self._t0 = t
                self._next_emit = t + 0.25
            self._buf.append(float(v))
            while t >= self._next_emit:
                raw = float(np.mean(self._buf))
                t_stamp = max(self._t0, self._next_emit - 1.0)
                out.append(MetricValue(MetricId.AROUSAL, t_stamp, raw,
                                       self._norm(raw, t_stamp)))
                self._next_emit += 0.25
        return out


# --------------------------------------------------------------------------
# Respiration


class RespirationExtractor:
    """Chest inflation plus breath phase from a respiration belt.

    Inflation maps the belt value to [0,1]. With an explicit calibration the
    map is fixed; otherwise the first 30 s act as an onboarding breath cycle
    whose min/max are then frozen (mode="rolling" keeps adapting instead).
    Phase restarts at 0 on each inhale onset — an upturn of the low-passed
    derivative — and advances against the previous cycle length. Degenerate
    input (flat belt) holds the last phase with the stale flag set.
    """

    def __init__(self, fs: float, *, calibration: tuple[float, float] | None = None,
                 mode: str = "auto", onboarding_s: float = 30.0,
                 min_period_s: float = 2.0):
        if fs < 10:
            raise ConfigurationError(f"need fs >= 10 Hz, got {fs:g}")
        if mode not in ("auto", "rolling"):
            raise ConfigurationError(f"unknown mode {mode!r}")
        self.fs = fs
        sos = design_lowpass(fs, 0.75)
        self._lp = StreamingFilter(sos, 1, prime_step=True)
        self._calib = calibration
        self._mode = mode
        self._onboarding_s = onboarding_s
        self._min_period = min_period_s
        self._t0: float | None = None
        self._run_lo = math.inf
        self._run_hi = -math.inf
        self._frozen: tuple[float, float] | None = calibration
        self._roll: deque[tuple[float, float]] = deque()
        self._prev_y: float | None = None
        self._prev_d = 0.0
        self._last_onset: float | None = None
        self._period_est: float | None = None
        self._last_phase = 0.0

    def _inflation(self, v: float, t: float) -> tuple[float, bool]:
        if self._frozen is not None:
            lo, hi = self._frozen
        elif self._mode == "rolling":
            self._roll.append((t, v))
            while self._roll and self._roll[0][0] < t - 60.0:
                self._roll.popleft()
            vals = [x for _, x in self._roll]
            lo, hi = min(vals), max(vals)
        else:
            self._run_lo = min(self._run_lo, v)
            self._run_hi = max(self._run_hi, v)
            lo, hi = self._run_lo, self._run_hi
            if t - self._t0 >= self._onboarding_s:
                self._frozen = (lo, hi)
        span = hi - lo
        if span < 1e-9:
            return 0.5, True
        return min(1.0, max(0.0, (v - lo) / span)), False

    def process(self, chunk: SampleChunk) -> tuple[list[BreathPhase], list[MetricValue]]:
        phases: list[BreathPhase] = []
        metrics: list[MetricValue] = []
        for t, v in zip(chunk.timestamps, chunk.samples[:, 0]):
            t, v = float(t), float(v)
            if self._t0 is None:
                self._t0 = t
            inflation, flat = self._inflation(v, t)

            y = float(self._lp.process(np.array([v]))[0])
            d = 0.0 if self._prev_y is None else y - self._prev_y
            onset = (self._prev_d <= 0.0 < d and not flat
                     and (self._last_onset is None
                          or t - self._last_onset >= self._min_period))
            if onset:
                if self._last_onset is not None:
                    self._period_est = t - self._last_onset
                self._last_onset = t
            self._prev_y, self._prev_d = y, d

            stale = flat
            if self._last_onset is None or self._period_est is None:
                phase = self._last_phase
                stale = True
            else:
                elapsed = t - self._last_onset
                if elapsed > 1.5 * self._period_est:
                    phase = self._last_phase
                    stale = True
                else:
                    phase = min(elapsed / self._period_est, 0.999)
                    self._last_phase = phase
            if flat:
                phase = self._last_phase

            phases.append(BreathPhase(t, phase, inflation, stale))
            metrics.append(MetricValue(MetricId.RESPIRATION, t, inflation, inflation))
        return phases, metrics


# --------------------------------------------------------------------------
# Coherence trackers


class _SeriesBuffer:
    """Irregular (t, value) points kept over a horizon, linearly resampled."""

    def __init__(self, horizon_s: float = 40.0):
        self._pts: deque[tuple[float, float]] = deque()
        self._horizon = horizon_s

    def add(self, t: float, v: float):
        if self._pts and t <= self._pts[-1][0]:
            return  # ignore stale or duplicate points
        self._pts.append((t, v))
        while self._pts and self._pts[0][0] < t - self._horizon:
            self._pts.popleft()

    @property
    def t_first(self) -> float | None:
        return self._pts[0][0] if self._pts else None

    @property
    def t_last(self) -> float | None:
        return self._pts[-1][0] if self._pts else None

    def sample(self, times: np.ndarray) -> np.ndarray:
        tp = np.asarray([t for t, _ in self._pts])
        vp = np.asarray([v for _, v in self._pts])
        return np.interp(times, tp, vp)


class _MscTracker:
    """Shared machinery: two series on a 4 Hz grid, trailing-window magnitude
    squared coherence in the breathing band, one emission per second."""

    def __init__(self, metric_id: MetricId, *, window_s: float = 10.0,
                 grid_hz: float = 4.0, emit_every_s: float = 1.0,
                 band: BandSpec = COHERENCE_BAND, segment_s: float = 2.0):
        self.metric_id = metric_id
        self.window_s = window_s
        self.grid_hz = grid_hz
        self.emit_every_s = emit_every_s
        self.band = band
        self.segment_s = segment_s
        self._a = _SeriesBuffer(window_s * 4)
        self._b = _SeriesBuffer(window_s * 4)
        self._next_emit: float | None = None

    def _ready_from(self) -> float | None:
        if self._a.t_first is None or self._b.t_first is None:
            return None
        return max(self._a.t_first, self._b.t_first) + self.window_s

    def skip_to(self, t: float):
        """Move the emission grid so the next output lands at or after t.

        Lets a caller that fed history for a while (e.g. across protocol
        phases) start emissions at a phase boundary instead of back-filling
        one value per elapsed second.
        """
        target = math.ceil(t / self.emit_every_s) * self.emit_every_s
        if self._next_emit is None or self._next_emit < target:
            self._next_emit = target

    def advance(self, now: float) -> list[MetricValue]:
        out: list[MetricValue] = []
        ready = self._ready_from()
        if ready is None:
            return out
        if self._next_emit is None:
            self._next_emit = math.ceil(ready / self.emit_every_s) * self.emit_every_s
        n = int(round(self.window_s * self.grid_hz))
        while self._next_emit <= now:
            t_e = self._next_emit
            if (t_e < ready or self._a.t_last is None
                    or self._a.t_last < t_e or self._b.t_last < t_e):
                if t_e < ready:
                    self._next_emit += self.emit_every_s
                    continue
                break  # series have not caught up yet; retry on next advance
            grid = t_e - self.window_s + (np.arange(n) + 1) / self.grid_hz
            raw = msc(self._a.sample(grid), self._b.sample(grid), self.band,
                      fs=self.grid_hz, segment_s=self.segment_s)
            out.append(MetricValue(self.metric_id, t_e, raw, raw))
            self._next_emit += self.emit_every_s
        return out


class CardiacCoherenceTracker(_MscTracker):
    """Relaxation index: coherence between heart rate and chest inflation
    over the trailing 10 s, in the 0.05-0.3 Hz band."""

    def __init__(self, **kwargs):
        super().__init__(MetricId.CARDIAC_COHERENCE, **kwargs)

    def add_heart_rate(self, mv_or_t, bpm: float | None = None):
        if bpm is None:
            self._a.add(mv_or_t.t, mv_or_t.raw)
        else:
            self._a.add(float(mv_or_t), bpm)

    def add_breath(self, t: float, inflation: float):
        self._b.add(t, inflation)


class PairSynchronyTracker(_MscTracker):
    """Two-user synchrony: coherence between both users' heart-rate series."""

    def __init__(self, **kwargs):
        super().__init__(MetricId.PAIR_SYNCHRONY, **kwargs)

    def add_hr_a(self, t: float, bpm: float):
        self._a.add(t, bpm)

    def add_hr_b(self, t: float, bpm: float):
        self._b.add(t, bpm)
