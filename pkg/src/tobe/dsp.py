"""Numerical primitives shared by all metrics.

Streaming IIR filtering (state carried across chunks), common average
referencing, Welch band power, phase locking, magnitude-squared coherence,
sliding windows and range normalization. Everything here is either pure or
operates on an explicitly passed state object; nothing hides shared state.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.signal
import scipy.special

from .errors import ConfigurationError, ContractError

#: Power floor applied before taking logs, so silent channels do not blow up.
POWER_FLOOR = 1e-12


@dataclass(frozen=True)
class BandSpec:
    """A frequency band in Hz, validated against the sampling rate at use."""

    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz:
            raise ConfigurationError(
                f"band requires 0 < low < high, got ({self.low_hz}, {self.high_hz})"
            )

    def validate(self, fs: float) -> None:
        if self.high_hz >= fs / 2:
            raise ConfigurationError(
                f"band {self.low_hz}-{self.high_hz} Hz exceeds Nyquist for fs={fs}"
            )


# Bands used by the EEG metrics.
BETA = BandSpec(15.0, 20.0)
THETA_LOW_ALPHA = BandSpec(4.0, 10.0)
DELTA_THETA = BandSpec(1.0, 8.0)
WIDE_ALPHA = BandSpec(8.0, 14.0)
ALPHA_BETA = BandSpec(7.0, 28.0)
ALPHA = BandSpec(8.0, 12.0)


@dataclass
class Window:
    """A fixed block of samples: (n_samples, n_channels) at rate fs,
    starting at t_start seconds."""

    data: np.ndarray
    fs: float
    t_start: float = 0.0

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if self.data.shape[0] == 1 and self.data.shape[1] > 1:
            # accept 1-D input as a single-channel column
            self.data = self.data.T
        if self.data.shape[0] < 2:
            raise ContractError("window needs at least 2 samples")
        if self.fs <= 0:
            raise ContractError("window fs must be > 0")

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs


class StreamingFilter:
    """Causal IIR filter with state carried across chunks.

    Built from second-order sections so that filtering a signal chunk by
    chunk gives bit-near-identical output to filtering it in one pass.
    Single-owner state: hand the instance between threads, never share it.
    """

    def __init__(self, sos: np.ndarray, n_channels: int, prime_step: bool = False):
        self.sos = np.asarray(sos, dtype=np.float64)
        self.n_channels = n_channels
        self._prime_step = prime_step
        self._zi = None

    def reset(self) -> None:
        self._zi = None

    def process(self, x: np.ndarray) -> np.ndarray:
        """Filter one chunk of shape (n,) or (n, n_channels)."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[:, None]
        if x.shape[1] != self.n_channels:
            raise ContractError(
                f"filter built for {self.n_channels} channels, chunk has {x.shape[1]}"
            )
        if self._zi is None:
            zi0 = scipy.signal.sosfilt_zi(self.sos)  # (nsect, 2), unit step response
            scale = x[0] if self._prime_step else np.zeros(self.n_channels)
            self._zi = zi0[:, :, None] * scale[None, None, :]
        y, self._zi = scipy.signal.sosfilt(self.sos, x, axis=0, zi=self._zi)
        return y[:, 0] if squeeze else y


def design_bandpass(fs: float, band: BandSpec, order: int = 4) -> np.ndarray:
    """Butterworth band-pass second-order sections for the given band."""
    band.validate(fs)
    return scipy.signal.butter(
        order, [band.low_hz, band.high_hz], btype="bandpass", fs=fs, output="sos"
    )


def design_lowpass(fs: float, cutoff_hz: float, order: int = 2) -> np.ndarray:
    """Butterworth low-pass second-order sections (envelope tracking)."""
    if not 0 < cutoff_hz < fs / 2:
        raise ConfigurationError(f"cutoff {cutoff_hz:g} outside (0, fs/2)")
    return scipy.signal.butter(order, cutoff_hz / (fs / 2), btype="low",
                               output="sos")


def bandpass_filter(fs: float, band: BandSpec, n_channels: int = 1,
                    order: int = 4) -> StreamingFilter:
    """Streaming band-pass filter; >= 20 dB attenuation one octave outside
    the band for every band this package uses."""
    return StreamingFilter(design_bandpass(fs, band, order), n_channels)


def dc_blocker(fs: float, cutoff_hz: float = 0.5, n_channels: int = 1) -> StreamingFilter:
    """Streaming DC / drift remover (2nd-order Butterworth high-pass).

    State is primed from the first sample so a constant offset is rejected
    from the start rather than decaying through a long transient.
    """
    if not 0 < cutoff_hz < fs / 2:
        raise ConfigurationError(f"cutoff {cutoff_hz} Hz invalid for fs={fs}")
    sos = scipy.signal.butter(2, cutoff_hz, btype="highpass", fs=fs, output="sos")
    return StreamingFilter(sos, n_channels, prime_step=True)


def bandpass(x: np.ndarray, fs: float, band: BandSpec, order: int = 4) -> np.ndarray:
    """One-shot causal band-pass of a whole array (fresh filter state)."""
    x = np.asarray(x, dtype=np.float64)
    nch = 1 if x.ndim == 1 else x.shape[1]
    return bandpass_filter(fs, band, nch, order).process(x)


def dc_remove(x: np.ndarray, fs: float, cutoff_hz: float = 0.5) -> np.ndarray:
    """One-shot causal DC removal of a whole array (fresh filter state)."""
    x = np.asarray(x, dtype=np.float64)
    nch = 1 if x.ndim == 1 else x.shape[1]
    return dc_blocker(fs, cutoff_hz, nch).process(x)


def common_average_reference(frame: np.ndarray) -> np.ndarray:
    """Subtract the instantaneous mean over channels from every channel.

    Accepts one frame (n_channels,) or a window (n_samples, n_channels);
    the output sums to zero across channels and the operation is idempotent.
    """
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    if n < 2:
        raise ContractError("common average reference needs >= 2 channels")
    return frame - frame.mean(axis=-1, keepdims=True)


def _band_mask(freqs: np.ndarray, band: BandSpec) -> np.ndarray:
    return (freqs >= band.low_hz) & (freqs <= band.high_hz)


def band_power(window: Window, band: BandSpec, channels=None,
               segment_s: float = 2.0) -> np.ndarray:
    """Per-channel power in the band, integrated from a Welch periodogram.

    Hann segments of segment_s (capped at the window length), 50% overlap,
    density scaling: a pure in-band sine of amplitude A yields ~A^2/2.
    """
    band.validate(window.fs)
    if window.duration_s < 2.0 / band.low_hz:
        raise ContractError(
            f"window of {window.duration_s:.2f}s is shorter than 2 cycles "
            f"of {band.low_hz} Hz"
        )
    data = window.data if channels is None else window.data[:, list(channels)]
    nperseg = min(window.n_samples, int(round(segment_s * window.fs)))
    freqs, psd = scipy.signal.welch(
        data, fs=window.fs, nperseg=nperseg, noverlap=nperseg // 2, axis=0
    )
    mask = _band_mask(freqs, band)
    df = freqs[1] - freqs[0]
    power = psd[mask].sum(axis=0) * df
    return np.maximum(power, POWER_FLOOR)


def band_log_power(window: Window, band: BandSpec, channels=None,
                   segment_s: float = 2.0) -> np.ndarray:
    """Natural log of the per-channel band power (see band_power)."""
    return np.log(band_power(window, band, channels, segment_s))


def _as_single_channel(w, fs=None):
    if isinstance(w, Window):
        if w.n_channels != 1:
            raise ContractError("expected a single-channel window")
        return w.data[:, 0], w.fs
    x = np.asarray(w, dtype=np.float64).reshape(-1)
    if fs is None:
        raise ContractError("fs required when passing a bare array")
    return x, fs


def instantaneous_phase(x: np.ndarray, fs: float, band: BandSpec) -> np.ndarray:
    """Phase of the band-passed analytic signal (zero-phase filter + Hilbert)."""
    band.validate(fs)
    sos = design_bandpass(fs, band)
    xb = scipy.signal.sosfiltfilt(sos, x)
    return np.angle(scipy.signal.hilbert(xb))


def plv(window_a, window_b, band: BandSpec, fs: float | None = None) -> float:
    """Phase locking value between two equal-length signals in a band.

    |mean(exp(i * (phase_a - phase_b)))| over the window, with 10% of the
    samples trimmed at each edge to discard filter and Hilbert edge effects.
    Always in [0, 1]; identical inputs give exactly 1.
    """
    a, fs_a = _as_single_channel(window_a, fs)
    b, fs_b = _as_single_channel(window_b, fs)
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} vs {len(b)}")
    if fs_a != fs_b:
        raise ContractError(f"rate mismatch: {fs_a} vs {fs_b}")
    pa = instantaneous_phase(a, fs_a, band)
    pb = instantaneous_phase(b, fs_b, band)
    trim = len(a) // 10
    dphi = (pa - pb)[trim: len(a) - trim]
    return float(min(1.0, np.abs(np.mean(np.exp(1j * dphi)))))


def msc(x, y, band: BandSpec, fs: float | None = None,
        segment_s: float = 2.0, overlap: float = 0.5) -> float:
    """Magnitude-squared coherence, reduced to the max over bins in a band.

    Welch cross-spectral estimate with Hann segments of segment_s and the
    given overlap, zero-padded to the window length so the displayed bin
    spacing is 1/duration. Requires at least 2 segments (a single segment
    is identically 1). Short segments (the 2 s default) trade frequency
    resolution for enough averaging to discriminate coupled from
    independent slow rhythms inside a 10 s window; pass a longer segment_s
    when per-frequency resolution matters more than estimator variance.
    """
    a, fs_a = _as_single_channel(x, fs)
    b, fs_b = _as_single_channel(y, fs)
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} vs {len(b)}")
    if fs_a != fs_b:
        raise ContractError(f"rate mismatch: {fs_a} vs {fs_b}")
    nperseg = min(len(a), int(round(segment_s * fs_a)))
    step = nperseg - int(round(nperseg * overlap))
    n_segments = 1 + max(0, (len(a) - nperseg) // max(step, 1))
    if n_segments < 2:
        raise ContractError(
            f"need >= 2 Welch segments, got {n_segments} "
            f"({len(a)} samples, {nperseg} per segment)"
        )
    freqs, coh = scipy.signal.coherence(
        a, b, fs=fs_a, nperseg=nperseg, noverlap=nperseg - step,
        nfft=max(len(a), nperseg),
    )
    mask = _band_mask(freqs, band)
    if not mask.any():
        raise ConfigurationError(
            f"no frequency bin inside {band.low_hz}-{band.high_hz} Hz "
            f"(bin spacing {freqs[1] - freqs[0]:.3f} Hz)"
        )
    return float(min(1.0, np.max(coh[mask])))


class SlidingWindower:
    """Cut a sample stream into fixed-length windows on a fixed hop.

    Feed chunks in order; complete windows come back, partial trailing data
    is withheld until the next feed completes it.
    """

    def __init__(self, length_s: float, hop_s: float, fs: float, n_channels: int = 1):
        if length_s <= 0 or not 0 < hop_s <= length_s:
            raise ConfigurationError(
                f"need 0 < hop_s <= length_s, got hop={hop_s} length={length_s}"
            )
        self.fs = fs
        self.length_n = max(2, int(round(length_s * fs)))
        self.hop_n = max(1, int(round(hop_s * fs)))
        self.n_channels = n_channels
        self._buf = np.empty((0, n_channels))
        self._t0 = None
        self._consumed = 0  # samples dropped from the left of _buf

    def feed(self, samples: np.ndarray, t_first: float | None = None) -> list[Window]:
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if samples.shape[1] != self.n_channels and samples.shape[0] == self.n_channels:
            samples = samples.T
        if self._t0 is None:
            self._t0 = 0.0 if t_first is None else t_first
        self._buf = np.vstack([self._buf, samples])
        out = []
        while self._buf.shape[0] >= self.length_n:
            t_start = self._t0 + self._consumed / self.fs
            out.append(Window(self._buf[: self.length_n].copy(), self.fs, t_start))
            self._buf = self._buf[self.hop_n:]
            self._consumed += self.hop_n
        return out


def sliding_windows(samples: np.ndarray, fs: float, length_s: float,
                    hop_s: float, t0: float = 0.0) -> list[Window]:
    """Offline convenience: all complete windows of an in-memory array."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[0] == 1 and x.shape[1] > 1:
        x = x.T
    w = SlidingWindower(length_s, hop_s, fs, x.shape[1])
    return w.feed(x, t0)


class Normalizer:
    """Map raw metric values into [0,1].

    Three methods: a fixed linear range, a rolling min/max over a trailing
    time window (with a small headroom margin so fresh extremes do not pin
    the ends), and a logistic squash. Output is always clamped to [0,1];
    a rolling window with zero spread maps to 0.5.
    """

    def __init__(self, method: str, **params):
        self.method = method
        self.params = params
        self._history: deque = deque()

    @classmethod
    def fixed(cls, lo: float, hi: float) -> "Normalizer":
        if not lo < hi:
            raise ConfigurationError(f"fixed range requires lo < hi, got ({lo}, {hi})")
        return cls("fixed", lo=lo, hi=hi)

    @classmethod
    def rolling_minmax(cls, window_s: float = 60.0, margin: float = 0.05) -> "Normalizer":
        if window_s <= 0:
            raise ConfigurationError("window_s must be > 0")
        return cls("rolling_minmax", window_s=window_s, margin=margin)

    @classmethod
    def logistic(cls, center: float = 0.0, slope: float = 1.0) -> "Normalizer":
        return cls("logistic", center=center, slope=slope)

    def __call__(self, raw: float, t: float = 0.0) -> float:
        if self.method == "fixed":
            lo, hi = self.params["lo"], self.params["hi"]
            v = (raw - lo) / (hi - lo)
        elif self.method == "logistic":
            z = self.params["slope"] * (raw - self.params["center"])
            v = float(scipy.special.expit(z))
        elif self.method == "rolling_minmax":
            self._history.append((t, raw))
            horizon = t - self.params["window_s"]
            while self._history and self._history[0][0] < horizon:
                self._history.popleft()
            values = [v for _, v in self._history]
            lo, hi = min(values), max(values)
            span = hi - lo
            if span < 1e-12:
                return 0.5
            m = self.params["margin"] * span
            v = (raw - (lo - m)) / (span + 2 * m)
        else:
            raise ConfigurationError(f"unknown normalizer method {self.method!r}")
        return float(np.clip(v, 0.0, 1.0))

    @classmethod
    def from_config(cls, cfg: dict | None) -> "Normalizer":
        """Build from a config mapping like {"method": "fixed", "lo": 0, "hi": 10}."""
        if cfg is None:
            return cls.rolling_minmax()
        kind = cfg.get("method", "rolling_minmax")
        args = {k: v for k, v in cfg.items() if k != "method"}
        factory = {
            "fixed": cls.fixed,
            "rolling_minmax": cls.rolling_minmax,
            "logistic": cls.logistic,
        }.get(kind)
        if factory is None:
            raise ConfigurationError(f"unknown normalizer method {kind!r}")
        return factory(**args)
