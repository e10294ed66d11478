"""tobe: real-time physiological signal toolkit.

Streaming transport, DSP, metric extraction, synthetic signal generators,
avatar feedback mapping and a two-user relaxation session runner.  Typical
entry points:

    from tobe import resolve_streams, Inlet            # live data
    from tobe import gen_ecg, record_csv, replay_csv   # synthesis and files
    from tobe import load_session_file, run_session    # orchestration

The full surface lives in the topic modules: :mod:`tobe.dsp`,
:mod:`tobe.metrics`, :mod:`tobe.synth`, :mod:`tobe.transport`,
:mod:`tobe.mapper`, :mod:`tobe.session` and :mod:`tobe.bridge`.
"""

from .errors import (
    ConfigurationError,
    ContractError,
    FramingError,
    ReplayError,
    StreamClosedError,
    TobeError,
)
from .types import (
    BeatEvent,
    BlinkEvent,
    BreathPhase,
    ClockOffset,
    MetricId,
    MetricValue,
    Modality,
    SampleChunk,
    StreamMeta,
)
from .dsp import (
    BandSpec,
    Normalizer,
    SlidingWindower,
    StreamingFilter,
    Window,
    band_power,
    msc,
    plv,
)
from .synth import (
    CouplingSpec,
    EcgSpec,
    EegSpec,
    concat_chunks,
    gen_ecg,
    gen_eda,
    gen_eeg,
    gen_respiration,
    read_recording,
    record_csv,
    replay_csv,
)
from .metrics import (
    ArousalExtractor,
    CardiacCoherenceTracker,
    EegMetricsPipeline,
    HeartRateEstimator,
    PairSynchronyTracker,
    RespirationExtractor,
    RPeakDetector,
)
from .transport import (
    Inlet,
    Outlet,
    ResolvedStream,
    measure_clock_offset,
    open_inlet,
    open_outlet,
    resolve_streams,
)
from .mapper import (
    AvatarConfig,
    AvatarMapper,
    BindingMode,
    Keyframe,
    Timeline,
    Transform,
    default_avatar_config,
    evaluate_timeline,
    load_avatar_config,
    record_timeline,
    save_avatar_config,
)
from .session import (
    PhaseId,
    RelaxationProtocol,
    SessionEvent,
    SimulatedClock,
    WallClock,
    load_session,
    load_session_file,
    run_session,
    write_event_log,
)
from .bridge import BridgeServer

__version__ = "0.1.0"

__all__ = [
    # errors
    "TobeError", "ConfigurationError", "ContractError", "FramingError",
    "StreamClosedError", "ReplayError",
    # core types
    "Modality", "MetricId", "StreamMeta", "SampleChunk", "MetricValue",
    "BeatEvent", "BlinkEvent", "BreathPhase", "ClockOffset",
    # dsp
    "BandSpec", "Window", "StreamingFilter", "Normalizer", "SlidingWindower",
    "band_power", "plv", "msc",
    # synthesis and recordings
    "EcgSpec", "EegSpec", "CouplingSpec", "gen_ecg", "gen_respiration",
    "gen_eeg", "gen_eda", "concat_chunks", "record_csv", "read_recording",
    "replay_csv",
    # metric extraction
    "RPeakDetector", "HeartRateEstimator", "RespirationExtractor",
    "CardiacCoherenceTracker", "PairSynchronyTracker", "EegMetricsPipeline",
    "ArousalExtractor",
    # transport
    "Outlet", "Inlet", "ResolvedStream", "open_outlet", "open_inlet",
    "resolve_streams", "measure_clock_offset",
    # avatar mapping
    "Transform", "Keyframe", "Timeline", "BindingMode", "AvatarConfig",
    "AvatarMapper", "evaluate_timeline", "record_timeline",
    "default_avatar_config", "load_avatar_config", "save_avatar_config",
    # sessions
    "PhaseId", "RelaxationProtocol", "SessionEvent", "SimulatedClock",
    "WallClock", "load_session", "load_session_file", "run_session",
    "write_event_log",
    # dashboard bridge
    "BridgeServer",
]
