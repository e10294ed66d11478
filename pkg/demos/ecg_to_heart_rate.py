"""Generate a noisy ECG with a breathing swing, detect beats, report HR.

Run:  python3 demos/ecg_to_heart_rate.py
"""

import numpy as np

from tobe.metrics import detect_r_peaks, heart_rate
from tobe.synth import EcgSpec, gen_ecg

FS = 250.0
DURATION_S = 60.0

spec = EcgSpec(
    fs=FS,
    bpm_profile=[(0.0, 62.0), (30.0, 62.0), (45.0, 85.0)],  # a startle at 30 s
    rsa_depth=5.0,        # +/- bpm swing with breathing
    rsa_period_s=10.0,
    noise_uV=25.0,
)

chunks, truth = gen_ecg(spec, DURATION_S, seed=42)
beats = detect_r_peaks(chunks, FS)
series = heart_rate(beats)

det = np.array([b.t for b in beats])
hits = sum(bool(np.any(np.abs(det - t) < 0.1)) for t in truth)
print(f"ground truth {len(truth)} beats, detected {len(det)} "
      f"({hits} matched within 100 ms)")

print("\n  t      bpm   (one row per 5 s)")
for mv in series:
    if mv.t % 5 < 60.0 / mv.raw:  # first beat after each 5 s mark
        bar = "#" * int((mv.raw - 50) / 2)
        print(f"{mv.t:6.2f} {mv.raw:6.1f}  {bar}")

ibis = np.diff(det)
print(f"\nIBI range {ibis.min() * 1000:.0f}-{ibis.max() * 1000:.0f} ms, "
      f"mean {ibis.mean() * 1000:.0f} ms")
