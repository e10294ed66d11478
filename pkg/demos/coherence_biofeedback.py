#!/usr/bin/env python3
"""Cardiac coherence, the number behind the relaxation gauge.

Two simulated minutes: during the first the "user" breathes erratically and
their heart rate wanders on its own; during the second they settle into a
slow 10 s rhythm and the heart follows. The tracker's score should climb
from near the floor toward 1.
"""

import numpy as np

from tobe.metrics import CardiacCoherenceTracker

RELAX_AT_S = 60.0
END_S = 120.0

rng = np.random.default_rng(3)
tracker = CardiacCoherenceTracker()

# breath samples at 2 Hz, heart-rate samples per beat
wander = np.cumsum(0.3 * rng.standard_normal(2 * int(END_S))) * 0.1

tk = 0.0
hr_feed = []
while tk < END_S:
    if tk < RELAX_AT_S:
        bpm = 68.0 + 4.0 * wander[int(2 * tk)] + 1.5 * rng.standard_normal()
    else:
        bpm = 68.0 + 6.0 * np.sin(2 * np.pi * tk / 10.0)
    hr_feed.append((tk, bpm))
    tk += 60.0 / max(bpm, 40.0)

br_feed = []
for tb in np.arange(0.0, END_S, 0.5):
    if tb < RELAX_AT_S:
        infl = 0.8 * np.sin(2 * np.pi * tb / 3.1) + 0.4 * rng.standard_normal()
    else:
        infl = np.sin(2 * np.pi * tb / 10.0)
    br_feed.append((tb, infl))

hi = bi = 0
print(" time   coherence")
for sec in range(1, int(END_S) + 1):
    while hi < len(hr_feed) and hr_feed[hi][0] <= sec:
        tracker.add_heart_rate(*hr_feed[hi]); hi += 1
    while bi < len(br_feed) and br_feed[bi][0] <= sec:
        tracker.add_breath(*br_feed[bi]); bi += 1
    for mv in tracker.advance(float(sec)):
        if int(mv.t) % 5 == 0:
            gauge = "=" * int(30 * mv.raw)
            tag = "  <- settles into slow breathing" if mv.t == RELAX_AT_S else ""
            print(f"{mv.t:5.0f} s  {mv.raw:5.2f} {gauge}{tag}")
