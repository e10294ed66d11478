"""EEG window metrics on synthetic multichannel data.

Builds three 10 s scenes -- drowsy, focused, and meditative -- and prints
what each extractor reads off them, plus blink detection on a frontal
channel. All signals are band-limited noise, so the differences between
scenes are exactly the band powers and couplings we put in.
"""

import numpy as np

from tobe.dsp import BandSpec, Window
from tobe.metrics import (
    DEFAULT_LAYOUT,
    detect_blinks,
    meditation,
    valence,
    vigilance,
    workload,
)
from tobe.synth import CouplingSpec, EegComponent, EegSpec, concat_chunks, gen_eeg
from tobe.types import SampleChunk

FS = 250.0

floor = EegComponent(30.0, 56.0, 3.0)          # broadband background
theta = EegComponent(7.0, 6.0, 8.0)            # 4-10 Hz
beta = EegComponent(17.5, 5.0, 8.0)            # 15-20 Hz
alpha = EegComponent(10.0, 3.0, 8.0)

scenes = {
    "drowsy": EegSpec(components=[floor, theta,
                                  EegComponent(17.5, 5.0, 2.0)]),
    "focused": EegSpec(components=[floor, beta,
                                   EegComponent(7.0, 6.0, 2.0)]),
    "meditative": EegSpec(
        components=[floor],
        coupling=[CouplingSpec(DEFAULT_LAYOUT.front + DEFAULT_LAYOUT.rear,
                               0.9, BandSpec(8.0, 13.0), 12.0)]),
}

print(f"{'scene':<12} {'vigilance':>9} {'workload':>9} "
      f"{'valence':>9} {'meditation':>10}")
for name, spec in scenes.items():
    chunks, _ = gen_eeg(spec, 10.0, seed=hash(name) % 1000)
    _, xs = concat_chunks(chunks)
    win = Window(xs, FS)
    print(f"{name:<12} {vigilance(win).raw:9.2f} {workload(win).raw:9.2f} "
          f"{valence(win).raw:9.2f} {meditation(win).raw:10.2f}")

# blinks ride on the frontal channels
spec = EegSpec(components=[EegComponent(31.0, 58.0, 10.0)],
               blink_rate_per_min=15.0)
chunks, truth = gen_eeg(spec, 60.0, seed=8)
fp1 = spec.channel_labels.index("FP1")
mono = [SampleChunk(c.timestamps, c.samples[:, [fp1]]) for c in chunks]
events = detect_blinks(mono, FS)
print(f"\nblinks: {len(truth.blink_times)} injected, {len(events)} detected")
print("  at " + ", ".join(f"{ev.t:.2f}s" for ev in events[:8])
      + (" ..." if len(events) > 8 else ""))
