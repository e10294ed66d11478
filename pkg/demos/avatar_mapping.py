"""Drive the avatar mapper with a hand-rolled metric feed.

The default avatar binds heart rate to a chest pulse (each beat replays a
short scale keyframe animation), breathing to the torso, coherence to a
flower bloom on the forehead, and workload to a head spin. Here we tick the
mapper at 20 Hz and print the chest scale so the heartbeat is visible in the
terminal.
"""

import math

from tobe.mapper import AvatarMapper, default_avatar_config
from tobe.types import MetricId, MetricValue

config = default_avatar_config()
print(f"avatar '{config.avatar_id}': "
      f"{len(config.anchors)} anchors, {len(config.timelines)} timelines, "
      f"{len(config.bindings)} bindings")
for b in config.bindings:
    extra = f" ({b.duration_s:g}s)" if b.duration_s else ""
    print(f"  {b.metric_id.value:<18} -> {b.anchor_id}/{b.timeline_id} "
          f"[{b.mode.value}{extra}]")

mapper = AvatarMapper(config)

beat_times = [0.4, 1.3, 2.2, 3.1]
print("\n t     chest scale  (beats at " +
      ", ".join(f"{t}s" for t in beat_times) + ")")
for step in range(80):
    now = step * 0.05
    events = [(MetricId.HEART_RATE, tb) for tb in beat_times
              if now - 0.05 < tb <= now]
    breath = 0.5 + 0.5 * math.sin(2 * math.pi * now / 10.0)
    frame = mapper.tick(now, {
        MetricId.RESPIRATION: MetricValue(MetricId.RESPIRATION, now,
                                          breath, breath),
    }, events=events)
    chest = next(it for it in frame.items if it.anchor_id == "chest")
    if step % 2 == 0:
        bar = "*" * int(40 * (chest.transform.scale_x - 0.95))
        print(f"{now:4.2f}  {chest.transform.scale_x:6.3f}      {bar}")
