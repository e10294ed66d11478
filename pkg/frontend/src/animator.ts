/**
 * Gesture animator: press record, move the sprite with pointer gestures,
 * release, scrub the preview, upload.
 *
 * While recording is active the animator samples the current gesture
 * transform on its own timer at 60 Hz (never below 30 -- pointer events are
 * too bursty to rely on, so sampling is decoupled from input). Stopping turns
 * the samples into a timeline under the same rules the core applies, and the
 * scrub preview evaluates that timeline with the mirrored evaluator, so what
 * the user scrubs is exactly what the core will play back.
 */

import type { ControlChannel } from "./bridgeClient.js";
import type { AckMessage, WireTimeline } from "./types.js";
import type { Transform } from "./timeline.js";
import { evaluateTimeline, IDENTITY, recordTimeline } from "./timeline.js";

/** Default sampling rate while recording; must stay >= 30. */
export const SAMPLE_HZ = 60;

export interface AnimatorOptions {
  sampleHz?: number;
  /** Timer/clock injection for tests; defaults to real interval + Date. */
  schedule?: (cb: () => void, ms: number) => unknown;
  cancel?: (handle: unknown) => void;
  now?: () => number;
}

/** A two-pointer gesture: pinch scales, twist rotates, drag translates. */
export function gestureTransform(
  start: ReadonlyArray<readonly [number, number]>,
  current: ReadonlyArray<readonly [number, number]>,
): Transform {
  if (start.length === 0 || start.length !== current.length) return IDENTITY;
  const mid = (pts: ReadonlyArray<readonly [number, number]>) => {
    let x = 0;
    let y = 0;
    for (const [px, py] of pts) {
      x += px;
      y += py;
    }
    return [x / pts.length, y / pts.length] as const;
  };
  const [sx0, sy0] = mid(start);
  const [cx0, cy0] = mid(current);
  let scale = 1;
  let rot = 0;
  if (start.length >= 2) {
    const [ax, ay] = start[0];
    const [bx, by] = start[1];
    const [px, py] = current[0];
    const [qx, qy] = current[1];
    const d0 = Math.hypot(bx - ax, by - ay);
    const d1 = Math.hypot(qx - px, qy - py);
    if (d0 > 0) scale = d1 / d0;
    rot = Math.atan2(qy - py, qx - px) - Math.atan2(by - ay, bx - ax);
  }
  return { sx: scale, sy: scale, rot, tx: cx0 - sx0, ty: cy0 - sy0 };
}

export class Animator {
  private readonly sampleHz: number;
  private readonly schedule: (cb: () => void, ms: number) => unknown;
  private readonly cancel: (handle: unknown) => void;
  private readonly clock: () => number;

  private sprite: string | null = null;
  private timer: unknown = null;
  private current: Transform = IDENTITY;
  private samples: Array<[number, Transform]> = [];
  private recorded: WireTimeline | null = null;

  constructor(opts: AnimatorOptions = {}) {
    this.sampleHz = Math.max(30, opts.sampleHz ?? SAMPLE_HZ);
    this.schedule = opts.schedule ?? ((cb, ms) => setInterval(cb, ms));
    this.cancel = opts.cancel ?? ((h) => clearInterval(h as never));
    this.clock = opts.now ?? (() => Date.now() / 1000);
  }

  get selectedSprite(): string | null {
    return this.sprite;
  }

  get recording(): boolean {
    return this.timer !== null;
  }

  get sampleCount(): number {
    return this.samples.length;
  }

  /** The last completed recording, if any. */
  get timeline(): WireTimeline | null {
    return this.recorded;
  }

  select(sprite: string): void {
    this.sprite = sprite;
  }

  /** The input layer pushes the live gesture transform here at any rate. */
  setTransform(tr: Transform): void {
    this.current = tr;
  }

  start(): void {
    if (this.sprite === null) {
      throw new Error("select a sprite before recording");
    }
    if (this.timer !== null) return;
    this.samples = [];
    this.recorded = null;
    this.current = IDENTITY;
    this.sampleNow();
    this.timer = this.schedule(() => this.sampleNow(), 1000 / this.sampleHz);
  }

  /**
   * Capture one sample of the live transform. The recording timer calls this
   * on schedule; tests drive it directly with explicit times.
   */
  sampleNow(t: number = this.clock()): void {
    const last = this.samples[this.samples.length - 1];
    if (last !== undefined && t <= last[0]) return; // clock stall; keep strict order
    this.samples.push([t, { ...this.current }]);
  }

  /**
   * Finish the recording and build its timeline. Throws RangeError on a
   * gesture with fewer than 2 samples (a motionless tap), mirroring the rule
   * the core would apply -- nothing that short ever reaches the wire.
   */
  stop(timelineId = "recorded"): WireTimeline {
    if (this.timer !== null) {
      this.cancel(this.timer);
      this.timer = null;
    }
    const tl = recordTimeline(this.samples, timelineId, this.sprite ?? "sprite");
    this.recorded = tl;
    return tl;
  }

  /** Scrub preview: the recorded timeline evaluated at phase [0, 1]. */
  preview(phase: number): Transform {
    if (this.recorded === null) {
      throw new Error("nothing recorded yet");
    }
    return evaluateTimeline(this.recorded, phase);
  }

  /** Upload the recording for a user; resolves with the core's ack. */
  upload(client: ControlChannel, userId: string): Promise<AckMessage> {
    if (this.recorded === null) {
      return Promise.reject(new Error("nothing recorded yet"));
    }
    return client.request({
      type: "timeline_upload",
      user_id: userId,
      timeline: this.recorded,
    });
  }
}
