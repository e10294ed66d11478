/**
 * Client-side mirror of the core's timeline semantics.
 *
 * The animator needs to preview a recording before (and after) uploading it,
 * and the preview must show exactly what the core will render once the
 * timeline is live. So the evaluation rules here -- clamping, exact keyframe
 * hits, piecewise-linear interpolation, shortest-arc rotation -- are a
 * faithful port of the core's evaluator, and the gesture-to-timeline recorder
 * reproduces its rescaling and decimation rules as well.
 */

import type { WireKeyframe, WireTimeline } from "./types.js";

/** The core caps recorded timelines at this many keyframes. */
export const MAX_KEYFRAMES = 64;

export interface Transform {
  sx: number;
  sy: number;
  rot: number;
  tx: number;
  ty: number;
}

export const IDENTITY: Transform = { sx: 1, sy: 1, rot: 0, tx: 0, ty: 0 };

const TWO_PI = 2 * Math.PI;

/** Interpolate an angle along the shortest arc (3 rad -> -3 rad crosses pi). */
function lerpAngle(a: number, b: number, u: number): number {
  let delta = (b - a + Math.PI) % TWO_PI;
  if (delta < 0) delta += TWO_PI; // JS % keeps the sign of the dividend
  return a + u * (delta - Math.PI);
}

/**
 * Piecewise-linear transform at the given phase, clamped to [0, 1].
 * Exact at keyframes.
 */
export function evaluateTimeline(tl: WireTimeline, phase: number): Transform {
  const p = Math.min(Math.max(phase, 0), 1);
  const keys = tl.keys;
  let lo = keys[0];
  let hi: WireKeyframe | null = null;
  for (const kf of keys) {
    if (kf.phase === p) {
      return { sx: kf.sx, sy: kf.sy, rot: kf.rot, tx: kf.tx, ty: kf.ty };
    }
    if (kf.phase > p) {
      hi = kf;
      break;
    }
    lo = kf;
  }
  if (hi === null) {
    const last = keys[keys.length - 1];
    return { sx: last.sx, sy: last.sy, rot: last.rot, tx: last.tx, ty: last.ty };
  }
  const u = (p - lo.phase) / (hi.phase - lo.phase);
  return {
    sx: lo.sx + u * (hi.sx - lo.sx),
    sy: lo.sy + u * (hi.sy - lo.sy),
    rot: lerpAngle(lo.rot, hi.rot, u),
    tx: lo.tx + u * (hi.tx - lo.tx),
    ty: lo.ty + u * (hi.ty - lo.ty),
  };
}

/** Round half to even, matching the core's decimation index arithmetic. */
function roundHalfEven(x: number): number {
  const floor = Math.floor(x);
  const frac = x - floor;
  if (frac > 0.5) return floor + 1;
  if (frac < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}

/**
 * Turn a recorded gesture into a wire timeline, mirroring the core's rules:
 * at least 2 samples, strictly increasing times, time rescaled to phase
 * [0, 1], and gestures longer than MAX_KEYFRAMES samples decimated by
 * uniform index selection that always keeps both endpoints.
 *
 * Throws RangeError on the same inputs the core rejects, so a bad gesture
 * never reaches the wire.
 */
export function recordTimeline(
  samples: ReadonlyArray<readonly [number, Transform]>,
  timelineId: string,
  spriteRef: string,
  maxKeyframes: number = MAX_KEYFRAMES,
): WireTimeline {
  if (samples.length < 2) {
    throw new RangeError(`need at least 2 gesture samples, got ${samples.length}`);
  }
  for (let i = 1; i < samples.length; i++) {
    if (samples[i][0] <= samples[i - 1][0]) {
      throw new RangeError("gesture sample times must be strictly increasing");
    }
  }
  const n = samples.length;
  let idx: number[];
  if (n > maxKeyframes) {
    const step = (n - 1) / (maxKeyframes - 1);
    idx = [];
    for (let k = 0; k < maxKeyframes; k++) {
      idx.push(roundHalfEven(k * step));
    }
    idx[0] = 0;
    idx[maxKeyframes - 1] = n - 1; // endpoints survive decimation exactly
  } else {
    idx = Array.from({ length: n }, (_, i) => i);
  }
  const t0 = samples[0][0];
  const span = samples[n - 1][0] - t0;
  const keys: WireKeyframe[] = idx.map((i) => {
    const [t, tr] = samples[i];
    return {
      phase: (t - t0) / span,
      sx: tr.sx,
      sy: tr.sy,
      rot: tr.rot,
      tx: tr.tx,
      ty: tr.ty,
    };
  });
  return { id: timelineId, sprite: spriteRef, keys };
}
