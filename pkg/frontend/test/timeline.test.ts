import { describe, expect, it } from "vitest";

import { evaluateTimeline, MAX_KEYFRAMES, recordTimeline } from "../src/timeline.js";
import type { WireTimeline } from "../src/types.js";

const RAMP: WireTimeline = {
  id: "ramp",
  sprite: "sprite",
  keys: [
    { phase: 0, sx: 1, sy: 2, rot: 0, tx: 0, ty: -1 },
    { phase: 0.25, sx: 2, sy: 2, rot: 1, tx: 0.5, ty: 1 },
    { phase: 1, sx: 0, sy: 4, rot: -2, tx: 0.5, ty: 1 },
  ],
};

describe("timeline evaluation mirror", () => {
  it("is exact at keyframes and clamps outside [0, 1]", () => {
    expect(evaluateTimeline(RAMP, 0.25)).toEqual({ sx: 2, sy: 2, rot: 1, tx: 0.5, ty: 1 });
    expect(evaluateTimeline(RAMP, -3).sx).toBe(1);
    expect(evaluateTimeline(RAMP, 7).sx).toBe(0);
  });

  it("interpolates linearly between keyframes", () => {
    const mid = evaluateTimeline(RAMP, 0.125);
    expect(mid.sx).toBeCloseTo(1.5, 12);
    expect(mid.ty).toBeCloseTo(0, 12);
    const late = evaluateTimeline(RAMP, 0.625);
    expect(late.sx).toBeCloseTo(1, 12);
    expect(late.rot).toBeCloseTo(-0.5, 12);
  });

  it("takes the short way around the circle for rotation", () => {
    const wrap: WireTimeline = {
      id: "wrap",
      sprite: "sprite",
      keys: [
        { phase: 0, sx: 1, sy: 1, rot: 3, tx: 0, ty: 0 },
        { phase: 1, sx: 1, sy: 1, rot: -3, tx: 0, ty: 0 },
      ],
    };
    // 3 rad to -3 rad is 0.28 rad across the pi seam, not 6 rad back through 0
    expect(evaluateTimeline(wrap, 0.5).rot).toBeCloseTo(Math.PI, 9);
    expect(evaluateTimeline(wrap, 0.25).rot).toBeCloseTo(3 + (Math.PI - 3) / 2, 9);
  });
});

describe("gesture recording mirror", () => {
  const tr = (sx: number) => ({ sx, sy: sx, rot: 0, tx: 0, ty: 0 });

  it("rescales sample times to phase 0..1", () => {
    const tl = recordTimeline(
      [
        [5, tr(1)],
        [6, tr(2)],
        [9, tr(3)],
      ],
      "tl",
      "heart",
    );
    expect(tl.keys.map((k) => k.phase)).toEqual([0, 0.25, 1]);
    expect(tl.keys.map((k) => k.sx)).toEqual([1, 2, 3]);
  });

  it("decimates long gestures but keeps both endpoints", () => {
    const samples: Array<[number, ReturnType<typeof tr>]> = [];
    for (let i = 0; i <= 500; i++) samples.push([i / 100, tr(1 + i)]);
    const tl = recordTimeline(samples, "long", "heart");
    expect(tl.keys.length).toBe(MAX_KEYFRAMES);
    expect(tl.keys[0].phase).toBe(0);
    expect(tl.keys[0].sx).toBe(1);
    expect(tl.keys[MAX_KEYFRAMES - 1].phase).toBe(1);
    expect(tl.keys[MAX_KEYFRAMES - 1].sx).toBe(501);
    for (let i = 1; i < tl.keys.length; i++) {
      expect(tl.keys[i].phase).toBeGreaterThan(tl.keys[i - 1].phase);
    }
  });

  it("rejects gestures the core would reject", () => {
    expect(() => recordTimeline([[1, tr(1)]], "x", "s")).toThrow(/at least 2/);
    expect(() =>
      recordTimeline(
        [
          [2, tr(1)],
          [2, tr(2)],
        ],
        "x",
        "s",
      ),
    ).toThrow(/strictly increasing/);
  });
});
