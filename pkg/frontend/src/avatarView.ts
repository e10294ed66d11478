/**
 * Avatar rendering: a silhouette with anchor overlays, each anchor showing
 * its bound sprite under the transform the core computed.
 *
 * Layout is a pure function of (avatar config, latest render frame). The
 * frame already carries final transforms -- scale, rotation, translation,
 * staleness -- so this module only maps them onto screen coordinates. It
 * never extrapolates a metric and never animates on its own; if the stream
 * stops, the picture freezes exactly where the core left it.
 */

import type { RenderFrame } from "./types.js";

// Client copy of the avatar config document schema (anchor positions are not
// on the wire; the dashboard loads the same JSON config the session uses).

export interface AnchorDoc {
  id: string;
  x: number;
  y: number;
  size: number;
}

export interface TimelineDoc {
  id: string;
  sprite: string;
  keys: Array<{
    phase: number;
    sx: number;
    sy: number;
    rot: number;
    tx: number;
    ty: number;
  }>;
}

export interface BindingDoc {
  metric: string;
  anchor: string;
  timeline: string;
  mode: "CONTINUOUS" | "PERIODIC";
  duration_s?: number;
}

export interface AvatarConfigDoc {
  avatar_id: string;
  anchors: AnchorDoc[];
  timelines: TimelineDoc[];
  bindings: BindingDoc[];
}

/** One sprite ready to draw: screen-space placement in [0,1] x [0,1]. */
export interface SpriteDraw {
  anchorId: string;
  sprite: string;
  /** Anchor centre plus the frame's translation (anchor-size units). */
  x: number;
  y: number;
  /** On-screen extent: anchor size times the frame's scale. */
  width: number;
  height: number;
  /** Radians, screen clockwise. */
  rotation: number;
  stale: boolean;
}

/**
 * Compose the draw list for one avatar. Frame items whose anchor is missing
 * from the config are skipped (a config/session mismatch must not crash the
 * view); anchors with no frame item simply draw nothing.
 */
export function layoutFrame(
  config: AvatarConfigDoc,
  frame: RenderFrame | null,
): SpriteDraw[] {
  if (frame === null) return [];
  const anchors = new Map(config.anchors.map((a) => [a.id, a]));
  const draws: SpriteDraw[] = [];
  for (const item of frame.items) {
    const anchor = anchors.get(item.anchor);
    if (anchor === undefined) continue;
    draws.push({
      anchorId: item.anchor,
      sprite: item.sprite,
      x: anchor.x + item.tx * anchor.size,
      y: anchor.y + item.ty * anchor.size,
      width: anchor.size * item.sx,
      height: anchor.size * item.sy,
      rotation: item.rot,
      stale: item.stale,
    });
  }
  return draws;
}
