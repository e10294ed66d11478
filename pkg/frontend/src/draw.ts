/**
 * Canvas drawing helpers. Sprites are drawn as glyphs so the dashboard works
 * with no image assets; uploaded artwork would slot in here by sprite name.
 */

import type { SpriteDraw } from "./avatarView.js";

const GLYPHS: Record<string, string> = {
  heart: "❤",
  lungs: "\u{1fac1}",
  flower: "✿",
  cog: "⚙",
  sprite: "◉",
};

const COLORS: Record<string, string> = {
  heart: "#e2575b",
  lungs: "#6fa8dc",
  flower: "#d77fb4",
  cog: "#c9b458",
  sprite: "#8899a6",
};

export function glyphFor(sprite: string): string {
  return GLYPHS[sprite] ?? GLYPHS.sprite;
}

/** Draw one sprite glyph; `stale` renders it faded. */
export function drawGlyph(
  ctx: CanvasRenderingContext2D,
  sprite: string,
  x: number,
  y: number,
  size: number,
  rotation: number,
  stale: boolean,
): void {
  ctx.save();
  ctx.translate(x, y);
  ctx.rotate(rotation);
  ctx.globalAlpha = stale ? 0.3 : 1.0;
  ctx.fillStyle = COLORS[sprite] ?? COLORS.sprite;
  ctx.font = `${Math.max(6, size)}px system-ui, sans-serif`;
  ctx.textAlign = "center";
  ctx.textBaseline = "middle";
  ctx.fillText(glyphFor(sprite), 0, 0);
  ctx.restore();
}

/** A simple standing silhouette filling a w x h canvas. */
export function drawSilhouette(
  ctx: CanvasRenderingContext2D,
  w: number,
  h: number,
): void {
  ctx.save();
  ctx.fillStyle = "#222b33";
  // head
  ctx.beginPath();
  ctx.ellipse(0.5 * w, 0.14 * h, 0.11 * w, 0.085 * h, 0, 0, 2 * Math.PI);
  ctx.fill();
  // trunk
  ctx.beginPath();
  ctx.moveTo(0.3 * w, 0.3 * h);
  ctx.quadraticCurveTo(0.5 * w, 0.22 * h, 0.7 * w, 0.3 * h);
  ctx.lineTo(0.75 * w, 0.8 * h);
  ctx.quadraticCurveTo(0.5 * w, 0.9 * h, 0.25 * w, 0.8 * h);
  ctx.closePath();
  ctx.fill();
  ctx.restore();
}

/** Render the draw list produced by layoutFrame onto a w x h canvas. */
export function paintDraws(
  ctx: CanvasRenderingContext2D,
  draws: readonly SpriteDraw[],
  w: number,
  h: number,
): void {
  for (const d of draws) {
    drawGlyph(ctx, d.sprite, d.x * w, d.y * h, d.width * w, d.rotation, d.stale);
  }
}

/** Expanding, fading rings; ages in [0, 1). */
export function drawRipples(
  ctx: CanvasRenderingContext2D,
  ages: readonly number[],
  cx: number,
  cy: number,
  maxR: number,
): void {
  ctx.save();
  ctx.strokeStyle = "#e2575b";
  for (const age of ages) {
    ctx.globalAlpha = 1 - age;
    ctx.beginPath();
    ctx.arc(cx, cy, 4 + age * maxR, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.restore();
}
