/**
 * The stock avatar shipped with the core, transcribed verbatim so the
 * dashboard can place anchors before any config file is loaded. A test pins
 * this against a fixture exported from the core; edit that side first.
 */

import type { AvatarConfigDoc } from "./avatarView.js";

export const DEFAULT_AVATAR: AvatarConfigDoc = {
  avatar_id: "tobe",
  anchors: [
    { id: "head", x: 0.5, y: 0.12, size: 0.18 },
    { id: "forehead", x: 0.5, y: 0.2, size: 0.14 },
    { id: "eyes", x: 0.5, y: 0.26, size: 0.1 },
    { id: "chest", x: 0.5, y: 0.48, size: 0.16 },
    { id: "torso", x: 0.5, y: 0.62, size: 0.22 },
  ],
  timelines: [
    {
      id: "pulse",
      sprite: "heart",
      keys: [
        { phase: 0.0, sx: 1.0, sy: 1.0, rot: 0.0, tx: 0.0, ty: 0.0 },
        { phase: 0.35, sx: 1.35, sy: 1.35, rot: 0.0, tx: 0.0, ty: 0.0 },
        { phase: 1.0, sx: 1.0, sy: 1.0, rot: 0.0, tx: 0.0, ty: 0.0 },
      ],
    },
    {
      id: "inflate",
      sprite: "lungs",
      keys: [
        { phase: 0.0, sx: 1.0, sy: 1.0, rot: 0.0, tx: 0.0, ty: 0.0 },
        { phase: 1.0, sx: 1.5, sy: 1.5, rot: 0.0, tx: 0.0, ty: 0.0 },
      ],
    },
    {
      id: "bloom",
      sprite: "flower",
      keys: [
        { phase: 0.0, sx: 0.1, sy: 0.1, rot: 0.0, tx: 0.0, ty: 0.0 },
        { phase: 1.0, sx: 1.0, sy: 1.0, rot: 0.0, tx: 0.0, ty: 0.0 },
      ],
    },
    {
      id: "spin",
      sprite: "cog",
      keys: [
        { phase: 0.0, sx: 1.0, sy: 1.0, rot: 0.0, tx: 0.0, ty: 0.0 },
        {
          phase: 0.3333333333333333,
          sx: 1.0,
          sy: 1.0,
          rot: 2.0943951023931953,
          tx: 0.0,
          ty: 0.0,
        },
        {
          phase: 0.6666666666666666,
          sx: 1.0,
          sy: 1.0,
          rot: 4.1887902047863905,
          tx: 0.0,
          ty: 0.0,
        },
        {
          phase: 1.0,
          sx: 1.0,
          sy: 1.0,
          rot: 6.283185307179586,
          tx: 0.0,
          ty: 0.0,
        },
      ],
    },
  ],
  bindings: [
    {
      metric: "HEART_RATE",
      anchor: "chest",
      timeline: "pulse",
      mode: "PERIODIC",
      duration_s: 0.6,
    },
    { metric: "RESPIRATION", anchor: "torso", timeline: "inflate", mode: "CONTINUOUS" },
    {
      metric: "CARDIAC_COHERENCE",
      anchor: "forehead",
      timeline: "bloom",
      mode: "CONTINUOUS",
    },
    { metric: "WORKLOAD", anchor: "head", timeline: "spin", mode: "CONTINUOUS" },
  ],
};
