/**
 * Wire types for the bridge WebSocket.
 *
 * Everything here mirrors the JSON frames the `tobe run --bridge` process
 * emits and accepts, field for field. The dashboard never invents fields and
 * never computes metric values locally; these shapes are the whole contract.
 */

/** Metric identifiers as they appear in `metric_id` fields. */
export type MetricId =
  | "HEART_RATE"
  | "AROUSAL"
  | "RESPIRATION"
  | "VIGILANCE"
  | "WORKLOAD"
  | "MEDITATION"
  | "VALENCE"
  | "CARDIAC_COHERENCE"
  | "PAIR_SYNCHRONY";

export const ALL_METRICS: readonly MetricId[] = [
  "HEART_RATE",
  "AROUSAL",
  "RESPIRATION",
  "VIGILANCE",
  "WORKLOAD",
  "MEDITATION",
  "VALENCE",
  "CARDIAC_COHERENCE",
  "PAIR_SYNCHRONY",
];

/** Relaxation protocol phases, in their canonical order. */
export type PhaseId = "GUIDED" | "SOLO" | "SYNC";

/** One sprite placement inside a render frame. */
export interface RenderItem {
  anchor: string;
  sprite: string;
  sx: number;
  sy: number;
  rot: number;
  tx: number;
  ty: number;
  stale: boolean;
}

/** The `frame` payload of a render message. */
export interface RenderFrame {
  avatar_id: string;
  items: RenderItem[];
}

// -- server -> dashboard ------------------------------------------------------

export interface MetricMessage {
  type: "metric";
  t: number;
  /** null for pair-level metrics (PAIR_SYNCHRONY belongs to both users). */
  user_id: string | null;
  metric_id: MetricId;
  raw: number;
  normalized: number;
}

export interface RenderMessage {
  type: "render";
  t: number;
  user_id: string | null;
  frame: RenderFrame;
}

export interface ProtocolMessage {
  type: "protocol";
  t: number;
  phase_id: PhaseId;
}

export interface GaugeMessage {
  type: "gauge";
  t: number;
  level: number;
}

export interface BeatMessage {
  type: "beat";
  t: number;
  user_id: string;
}

/** Reply to a control message, correlated by the client-chosen `id`. */
export interface AckMessage {
  type: "ack";
  id: unknown;
  ok: boolean;
  error?: string;
}

export type ServerMessage =
  | MetricMessage
  | RenderMessage
  | ProtocolMessage
  | GaugeMessage
  | BeatMessage
  | AckMessage;

// -- dashboard -> server ------------------------------------------------------

/** A timeline keyframe in wire form. */
export interface WireKeyframe {
  phase: number;
  sx: number;
  sy: number;
  rot: number;
  tx: number;
  ty: number;
}

/** A timeline in wire form, as `timeline_upload` carries it. */
export interface WireTimeline {
  id: string;
  sprite: string;
  keys: WireKeyframe[];
}

export type BindingMode = "CONTINUOUS" | "PERIODIC";

/**
 * Bind a metric to an anchor. `timeline_id` and `mode` may be omitted, in
 * which case the core re-uses whatever the anchor's current binding has;
 * dropping onto an unbound anchor without naming them is a (negative-ack'd)
 * error.
 */
export interface BindRequest {
  type: "bind_request";
  id: unknown;
  user_id: string;
  metric_id: MetricId;
  anchor_id: string;
  timeline_id?: string;
  mode?: BindingMode;
  duration_s?: number;
}

export interface TimelineUpload {
  type: "timeline_upload";
  id: unknown;
  user_id: string;
  timeline: WireTimeline;
}

/** Resets the named user's mapper state (playbacks, smoothing, holds). */
export interface CalibrationCommand {
  type: "calibration_command";
  id: unknown;
  user_id: string;
}

export interface SessionCommand {
  type: "session_command";
  id: unknown;
  action: "start" | "pause" | "resume" | "stop";
}

export type ControlMessage =
  | BindRequest
  | TimelineUpload
  | CalibrationCommand
  | SessionCommand;

/** A control message before the client stamps its correlation id on it. */
export type ControlBody =
  | Omit<BindRequest, "id">
  | Omit<TimelineUpload, "id">
  | Omit<CalibrationCommand, "id">
  | Omit<SessionCommand, "id">;

// -- parsing ------------------------------------------------------------------

const SERVER_TYPES = new Set([
  "metric",
  "render",
  "protocol",
  "gauge",
  "beat",
  "ack",
]);

/**
 * Parse one WebSocket text frame into a ServerMessage, or null if it is not
 * one. Unknown message types are dropped rather than thrown on, so a newer
 * core can add message kinds without breaking older dashboards.
 */
export function parseServerMessage(text: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return null;
  }
  const type = (doc as { type?: unknown }).type;
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) {
    return null;
  }
  return doc as ServerMessage;
}
