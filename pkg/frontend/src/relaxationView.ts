/**
 * View model for the two-user relaxation protocol screen.
 *
 * This is a fold over the bridge stream and nothing else: every displayed
 * number is the verbatim payload of some bridge message, so closing and
 * reopening the dashboard mid-session reproduces the identical view from the
 * replayed stream. The only derived presentation state is the gauge's
 * rising/falling indicator (the wire carries bare levels; the trend falls out
 * of comparing consecutive ones) and the ripple rings, which decay a fixed
 * time after their beat.
 *
 * Widget sourcing: the lungs inflate with normalized RESPIRATION (the raw
 * value is a signal level, not a fraction); the per-user flower bloom is raw
 * CARDIAC_COHERENCE and the shared flower raw PAIR_SYNCHRONY -- both already
 * live on a 0..1 scale where 1.0 must read as fully bloomed, so normalization
 * would distort the endpoints.
 */

import type { PhaseId, ServerMessage } from "./types.js";

/** A ripple ring lives this long (stream seconds) after its beat. */
export const RIPPLE_S = 1.2;

export type GaugeDirection = "RISING" | "FALLING";

/** Level changes smaller than this don't flip the gauge direction. */
const GAUGE_EPS = 1e-9;

export interface UserPanel {
  /** Lungs inflation fraction, 0..1 (normalized RESPIRATION). */
  lungs: number | null;
  lungsStale: boolean;
  /** Flower bloom fraction, 0..1 (raw CARDIAC_COHERENCE). */
  flowerBloom: number | null;
  flowerStale: boolean;
  /** Displayed heart rate (raw HEART_RATE, beats per minute). */
  heartBpm: number | null;
  /** Stream times of recent beats, newest last; feeds the ripple rings. */
  beats: number[];
}

export interface RelaxationSnapshot {
  /** Latest stream time seen on any message. */
  t: number;
  phase: PhaseId | null;
  gauge: { visible: boolean; level: number | null; direction: GaugeDirection };
  users: Record<string, Omit<UserPanel, "beats"> & { ripples: number }>;
  /** Shared flower bloom fraction (raw PAIR_SYNCHRONY), 0..1. */
  sharedFlower: number | null;
}

function emptyPanel(): UserPanel {
  return {
    lungs: null,
    lungsStale: false,
    flowerBloom: null,
    flowerStale: false,
    heartBpm: null,
    beats: [],
  };
}

export class RelaxationView {
  private t = 0;
  private phase: PhaseId | null = null;
  private gaugeLevel: number | null = null;
  private gaugeDirection: GaugeDirection = "RISING";
  private sharedFlower: number | null = null;
  private readonly panels = new Map<string, UserPanel>();

  private panel(userId: string): UserPanel {
    let p = this.panels.get(userId);
    if (p === undefined) {
      p = emptyPanel();
      this.panels.set(userId, p);
    }
    return p;
  }

  apply(msg: ServerMessage): void {
    if ("t" in msg && typeof msg.t === "number" && msg.t > this.t) {
      this.t = msg.t;
    }
    switch (msg.type) {
      case "metric": {
        if (msg.metric_id === "PAIR_SYNCHRONY") {
          this.sharedFlower = msg.raw; // pair-level: arrives with a null user
          break;
        }
        if (msg.user_id === null) break;
        const p = this.panel(msg.user_id);
        if (msg.metric_id === "RESPIRATION") {
          p.lungs = msg.normalized;
        } else if (msg.metric_id === "CARDIAC_COHERENCE") {
          p.flowerBloom = msg.raw;
        } else if (msg.metric_id === "HEART_RATE") {
          p.heartBpm = msg.raw;
        }
        break;
      }
      case "gauge": {
        if (this.gaugeLevel !== null) {
          if (msg.level > this.gaugeLevel + GAUGE_EPS) {
            this.gaugeDirection = "RISING";
          } else if (msg.level < this.gaugeLevel - GAUGE_EPS) {
            this.gaugeDirection = "FALLING";
          }
        }
        this.gaugeLevel = msg.level;
        break;
      }
      case "beat": {
        const p = this.panel(msg.user_id);
        p.beats.push(msg.t);
        break;
      }
      case "protocol": {
        this.phase = msg.phase_id;
        break;
      }
      case "render": {
        if (msg.user_id === null) break;
        const p = this.panel(msg.user_id);
        for (const item of msg.frame.items) {
          if (item.sprite === "lungs") p.lungsStale = item.stale;
          else if (item.sprite === "flower") p.flowerStale = item.stale;
        }
        break;
      }
      case "ack":
        break; // acks concern whoever sent the request, not this screen
    }
    // prune dead ripples as time advances so panels never grow unboundedly
    for (const p of this.panels.values()) {
      while (p.beats.length > 0 && p.beats[0] < this.t - RIPPLE_S) {
        p.beats.shift();
      }
    }
  }

  /**
   * Ages (0..1) of live ripple rings for a user at stream time t; the
   * renderer maps age to ring radius and fade.
   */
  rippleAges(userId: string, t: number = this.t): number[] {
    const p = this.panels.get(userId);
    if (p === undefined) return [];
    return p.beats
      .filter((bt) => bt <= t && t - bt < RIPPLE_S)
      .map((bt) => (t - bt) / RIPPLE_S);
  }

  snapshot(): RelaxationSnapshot {
    const users: RelaxationSnapshot["users"] = {};
    for (const [userId, p] of this.panels) {
      users[userId] = {
        lungs: p.lungs,
        lungsStale: p.lungsStale,
        flowerBloom: p.flowerBloom,
        flowerStale: p.flowerStale,
        heartBpm: p.heartBpm,
        ripples: this.rippleAges(userId).length,
      };
    }
    return {
      t: this.t,
      phase: this.phase,
      gauge: {
        // the guided phase is the only one with a gauge; hide it elsewhere
        visible: this.phase === "GUIDED",
        level: this.gaugeLevel,
        direction: this.gaugeDirection,
      },
      users,
      sharedFlower: this.sharedFlower,
    };
  }
}
