/**
 * Metric palette: drag a metric chip onto an avatar anchor to rebind it.
 *
 * The drop sends a bind_request over the bridge and then waits. Nothing in
 * the local binding table changes until the core's positive ack arrives -- a
 * rejected request surfaces the core's error text as a toast and leaves the
 * table untouched, so the UI can never show a binding the core refused.
 * While the bridge is down, dragging is disabled outright rather than
 * queueing requests the core would never see.
 */

import type { ControlChannel } from "./bridgeClient.js";
import type { BindingMode, MetricId } from "./types.js";

export interface PaletteCallbacks {
  /** A binding was acknowledged and is now live. */
  onBound?: (metricId: MetricId, anchorId: string) => void;
  /** The core rejected the request; show its error text. */
  onToast?: (text: string) => void;
}

export class MetricPalette {
  private readonly client: ControlChannel;
  private readonly callbacks: PaletteCallbacks;
  /** Live bindings as acknowledged by the core: anchor id -> metric id. */
  private readonly bindings = new Map<string, MetricId>();

  constructor(
    client: ControlChannel,
    private readonly userId: string,
    callbacks: PaletteCallbacks = {},
  ) {
    this.client = client;
    this.callbacks = callbacks;
  }

  /** Dragging is only allowed with a live bridge connection. */
  get dragEnabled(): boolean {
    return this.client.state === "open";
  }

  /** The acknowledged binding on an anchor, if any. */
  boundMetric(anchorId: string): MetricId | null {
    return this.bindings.get(anchorId) ?? null;
  }

  /** Seed the table from a known config (e.g. the session's avatar file). */
  seedBinding(anchorId: string, metricId: MetricId): void {
    this.bindings.set(anchorId, metricId);
  }

  /**
   * Handle a drop of `metricId` onto `anchorId`. Resolves true when the core
   * accepted the binding, false when it rejected it or the bridge is down.
   * Timeline and mode may be given to override what the anchor already runs;
   * omitted, the core keeps the anchor's current ones.
   */
  async drop(
    metricId: MetricId,
    anchorId: string,
    opts: { timelineId?: string; mode?: BindingMode; durationS?: number } = {},
  ): Promise<boolean> {
    if (!this.dragEnabled) {
      this.callbacks.onToast?.("bridge is not connected");
      return false;
    }
    let ack;
    try {
      ack = await this.client.request({
        type: "bind_request",
        user_id: this.userId,
        metric_id: metricId,
        anchor_id: anchorId,
        ...(opts.timelineId !== undefined && { timeline_id: opts.timelineId }),
        ...(opts.mode !== undefined && { mode: opts.mode }),
        ...(opts.durationS !== undefined && { duration_s: opts.durationS }),
      });
    } catch (err) {
      this.callbacks.onToast?.(err instanceof Error ? err.message : String(err));
      return false;
    }
    if (!ack.ok) {
      this.callbacks.onToast?.(ack.error ?? "bind request rejected");
      return false;
    }
    this.bindings.set(anchorId, metricId);
    this.callbacks.onBound?.(metricId, anchorId);
    return true;
  }
}
