/**
 * Browser entry point: wires the bridge client into the view models and the
 * DOM. Serve the repository root statically (after `npm run build`) and run
 * the core with `tobe run session.yaml --bridge 8765`; pass a different
 * endpoint as `?bridge=host:port`.
 */

import { Animator, gestureTransform } from "./animator.js";
import { layoutFrame } from "./avatarView.js";
import { BridgeClient } from "./bridgeClient.js";
import { DEFAULT_AVATAR } from "./defaultAvatar.js";
import { drawGlyph, drawRipples, drawSilhouette, paintDraws } from "./draw.js";
import { MetricPalette } from "./palette.js";
import { RelaxationView } from "./relaxationView.js";
import type { Transform } from "./timeline.js";
import { IDENTITY } from "./timeline.js";
import type { MetricId, RenderFrame } from "./types.js";
import { ALL_METRICS } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(text: string): void {
  const box = document.createElement("div");
  box.className = "toast";
  box.textContent = text;
  el("toasts").appendChild(box);
  setTimeout(() => box.remove(), 4200);
}

// -- bridge -------------------------------------------------------------------

const endpoint =
  new URLSearchParams(location.search).get("bridge") ?? `${location.hostname || "127.0.0.1"}:8765`;
const client = new BridgeClient(`ws://${endpoint}/ws`);
const relax = new RelaxationView();
const lastFrames = new Map<string, RenderFrame>();
const palettes = new Map<string, MetricPalette>();

const banner = el<HTMLDivElement>("banner");
client.onState((s) => {
  banner.dataset.state = s;
  banner.textContent =
    s === "open" ? `bridge ${endpoint}` : s === "backoff" ? "reconnecting…" : s;
  el<HTMLDivElement>("palette").classList.toggle("disabled", s !== "open");
});

function paletteFor(userId: string): MetricPalette {
  let p = palettes.get(userId);
  if (p === undefined) {
    p = new MetricPalette(client, userId, { onToast: toast });
    for (const b of DEFAULT_AVATAR.bindings) {
      p.seedBinding(b.anchor, b.metric as MetricId);
    }
    palettes.set(userId, p);
  }
  return p;
}

// -- per-user panels, created as user ids appear in the stream ---------------

interface UserDom {
  card: HTMLDivElement;
  cardCanvas: HTMLCanvasElement;
  bpm: HTMLDivElement;
  avatarCanvas: HTMLCanvasElement;
}

const userDoms = new Map<string, UserDom>();

function ensureUser(userId: string): UserDom {
  let dom = userDoms.get(userId);
  if (dom !== undefined) return dom;

  const card = document.createElement("div");
  card.className = "user-card";
  card.innerHTML = `<h3></h3><canvas width="170" height="130"></canvas><div class="bpm">&mdash;</div>`;
  (card.querySelector("h3") as HTMLHeadingElement).textContent = userId;
  el("user-cards").appendChild(card);

  const box = document.createElement("div");
  box.className = "avatar-box";
  const canvas = document.createElement("canvas");
  canvas.width = 220;
  canvas.height = 330;
  box.appendChild(canvas);
  const who = document.createElement("div");
  who.className = "who";
  who.textContent = userId;
  box.appendChild(who);
  for (const anchor of DEFAULT_AVATAR.anchors) {
    const spot = document.createElement("div");
    spot.className = "anchor-spot";
    spot.style.left = `${anchor.x * 100}%`;
    spot.style.top = `${anchor.y * 100}%`;
    spot.style.width = spot.style.height = `${anchor.size * 220}px`;
    spot.addEventListener("dragover", (ev) => {
      if (paletteFor(userId).dragEnabled) {
        ev.preventDefault();
        spot.classList.add("armed");
      }
    });
    spot.addEventListener("dragleave", () => spot.classList.remove("armed"));
    spot.addEventListener("drop", (ev) => {
      ev.preventDefault();
      spot.classList.remove("armed");
      const metric = ev.dataTransfer?.getData("text/metric-id");
      if (metric) {
        void paletteFor(userId).drop(metric as MetricId, anchor.id);
      }
    });
    box.appendChild(spot);
  }
  el("avatar-row").appendChild(box);

  const select = el<HTMLSelectElement>("user-select");
  const opt = document.createElement("option");
  opt.value = opt.textContent = userId;
  select.appendChild(opt);

  dom = {
    card,
    cardCanvas: card.querySelector("canvas") as HTMLCanvasElement,
    bpm: card.querySelector(".bpm") as HTMLDivElement,
    avatarCanvas: canvas,
  };
  userDoms.set(userId, dom);
  return dom;
}

client.onMessage((msg) => {
  relax.apply(msg);
  if (msg.type === "render" && msg.user_id !== null) {
    ensureUser(msg.user_id);
    lastFrames.set(msg.user_id, msg.frame);
  } else if ((msg.type === "metric" || msg.type === "beat") && msg.user_id) {
    ensureUser(msg.user_id);
  }
});

// -- metric palette -----------------------------------------------------------

const paletteBox = el<HTMLDivElement>("palette");
for (const metric of ALL_METRICS) {
  const chip = document.createElement("div");
  chip.className = "chip";
  chip.textContent = metric.toLowerCase().replace(/_/g, " ");
  chip.draggable = true;
  chip.addEventListener("dragstart", (ev) => {
    if (client.state !== "open") {
      ev.preventDefault();
      return;
    }
    ev.dataTransfer?.setData("text/metric-id", metric);
  });
  paletteBox.appendChild(chip);
}

// -- animator -----------------------------------------------------------------

const animator = new Animator();
const spriteSelect = el<HTMLSelectElement>("sprite-select");
for (const tl of DEFAULT_AVATAR.timelines) {
  const opt = document.createElement("option");
  opt.value = opt.textContent = tl.sprite;
  spriteSelect.appendChild(opt);
}
animator.select(spriteSelect.value);
spriteSelect.addEventListener("change", () => animator.select(spriteSelect.value));

const gestureCanvas = el<HTMLCanvasElement>("gesture-canvas");
const pointers = new Map<number, readonly [number, number]>();
let gestureStart: Array<readonly [number, number]> | null = null;
let liveTransform: Transform = IDENTITY;

function pointerPos(ev: PointerEvent): readonly [number, number] {
  const r = gestureCanvas.getBoundingClientRect();
  return [(ev.clientX - r.left) / r.width, (ev.clientY - r.top) / r.height];
}

gestureCanvas.addEventListener("pointerdown", (ev) => {
  gestureCanvas.setPointerCapture(ev.pointerId);
  pointers.set(ev.pointerId, pointerPos(ev));
  gestureStart = [...pointers.values()];
  liveTransform = IDENTITY;
});
gestureCanvas.addEventListener("pointermove", (ev) => {
  if (!pointers.has(ev.pointerId)) return;
  pointers.set(ev.pointerId, pointerPos(ev));
  if (gestureStart !== null && gestureStart.length === pointers.size) {
    liveTransform = gestureTransform(gestureStart, [...pointers.values()]);
    animator.setTransform(liveTransform);
  }
});
const endPointer = (ev: PointerEvent) => {
  pointers.delete(ev.pointerId);
  gestureStart = pointers.size > 0 ? [...pointers.values()] : null;
};
gestureCanvas.addEventListener("pointerup", endPointer);
gestureCanvas.addEventListener("pointercancel", endPointer);

const recordBtn = el<HTMLButtonElement>("btn-record");
const uploadBtn = el<HTMLButtonElement>("btn-upload");
const scrub = el<HTMLInputElement>("scrub");

recordBtn.addEventListener("click", () => {
  if (!animator.recording) {
    animator.start();
    recordBtn.textContent = "stop";
    recordBtn.classList.add("recording");
    return;
  }
  recordBtn.textContent = "record";
  recordBtn.classList.remove("recording");
  try {
    animator.stop(`rec-${Date.now() % 100000}`);
  } catch (err) {
    toast(err instanceof Error ? err.message : String(err));
    return;
  }
  scrub.disabled = false;
  uploadBtn.disabled = false;
});

uploadBtn.addEventListener("click", () => {
  const userId = el<HTMLSelectElement>("user-select").value;
  if (!userId) {
    toast("no user in session yet");
    return;
  }
  animator
    .upload(client, userId)
    .then((ack) => toast(ack.ok ? "timeline uploaded" : ack.error ?? "upload rejected"))
    .catch((err) => toast(err instanceof Error ? err.message : String(err)));
});

el<HTMLButtonElement>("btn-calibrate").addEventListener("click", () => {
  const userId = el<HTMLSelectElement>("user-select").value;
  if (!userId) return;
  client
    .request({ type: "calibration_command", user_id: userId })
    .then((ack) => toast(ack.ok ? `recalibrated ${userId}` : ack.error ?? "rejected"))
    .catch((err) => toast(err instanceof Error ? err.message : String(err)));
});

for (const [id, action] of [
  ["btn-start", "start"],
  ["btn-pause", "pause"],
  ["btn-stop", "stop"],
] as const) {
  el<HTMLButtonElement>(id).addEventListener("click", () => {
    client
      .request({ type: "session_command", action })
      .catch((err) => toast(err instanceof Error ? err.message : String(err)));
  });
}

// -- render loop --------------------------------------------------------------

function paint(): void {
  const snap = relax.snapshot();

  el<HTMLDivElement>("phase-label").textContent = snap.phase ?? "—";
  const gauge = el<HTMLDivElement>("gauge");
  gauge.classList.toggle("hidden", !snap.gauge.visible);
  el<HTMLDivElement>("gauge-fill").style.height = `${(snap.gauge.level ?? 0) * 100}%`;
  el<HTMLDivElement>("gauge-arrow").innerHTML =
    snap.gauge.direction === "RISING" ? "&#9650;" : "&#9660;";

  const shared = el<HTMLDivElement>("shared-flower");
  const bloom = snap.sharedFlower ?? 0;
  shared.style.transform = `scale(${0.15 + 0.85 * bloom})`;
  shared.style.opacity = `${0.35 + 0.65 * bloom}`;

  for (const [userId, dom] of userDoms) {
    const panel = snap.users[userId];
    const ctx = dom.cardCanvas.getContext("2d");
    if (ctx !== null && panel !== undefined) {
      const { width: w, height: h } = dom.cardCanvas;
      ctx.clearRect(0, 0, w, h);
      const lungSize = 34 + 30 * (panel.lungs ?? 0);
      drawGlyph(ctx, "lungs", w * 0.3, h * 0.55, lungSize, 0, panel.lungsStale);
      const bloomSize = 12 + 46 * (panel.flowerBloom ?? 0);
      drawGlyph(ctx, "flower", w * 0.72, h * 0.45, bloomSize, 0, panel.flowerStale);
      drawRipples(ctx, relax.rippleAges(userId), w * 0.3, h * 0.55, 36);
      dom.bpm.textContent =
        panel.heartBpm === null ? "—" : `${panel.heartBpm.toFixed(0)} bpm`;
    }
    const actx = dom.avatarCanvas.getContext("2d");
    if (actx !== null) {
      const { width: w, height: h } = dom.avatarCanvas;
      actx.clearRect(0, 0, w, h);
      drawSilhouette(actx, w, h);
      paintDraws(actx, layoutFrame(DEFAULT_AVATAR, lastFrames.get(userId) ?? null), w, h);
    }
  }

  // gesture area: live transform applied to the selected sprite
  const gctx = gestureCanvas.getContext("2d");
  if (gctx !== null) {
    const { width: w, height: h } = gestureCanvas;
    gctx.clearRect(0, 0, w, h);
    const tr = animator.recording ? liveTransform : IDENTITY;
    drawGlyph(
      gctx,
      spriteSelect.value,
      w / 2 + tr.tx * w,
      h / 2 + tr.ty * h,
      56 * tr.sx,
      tr.rot,
      false,
    );
  }

  // scrub preview
  const pctx = el<HTMLCanvasElement>("preview-canvas").getContext("2d");
  if (pctx !== null && animator.timeline !== null) {
    const canvas = el<HTMLCanvasElement>("preview-canvas");
    pctx.clearRect(0, 0, canvas.width, canvas.height);
    const tr = animator.preview(Number(scrub.value));
    drawGlyph(
      pctx,
      animator.timeline.sprite,
      canvas.width / 2 + tr.tx * canvas.width,
      canvas.height / 2 + tr.ty * canvas.height,
      56 * tr.sx,
      tr.rot,
      false,
    );
  }

  requestAnimationFrame(paint);
}

client.connect();
requestAnimationFrame(paint);
