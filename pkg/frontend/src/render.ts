// Canvas rendering of the driving console: the skeletal tree projected on
// the x-z plane, true/estimated pose markers, visible-airway highlights,
// the candidate-posterior bars and the running F1 panel.

import { SkeletonWire } from "./protocol.js";
import { ViewState } from "./viewstate.js";

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Fit the skeleton's x-z extent into a canvas with a margin. */
export function computeViewTransform(
  skeleton: SkeletonWire,
  width: number,
  height: number,
  margin = 24,
): ViewTransform {
  let minX = Infinity;
  let maxX = -Infinity;
  let minZ = Infinity;
  let maxZ = -Infinity;
  for (const a of skeleton.airways) {
    for (const p of a.centerline) {
      minX = Math.min(minX, p[0]);
      maxX = Math.max(maxX, p[0]);
      minZ = Math.min(minZ, p[2]);
      maxZ = Math.max(maxZ, p[2]);
    }
  }
  const spanX = Math.max(maxX - minX, 1e-6);
  const spanZ = Math.max(maxZ - minZ, 1e-6);
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanZ);
  return {
    scale,
    offsetX: margin - minX * scale + (width - 2 * margin - spanX * scale) / 2,
    offsetY: margin - minZ * scale + (height - 2 * margin - spanZ * scale) / 2,
  };
}

export function project(
  tf: ViewTransform,
  point: ArrayLike<number>,
  height: number,
): [number, number] {
  // z grows downward into the lung; draw the trachea at the top
  return [tf.offsetX + point[0] * tf.scale, height - (tf.offsetY + point[2] * tf.scale)];
}

const COLORS = {
  airway: "#b9c6cc",
  trueVisible: "#2a6f97",
  estVisible: "#e8a13c",
  bothVisible: "#3f8e3f",
  trueMarker: "#2a6f97",
  estMarker: "#c44536",
  panelText: "#222222",
};

export function airwayColor(id: number, view: ViewState): string {
  const inTrue = view.trueVisible.has(id);
  const inEst = view.estVisible.has(id);
  if (inTrue && inEst) return COLORS.bothVisible;
  if (inTrue) return COLORS.trueVisible;
  if (inEst) return COLORS.estVisible;
  return COLORS.airway;
}

export function renderTick(
  ctx: CanvasRenderingContext2D,
  skeleton: SkeletonWire,
  view: ViewState,
  width: number,
  height: number,
): void {
  const tf = computeViewTransform(skeleton, width, height);
  ctx.clearRect(0, 0, width, height);

  for (const a of skeleton.airways) {
    ctx.beginPath();
    ctx.strokeStyle = airwayColor(a.id, view);
    ctx.lineWidth = view.trueVisible.has(a.id) || view.estVisible.has(a.id) ? 2.5 : 1.0;
    const first = project(tf, a.centerline[0], height);
    ctx.moveTo(first[0], first[1]);
    for (const p of a.centerline.slice(1)) {
      const q = project(tf, p, height);
      ctx.lineTo(q[0], q[1]);
    }
    ctx.stroke();
  }

  drawPoseMarker(ctx, tf, height, view.truePosition, view.truePointing, COLORS.trueMarker);
  if (!view.noFix && view.estPosition && view.estPointing) {
    drawPoseMarker(ctx, tf, height, view.estPosition, view.estPointing, COLORS.estMarker);
  }

  drawMetricsPanel(ctx, view, width);
  drawCandidateBars(ctx, view, width, height);
}

function drawPoseMarker(
  ctx: CanvasRenderingContext2D,
  tf: ViewTransform,
  height: number,
  position: ArrayLike<number>,
  pointingDir: ArrayLike<number>,
  color: string,
): void {
  const [x, y] = project(tf, position, height);
  ctx.beginPath();
  ctx.fillStyle = color;
  ctx.arc(x, y, 5, 0, 2 * Math.PI);
  ctx.fill();
  ctx.beginPath();
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.moveTo(x, y);
  ctx.lineTo(x + pointingDir[0] * 14, y - pointingDir[2] * 14);
  ctx.stroke();
}

export function formatReadout(view: ViewState): string {
  const ep = view.eP === null ? "no fix" : `e_p ${view.eP.toFixed(1)} mm`;
  const mode = view.mode === "update" ? (view.bifCorrect ? "update OK" : "update") : view.mode;
  return `tick ${view.tick}  ins ${view.insertion.toFixed(1)} mm  ${ep}  [${mode}]`;
}

function drawMetricsPanel(
  ctx: CanvasRenderingContext2D,
  view: ViewState,
  width: number,
): void {
  ctx.fillStyle = COLORS.panelText;
  ctx.font = "12px monospace";
  ctx.fillText(formatReadout(view), 10, 16);
  let x = 10;
  const gens = [...view.f1ByGeneration.keys()].sort((a, b) => a - b);
  for (const g of gens) {
    const f1 = view.f1ByGeneration.get(g) ?? 0;
    ctx.fillStyle = "#dddddd";
    ctx.fillRect(x, 24, 40, 8);
    ctx.fillStyle = COLORS.bothVisible;
    ctx.fillRect(x, 24, 40 * f1, 8);
    ctx.fillStyle = COLORS.panelText;
    ctx.fillText(`g${g}`, x, 44);
    x += 48;
  }
  if (view.noFix) {
    ctx.fillStyle = COLORS.estMarker;
    ctx.fillText("NO FIX", width - 60, 16);
  }
}

function drawCandidateBars(
  ctx: CanvasRenderingContext2D,
  view: ViewState,
  width: number,
  height: number,
): void {
  if (view.candidates.length === 0) return;
  const maxPost = Math.max(...view.candidates.map((c) => c.posterior), 1e-300);
  let y = height - 14 * view.candidates.length - 6;
  ctx.font = "11px monospace";
  for (const c of view.candidates) {
    const frac = c.posterior / maxPost;
    ctx.fillStyle = "#d9d9d9";
    ctx.fillRect(width - 170, y, 120, 10);
    ctx.fillStyle = COLORS.trueMarker;
    ctx.fillRect(width - 170, y, 120 * frac, 10);
    ctx.fillStyle = COLORS.panelText;
    ctx.fillText(`b${c.bif}`, width - 44, y + 9);
    y += 14;
  }
}
