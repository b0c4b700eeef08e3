import init, { channel_curves, overlap, FnnPlayground } from "./pkg/fadenet_wasm.js";

const $ = (id) => document.getElementById(id);

function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 34;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap((s) => Array.from(s.x));
  const ys = series.flatMap((s) => Array.from(s.y)).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const y1 = opts.ymax ?? Math.max(...ys) * 1.05;
  const y0 = opts.ymin ?? 0;
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color + "55";
    if (s.bars) {
      const bw = (px(s.x[1]) - px(s.x[0])) * 0.95;
      s.x.forEach((x, i) => ctx.fillRect(px(x) - bw / 2, py(s.y[i]), bw, py(y0) - py(s.y[i])));
    } else {
      ctx.beginPath();
      s.x.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.y[i])) : ctx.moveTo(px(x), py(s.y[i]))));
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }
}

function hist(values, lo, hi, bins) {
  const width = (hi - lo) / bins;
  const counts = new Array(bins).fill(0);
  for (const v of values) {
    const b = Math.floor((v - lo) / width);
    if (b >= 0 && b < bins) counts[b] += 1;
  }
  return {
    x: counts.map((_, i) => lo + (i + 0.5) * width),
    y: counts.map((c) => c / (values.length * width)),
  };
}

function bindLabels(ids) {
  for (const id of ids) $(`${id}-v`).textContent = $(id).value;
}

function drawChannel() {
  bindLabels(["ch-m", "ch-d"]);
  const r = JSON.parse(channel_curves(+$("ch-m").value, +$("ch-d").value, +$("ch-n").value, 1n));
  plot($("ch-canvas"), [
    { x: r.bins, y: r.hist, color: "#1f77b4", bars: true },
    { x: r.x, y: r.pdf, color: "#d62728" },
  ]);
  $("ch-out").textContent =
    `mean power: closed form ${r.ideal_mean.toExponential(4)} W, sample ${r.sample_mean.toExponential(4)} W`;
}

function drawOverlap() {
  const ids = ["ov-ma", "ov-sa", "ov-mb", "ov-sb", "ov-bw"];
  bindLabels(ids);
  const [ma, sa, mb, sb, bw] = ids.map((id) => +$(id).value);
  const r = JSON.parse(overlap(ma, sa, mb, sb, 3000, bw, 7n));
  plot($("ov-canvas"), [
    { x: r.x, y: r.a, color: "#1f77b4" },
    { x: r.x, y: r.b, color: "#d62728" },
    { x: r.x, y: r.a.map((v, i) => Math.min(v, r.b[i])), color: "#2ca02c" },
  ]);
  $("ov-out").textContent = `overlapped area ${r.oa.toFixed(4)} (trapezoid on ${r.grid} points)`;
}

let model = null;
let losses = [];

function resetModel() {
  model?.free();
  model = new FnnPlayground(+$("fn-n").value, +$("fn-l").value, +$("fn-u").value, 11n);
  losses = Array.from(model.train(0));
  const sel = $("fn-cat");
  sel.innerHTML = "";
  Array.from(model.distances()).forEach((d, i) => sel.add(new Option(`${d} m`, i)));
  sel.value = 14;
  drawModel();
}

function drawModel() {
  const s = JSON.parse(model.sample(+$("fn-cat").value, 2000));
  const all = s.genuine.concat(s.generated);
  const lo = Math.min(...all), hi = Math.max(...all) + 1e-9;
  const g = hist(s.genuine, lo, hi, 40), m = hist(s.generated, lo, hi, 40);
  plot($("fn-canvas"), [
    { ...g, color: "#1f77b4", bars: true },
    { ...m, color: "#2ca02c" },
  ]);
  plot($("fn-loss"), [{ x: losses.map((_, i) => i), y: Array.from(losses), color: "#555" }]);
  const e = JSON.parse(model.evaluate());
  $("fn-out").textContent =
    `epoch ${e.epoch}  validation loss ${losses[losses.length - 1].toExponential(3)}  ` +
    `ScaledPE ${e.scaled_pe.toFixed(2)}  average OA ${e.oa.toFixed(4)}`;
}

async function main() {
  await init();
  for (const id of ["ch-m", "ch-d", "ch-n"]) $(id).addEventListener("input", drawChannel);
  for (const id of ["ov-ma", "ov-sa", "ov-mb", "ov-sb", "ov-bw"]) $(id).addEventListener("input", drawOverlap);
  $("fn-reset").addEventListener("click", resetModel);
  $("fn-train").addEventListener("click", () => {
    losses = Array.from(model.train(5));
    drawModel();
  });
  $("fn-cat").addEventListener("change", drawModel);
  drawChannel();
  drawOverlap();
  resetModel();
}

main();
