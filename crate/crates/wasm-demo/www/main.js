import init, { segmentTrace, reservoirFrequencies, groupAdvantages } from "./pkg/streammem_wasm.js";

const $ = (id) => document.getElementById(id);

function show(id, text, isError = false) {
  const el = $(id);
  el.textContent = text;
  el.className = isError ? "out err" : "out";
}

function numbers(s) {
  return s.trim().split(/[\s,]+/).filter(Boolean).map(Number);
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function runSegmentation() {
  const scenes = $("scenes").value.trim().split("\n").filter((l) => l.trim()).map((line) => {
    const [duration_s, intensity, noise = 0] = numbers(line);
    return { duration_s, intensity, noise };
  });
  const fixed = $("seg-fixed").value;
  const req = {
    scenes,
    capacity: Number($("seg-k").value),
    delta: Number($("seg-delta").value),
    min_len: Number($("seg-min").value),
    fixed_interval_s: fixed ? Number(fixed) : null,
  };
  let trace;
  try {
    trace = JSON.parse(segmentTrace(JSON.stringify(req)));
  } catch (e) {
    show("seg-out", e.message, true);
    return;
  }
  const canvas = $("seg-canvas");
  const ctx = clear(canvas);
  const w = canvas.width, h = canvas.height, pad = 30;
  const tMax = trace.points[trace.points.length - 1].t || 1;
  const x = (t) => pad + (t / tMax) * (w - 2 * pad);
  const rhoTop = pad, rhoH = h * 0.55;
  const y = (rho) => rhoTop + (1 - (rho + 1) / 2) * rhoH;
  const heldTop = rhoTop + rhoH + 20, heldH = h - heldTop - pad;

  ctx.strokeStyle = "#ccc";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(pad, y(req.delta));
  ctx.lineTo(w - pad, y(req.delta));
  ctx.stroke();
  ctx.setLineDash([]);

  for (const t of trace.planted_s) {
    ctx.fillStyle = "rgba(0,120,0,0.15)";
    ctx.fillRect(x(t) - 3, rhoTop, 6, h - rhoTop - pad);
  }
  ctx.strokeStyle = "#c00";
  for (const t of trace.detected_s) {
    ctx.beginPath();
    ctx.moveTo(x(t), rhoTop);
    ctx.lineTo(x(t), h - pad);
    ctx.stroke();
  }

  ctx.strokeStyle = "#036";
  ctx.beginPath();
  let pen = false;
  for (const p of trace.points) {
    if (p.rho === null) { pen = false; continue; }
    if (pen) ctx.lineTo(x(p.t), y(p.rho)); else ctx.moveTo(x(p.t), y(p.rho));
    pen = true;
  }
  ctx.stroke();

  ctx.fillStyle = "#888";
  for (const p of trace.points) {
    const bh = (p.held / req.capacity) * heldH;
    ctx.fillRect(x(p.t) - 1, heldTop + heldH - bh, 2, bh);
  }

  ctx.fillStyle = "#222";
  ctx.fillText("rho vs event mean (dashed: delta)", pad, rhoTop - 8);
  ctx.fillText(`held frames (max ${req.capacity})`, pad, heldTop - 4);
  ctx.fillText(`${tMax}s`, w - pad - 20, h - 10);

  const hits = trace.detected_s.filter((t) => trace.planted_s.includes(t)).length;
  show("seg-out",
    `planted ${JSON.stringify(trace.planted_s)}\ndetected ${JSON.stringify(trace.detected_s)}\n` +
    `${hits}/${trace.planted_s.length} planted changes found, ${trace.detected_s.length - hits} extra, ` +
    `${trace.evictions} events evicted`);
}

function runReservoir() {
  let r;
  try {
    r = JSON.parse(reservoirFrequencies(
      Number($("rsv-n").value), Number($("rsv-k").value),
      Number($("rsv-trials").value), Number($("rsv-seed").value)));
  } catch (e) {
    show("rsv-out", e.message, true);
    return;
  }
  const canvas = $("rsv-canvas");
  const ctx = clear(canvas);
  const w = canvas.width, h = canvas.height, pad = 20;
  const top = Math.max(...r.frequencies, r.expected + 3 * r.sigma) * 1.1;
  const y = (f) => h - pad - (f / top) * (h - 2 * pad);
  const bw = (w - 2 * pad) / r.frequencies.length;

  ctx.fillStyle = "rgba(0,100,200,0.12)";
  ctx.fillRect(pad, y(r.expected + 3 * r.sigma), w - 2 * pad, y(r.expected - 3 * r.sigma) - y(r.expected + 3 * r.sigma));
  ctx.fillStyle = "#036";
  r.frequencies.forEach((f, i) => ctx.fillRect(pad + i * bw, y(f), Math.max(bw - 1, 1), h - pad - y(f)));
  ctx.strokeStyle = "#c00";
  ctx.beginPath();
  ctx.moveTo(pad, y(r.expected));
  ctx.lineTo(w - pad, y(r.expected));
  ctx.stroke();

  const outside = r.frequencies.filter((f) => Math.abs(f - r.expected) > 3 * r.sigma).length;
  const lo = Math.min(...r.frequencies), hi = Math.max(...r.frequencies);
  show("rsv-out",
    `expected K/n = ${r.expected.toFixed(4)}, sigma ${r.sigma.toFixed(4)}\n` +
    `observed range [${lo.toFixed(4)}, ${hi.toFixed(4)}], ${outside} frames outside 3 sigma (shaded)`);
}

function runGrpo() {
  const ratios = numbers($("grpo-ratios").value);
  const req = {
    rewards: numbers($("grpo-rewards").value),
    ratios: ratios.length ? ratios : null,
    epsilon: Number($("grpo-eps").value),
  };
  let r;
  try {
    r = JSON.parse(groupAdvantages(JSON.stringify(req)));
  } catch (e) {
    show("grpo-out", e.message, true);
    return;
  }
  const canvas = $("grpo-canvas");
  const ctx = clear(canvas);
  const w = canvas.width, h = canvas.height, mid = h / 2;
  const scale = Math.max(1, ...r.advantages.map(Math.abs), ...r.terms.map(Math.abs));
  const slot = w / r.advantages.length;
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(0, mid);
  ctx.lineTo(w, mid);
  ctx.stroke();
  r.advantages.forEach((a, i) => {
    const x0 = i * slot + slot * 0.2;
    ctx.fillStyle = "#036";
    ctx.fillRect(x0, mid, slot * 0.25, -(a / scale) * (mid - 10));
    ctx.fillStyle = r.clipped[i] ? "#c60" : "#6a6";
    ctx.fillRect(x0 + slot * 0.3, mid, slot * 0.25, -(r.terms[i] / scale) * (mid - 10));
  });
  ctx.fillStyle = "#222";
  ctx.fillText("blue: advantage   green: surrogate term   orange: clipped term", 8, 14);

  const fmt = (v) => v.map((x) => x.toFixed(3)).join(", ");
  show("grpo-out",
    `advantages [${fmt(r.advantages)}]\nterms      [${fmt(r.terms)}]\nobjective  ${r.objective.toFixed(6)}`);
}

await init();
$("seg-run").onclick = runSegmentation;
$("rsv-run").onclick = runReservoir;
$("grpo-run").onclick = runGrpo;
runSegmentation();
runReservoir();
runGrpo();
