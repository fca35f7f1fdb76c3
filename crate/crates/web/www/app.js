import init, { simulateLap, alphaCurve, toneScores, presetNames } from "./pkg/mfclab_web.js";

const $ = (id) => document.getElementById(id);

// Line plot of one or more series on a canvas. `series` is a list of
// { x, y, color } with equal-length arrays; null y values break the line.
function plot(canvas, series, { equalAxes = false, xLabel = "", yLabel = "", bands = [] } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y.filter((v) => v !== null && Number.isFinite(v)));
  if (!xs.length || !ys.length) return;
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 1; y1 += 1; }
  let sx = (w - 2 * pad) / (x1 - x0);
  let sy = (h - 2 * pad) / (y1 - y0);
  if (equalAxes) sx = sy = Math.min(sx, sy);
  const px = (x) => pad + (x - x0) * sx;
  const py = (y) => h - pad - (y - y0) * sy;

  ctx.fillStyle = "rgba(0, 120, 255, 0.08)";
  for (const [a, b] of bands) ctx.fillRect(px(a), pad, (b - a) * sx, h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  ctx.fillText(xLabel, w / 2 - 20, h - 8);
  ctx.fillText(yLabel, pad, pad - 8);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width ?? 1.2;
    ctx.beginPath();
    let pen = false;
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (y === null || !Number.isFinite(y)) { pen = false; return; }
      if (pen) ctx.lineTo(px(x), py(y)); else ctx.moveTo(px(x), py(y));
      pen = true;
    });
    ctx.stroke();
  }
}

function fmt(v) {
  return Number.isFinite(v) ? v.toFixed(4) : String(v);
}

function runLap() {
  const out = $("lap-scores");
  out.classList.remove("error");
  out.textContent = "simulating...";
  // Let the message paint before the synchronous simulation starts.
  setTimeout(() => {
    try {
      const r = JSON.parse(simulateLap($("circuit").value, $("preset").value, Number($("seed").value), Number($("noise").value)));
      const status = r.completed ? "completed" : `failed: ${r.failure}`;
      out.textContent = `${r.controller} on ${r.circuit}: ${status}\nIAE ${fmt(r.iae)} m   MLE ${fmt(r.mle)} m   M_eps ${fmt(r.m_eps)}   M_zeta ${fmt(r.m_zeta)}`;
      plot($("track"), [
        { x: r.reference.x, y: r.reference.y, color: "#bbb", width: 4 },
        { x: r.log.x, y: r.log.y, color: "#d33" },
      ], { equalAxes: true, xLabel: "x [m]", yLabel: "y [m]" });
      plot($("error"), [{ x: r.log.t, y: r.log.y1, color: "#06c" }], { xLabel: "t [s]", yLabel: "lateral error [m]" });
      plot($("control"), [{ x: r.log.t, y: r.log.u_fb, color: "#080" }], { xLabel: "t [s]", yLabel: "feedback action" });
    } catch (e) {
      out.classList.add("error");
      out.textContent = String(e);
    }
  }, 10);
}

function drawAlpha() {
  try {
    const r = JSON.parse(alphaCurve(Number($("alpha0").value), Number($("kalpha").value), Number($("v0").value), Number($("vmax").value), 200));
    plot($("alpha"), [{ x: r.v_kmh, y: r.alpha, color: "#a0a" }], { xLabel: "speed [km/h]", yLabel: "alpha" });
  } catch (e) {
    $("alpha").getContext("2d").clearRect(0, 0, 520, 260);
  }
}

function drawTone() {
  const out = $("tone-scores");
  try {
    const r = JSON.parse(toneScores(Number($("freq").value), Number($("amp").value)));
    out.classList.remove("error");
    out.textContent = `${Number($("freq").value).toFixed(1)} Hz   M_eps ${fmt(r.m_eps)}   M_zeta ${fmt(r.m_zeta)}`;
    plot($("spectrum"), [{ x: r.freq, y: r.power_db, color: "#333" }], {
      xLabel: "frequency [Hz]", yLabel: "power [dB]", bands: [r.band_eps, r.band_zeta],
    });
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e);
  }
}

async function main() {
  await init();
  const names = JSON.parse(presetNames());
  for (const c of names.circuits) $("circuit").add(new Option(c, c));
  for (const p of names.presets) $("preset").add(new Option(p, p));
  $("preset").value = "samfc_table3";
  $("status").textContent = "Ready.";
  $("run").addEventListener("click", runLap);
  for (const id of ["alpha0", "kalpha", "v0", "vmax"]) $(id).addEventListener("input", drawAlpha);
  for (const id of ["freq", "amp"]) $(id).addEventListener("input", drawTone);
  drawAlpha();
  drawTone();
}

main().catch((e) => { $("status").textContent = `Failed to load: ${e}`; });
