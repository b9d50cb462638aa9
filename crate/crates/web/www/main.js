import init, { recoveryDemo, ripProfile, thresholdCurves } from "./pkg/omp_recovery_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function setStatus(id, text, isError = false) {
  const el = $(id);
  el.textContent = text;
  el.className = isError ? "status error" : "status";
}

// Prepares a canvas at device resolution and returns a plotting frame.
function frame(canvasId, xRange, yRange) {
  const canvas = $(canvasId);
  const dpr = window.devicePixelRatio || 1;
  canvas.width = canvas.clientWidth * dpr;
  canvas.height = canvas.clientHeight * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  const w = canvas.clientWidth, h = canvas.clientHeight;
  const pad = { l: 48, r: 12, t: 12, b: 28 };
  ctx.clearRect(0, 0, w, h);
  const [x0, x1] = xRange, [y0, y1] = yRange;
  const sx = (x) => pad.l + ((x - x0) / (x1 - x0 || 1)) * (w - pad.l - pad.r);
  const sy = (y) => h - pad.b - ((y - y0) / (y1 - y0 || 1)) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t);
  ctx.lineTo(pad.l, h - pad.b);
  ctx.lineTo(w - pad.r, h - pad.b);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 4);
    const x = x0 + ((x1 - x0) * i) / 4;
    ctx.fillText(x.toPrecision(3), sx(x) - 10, h - 10);
  }
  return { ctx, sx, sy };
}

function polyline(f, xs, ys, color, dashed = false) {
  const { ctx, sx, sy } = f;
  ctx.strokeStyle = color;
  ctx.setLineDash(dashed ? [5, 4] : []);
  ctx.lineWidth = 2;
  ctx.beginPath();
  xs.forEach((x, i) => (i === 0 ? ctx.moveTo(sx(x), sy(ys[i])) : ctx.lineTo(sx(x), sy(ys[i]))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function legend(f, entries) {
  const { ctx } = f;
  entries.forEach(([label, color], i) => {
    ctx.fillStyle = color;
    ctx.fillRect(60, 16 + i * 16, 10, 10);
    ctx.fillStyle = "#222";
    ctx.fillText(label, 76, 25 + i * 16);
  });
}

function runRecovery() {
  try {
    const r = JSON.parse(
      recoveryDemo(num("rec-m"), num("rec-n"), num("rec-k"), num("rec-sigma"), $("rec-rule").value, $("rec-family").value, num("rec-seed"))
    );
    const n = r.x.length;
    const peak = Math.max(...r.x.map(Math.abs), ...r.trace.estimate.map(Math.abs), 1e-12);
    const f = frame("rec-canvas", [0, n - 1], [-peak, peak]);
    const stem = (values, color, offset) => {
      f.ctx.strokeStyle = color;
      f.ctx.lineWidth = 2;
      values.forEach((v, i) => {
        if (v === 0) return;
        f.ctx.beginPath();
        f.ctx.moveTo(f.sx(i) + offset, f.sy(0));
        f.ctx.lineTo(f.sx(i) + offset, f.sy(v));
        f.ctx.stroke();
      });
    };
    stem(r.x, "#1f77b4", -2);
    stem(r.trace.estimate, "#d62728", 2);
    legend(f, [["true x", "#1f77b4"], ["OMP estimate", "#d62728"]]);
    const order = r.trace.iterations.map((it) => it.selected_index).join(", ");
    setStatus(
      "rec-status",
      `${r.exact ? "exact support" : "support differs"}: true ${JSON.stringify(r.true_support)}, ` +
        `selected [${order}], ${r.trace.iterations.length} steps, halted on ${r.trace.halt_reason}, ` +
        `residual ${r.trace.final_residual_l2.toExponential(3)}, noise ${r.noise_l2.toExponential(3)}`
    );
  } catch (e) {
    setStatus("rec-status", String(e.message || e), true);
  }
}

function runRip() {
  setStatus("rip-status", "enumerating subsets...");
  // Let the status paint before the synchronous computation.
  setTimeout(() => {
    try {
      const r = JSON.parse(ripProfile(num("rip-m"), num("rip-n"), num("rip-order"), $("rip-family").value, num("rip-seed")));
      const ks = r.orders.map((o) => o.order);
      const deltas = r.orders.map((o) => o.delta);
      const kmu = r.orders.map((o) => o.coherence_bound);
      const gers = r.orders.map((o) => o.gershgorin_bound);
      const f = frame("rip-canvas", [1, Math.max(2, ks[ks.length - 1])], [0, Math.max(...kmu, 0.3)]);
      polyline(f, ks, deltas, "#1f77b4");
      polyline(f, ks, kmu, "#ff7f0e", true);
      polyline(f, ks, gers, "#2ca02c", true);
      const thr = r.orders.filter((o) => o.threshold !== null);
      polyline(f, thr.map((o) => o.order), thr.map((o) => o.threshold), "#7f7f7f");
      legend(f, [["exact delta_K", "#1f77b4"], ["K mu", "#ff7f0e"], ["(K-1) mu", "#2ca02c"], ["threshold for sparsity K-1", "#7f7f7f"]]);
      const certified = thr.filter((o) => r.orders[o.order - 1].delta < o.threshold).map((o) => o.order - 1);
      setStatus(
        "rip-status",
        `mu = ${r.mu.toFixed(4)}; deltas ${deltas.map((d) => d.toFixed(4)).join(", ")}; ` +
          `certified sparsities: ${certified.length ? certified.join(", ") : "none"}`
      );
    } catch (e) {
      setStatus("rip-status", String(e.message || e), true);
    }
  }, 10);
}

function runThresholds() {
  try {
    const r = JSON.parse(thresholdCurves(num("thr-k"), num("thr-noise"), num("thr-m"), 200));
    const top = Math.max(...r.l2, ...r.linf, ...r.gaussian);
    const f = frame("thr-canvas", [0, r.delta_threshold], [0, Math.min(top, 50 * Math.max(r.l2[0], r.linf[0], r.gaussian[0]))]);
    polyline(f, r.delta, r.l2, "#1f77b4");
    polyline(f, r.delta, r.gaussian, "#2ca02c");
    polyline(f, r.delta, r.linf, "#d62728");
    legend(f, [["l2-bounded noise", "#1f77b4"], ["Gaussian noise", "#2ca02c"], ["correlation-bounded noise", "#d62728"]]);
    setStatus("thr-status", `delta must stay below ${r.delta_threshold.toFixed(5)}`);
  } catch (e) {
    setStatus("thr-status", String(e.message || e), true);
  }
}

await init();
$("rec-run").addEventListener("click", runRecovery);
$("rip-run").addEventListener("click", runRip);
$("thr-run").addEventListener("click", runThresholds);
runRecovery();
runRip();
runThresholds();
