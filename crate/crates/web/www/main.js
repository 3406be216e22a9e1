import init, { moskowitz_field, ctm_run, soc_bound } from "./pkg/turnflow_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const list = (id) => $(id).value.split(",").map((s) => Number(s.trim())).filter((v) => !Number.isNaN(v));

function fail(target, e) {
  target.textContent = String(e && e.message ? e.message : e);
  target.classList.add("err");
}

function ok(target, text) {
  target.textContent = text;
  target.classList.remove("err");
}

// Blue to yellow ramp.
function color(u) {
  const r = Math.round(40 + 215 * u);
  const g = Math.round(60 + 170 * u);
  const b = Math.round(150 - 110 * u);
  return `rgb(${r},${g},${b})`;
}

function drawField() {
  const canvas = $("field-canvas");
  const ctx = canvas.getContext("2d");
  const msg = $("field-msg");
  const nt = 120, nx = 150;
  let field;
  try {
    field = moskowitz_field(num("vf"), num("rc"), num("rm"), num("len"),
      new Float64Array(list("dens")), new Float64Array(list("qin")), new Float64Array(list("qout")),
      num("step"), nt, nx);
  } catch (e) {
    return fail(msg, e);
  }
  const finite = Array.from(field).filter(Number.isFinite);
  const lo = Math.min(...finite), hi = Math.max(...finite);
  const span = hi - lo || 1;
  const cw = canvas.width / nt, ch = canvas.height / nx;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  // Time runs left to right, space bottom to top.
  for (let i = 0; i < nt; i++) {
    for (let j = 0; j < nx; j++) {
      const v = field[i * nx + j];
      ctx.fillStyle = Number.isFinite(v) ? color((v - lo) / span) : "#eee";
      ctx.fillRect(i * cw, canvas.height - (j + 1) * ch, cw + 0.5, ch + 0.5);
    }
  }
  // Vehicle trajectories: level sets at whole-vehicle spacing.
  const levels = 12;
  ctx.fillStyle = "rgba(0,0,0,0.55)";
  for (let i = 0; i < nt; i++) {
    for (let j = 0; j + 1 < nx; j++) {
      const a = field[i * nx + j], b = field[i * nx + j + 1];
      if (!Number.isFinite(a) || !Number.isFinite(b)) continue;
      const ka = Math.floor(((a - lo) / span) * levels), kb = Math.floor(((b - lo) / span) * levels);
      if (ka !== kb) ctx.fillRect(i * cw, canvas.height - (j + 1.5) * ch, cw, 1.5);
    }
  }
  ok(msg, `M ranges from ${lo.toFixed(2)} to ${hi.toFixed(2)} veh; time on the horizontal axis, `
    + `upstream end at the bottom.`);
}

function drawSeries(canvas, series, labels) {
  const ctx = canvas.getContext("2d");
  const pad = 40;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const all = series.flatMap((s) => s.y);
  const xmax = Math.max(...series.flatMap((s) => s.x)) || 1;
  const ymax = Math.max(...all, 1e-9);
  const px = (x) => pad + (x / xmax) * (canvas.width - 2 * pad);
  const py = (y) => canvas.height - pad - (y / ymax) * (canvas.height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText(ymax.toFixed(2), 2, pad + 4);
  ctx.fillText(labels.x + " " + xmax.toFixed(0), canvas.width - pad - 60, canvas.height - pad + 16);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.x.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.y[i])) : ctx.moveTo(px(x), py(s.y[i]))));
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.name, pad + 8 + 150 * k, pad - 8);
  });
}

const palette = ["#c33", "#36c", "#393", "#c90", "#939", "#099", "#666"];

function runCtm() {
  const msg = $("ctm-msg");
  let out;
  try {
    out = JSON.parse(ctm_run($("scenario").value, num("frac"), $("prop").checked));
  } catch (e) {
    return fail(msg, e);
  }
  const exits = Object.entries(out.throughput);
  const series = [{ name: "blocked (veh)", x: out.times, y: out.blocked, color: palette[0] }];
  // Too many exits on the grid to draw one by one; sum them.
  if (exits.length > 4) {
    const total = out.times.map((_, i) => exits.reduce((acc, [, s]) => acc + s[i], 0));
    series.push({ name: "total discharge (veh)", x: out.times, y: total, color: palette[1] });
  } else {
    exits.forEach(([id, s], k) => series.push({ name: `link ${id} discharge`, x: out.times, y: s, color: palette[k + 1] }));
  }
  drawSeries($("ctm-canvas"), series, { x: "t (s)" });
  const last = out.times.length - 1;
  ok(msg, `cumulative blocked ${out.cumulative_blocked[last].toFixed(3)} veh, `
    + `balance error ${out.imbalance.toExponential(1)} veh`);
}

function runSoc() {
  const msg = $("soc-msg");
  let r;
  try {
    r = soc_bound(num("mu"), num("sd"), num("rhs"), num("alpha"));
  } catch (e) {
    return fail(msg, e);
  }
  const nominal = num("mu") > 0 ? num("rhs") / num("mu") : Infinity;
  ok(msg, `kappa = ${r[0].toFixed(6)}   robust bound x <= ${r[1].toFixed(6)}   `
    + `(nominal bound ${nominal.toFixed(6)})`);
  const alphas = [], bounds = [];
  for (let a = 0.02; a < 0.5; a += 0.01) {
    try {
      const b = soc_bound(num("mu"), num("sd"), num("rhs"), a)[1];
      if (Number.isFinite(b)) { alphas.push(a); bounds.push(b); }
    } catch (_) { /* outside the valid range */ }
  }
  drawSeries($("soc-canvas"), [{ name: "bound vs alpha", x: alphas, y: bounds, color: palette[2] }], { x: "alpha" });
}

await init();
$("frac").addEventListener("input", () => ($("frac-val").textContent = num("frac").toFixed(2)));
$("field-go").addEventListener("click", drawField);
$("ctm-go").addEventListener("click", runCtm);
$("soc-go").addEventListener("click", runSoc);
drawField();
runCtm();
runSoc();
