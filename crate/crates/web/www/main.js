import init, { tilt, rate_curve, compare, ladder } from "./pkg/exceedmc_web.js";

const $ = (id) => document.getElementById(id);
const MU_LO = 1.05, MU_HI = 2.95;

function fmt(x, d = 4) {
  if (!Number.isFinite(x)) return "n/a";
  if (x !== 0 && (Math.abs(x) < 1e-3 || Math.abs(x) >= 1e4)) return x.toExponential(d - 1);
  return x.toFixed(d);
}

function table(head, rows) {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const tr = rows.map((r) => "<tr>" + r.map((c) => `<td>${c}</td>`).join("") + "</tr>").join("");
  return `<table><tr>${th}</tr>${tr}</table>`;
}

function fail(el, e) {
  el.innerHTML = `<p class="err">${e}</p>`;
}

// axes plus a polyline; xs/ys are data, points with non-finite y are skipped
function plot(canvas, series, { xLabel, yLabel, logY = false }) {
  const g = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 60, B = 30, T = 10, R = 10;
  g.clearRect(0, 0, W, H);
  const all = series.flatMap((s) => s.xs.map((x, i) => [x, logY ? Math.log10(s.ys[i]) : s.ys[i]]))
    .filter(([, y]) => Number.isFinite(y));
  if (all.length === 0) return;
  let [x0, x1] = [Math.min(...all.map((p) => p[0])), Math.max(...all.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...all.map((p) => p[1])), Math.max(...all.map((p) => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const sx = (x) => L + ((x - x0) / (x1 - x0)) * (W - L - R);
  const sy = (y) => H - B - ((y - y0) / (y1 - y0)) * (H - B - T);

  g.strokeStyle = "#888";
  g.beginPath();
  g.moveTo(L, T); g.lineTo(L, H - B); g.lineTo(W - R, H - B);
  g.stroke();
  g.fillStyle = "#444";
  g.font = "12px sans-serif";
  g.fillText(fmt(x0, 2), L, H - 10);
  g.fillText(fmt(x1, 2), W - R - 30, H - 10);
  g.fillText(xLabel, W / 2, H - 10);
  g.fillText((logY ? "1e" : "") + fmt(y1, 2), 2, T + 10);
  g.fillText((logY ? "1e" : "") + fmt(y0, 2), 2, H - B);
  g.fillText(yLabel, 2, H / 2);

  for (const s of series) {
    g.strokeStyle = s.color;
    g.fillStyle = s.color;
    g.beginPath();
    let pen = false;
    s.xs.forEach((x, i) => {
      const y = logY ? Math.log10(s.ys[i]) : s.ys[i];
      if (!Number.isFinite(y)) { pen = false; return; }
      pen ? g.lineTo(sx(x), sy(y)) : g.moveTo(sx(x), sy(y));
      pen = true;
    });
    g.stroke();
    if (s.label) g.fillText(s.label, W - R - 140, T + 14 + 14 * series.indexOf(s));
    for (const m of s.marks ?? []) {
      g.beginPath();
      g.arc(sx(m[0]), sy(logY ? Math.log10(m[1]) : m[1]), 4, 0, 2 * Math.PI);
      g.fill();
    }
  }
}

const curveXs = Array.from({ length: 120 }, (_, i) => MU_LO + ((MU_HI - MU_LO) * i) / 119);
let curveYs = [];

function showTilt() {
  const mu = Number($("mu").value);
  $("mu-out").textContent = mu.toFixed(2);
  try {
    const t = JSON.parse(tilt(mu));
    $("tilt-out").textContent =
      `θ = ${fmt(t.theta, 6)}   ψ = ${fmt(t.psi, 6)}   e^ψ = ${fmt(Math.exp(t.psi), 5)}   φ(μ) = ${fmt(t.phi, 6)}\n` +
      `r (π·r = 1)      = [${t.r.map((v) => fmt(v, 4)).join(", ")}]\n` +
      `tilted stationary = [${t.tilted_pi.map((v) => fmt(v, 4)).join(", ")}]`;
    plot($("rate"), [{ xs: curveXs, ys: curveYs, color: "#1f5fa8", marks: [[mu, t.phi]] }], { xLabel: "μ", yLabel: "φ" });
  } catch (e) {
    $("tilt-out").textContent = String(e);
  }
}

function runCompare() {
  const out = $("cmp-out");
  out.textContent = "running…";
  setTimeout(() => {
    try {
      const rows = JSON.parse(compare(Number($("cmp-n").value), Number($("cmp-runs").value), Number($("cmp-seed").value)));
      out.innerHTML = table(
        ["method", "estimate", "s.e.", "rel. error", "ratio"],
        rows.map((r) => [r.method, fmt(r.estimate), fmt(r.std_error), fmt(r.std_error / r.estimate, 3), fmt(r.ratio, 3)]),
      );
    } catch (e) {
      fail(out, e);
    }
  }, 10);
}

function runLadder() {
  const out = $("lad-out");
  out.textContent = "running…";
  setTimeout(() => {
    try {
      const ns = $("lad-ns").value.split(",").map((s) => parseInt(s.trim(), 10)).filter((n) => n > 0);
      const l = JSON.parse(ladder(new Uint32Array(ns), Number($("lad-runs").value), Number($("lad-seed").value)));
      const head = `<p>θ(a) + θ(−a) = ${fmt(l.theta_pos + l.theta_neg, 4)}, φ(a) = ${fmt(l.phi_pos, 4)},
        φ(−a) = ${fmt(l.phi_neg, 4)}</p>`;
      out.innerHTML = head + table(
        ["n", "method", "estimate", "s.e.", "ratio"],
        l.rows.map((r) => [r.n, r.method, fmt(r.estimate), fmt(r.std_error), fmt(r.ratio, 3)]),
      );
      const pick = (m) => l.rows.filter((r) => r.method === m);
      const single = pick("single-tilt"), mix = pick("finite-mixture");
      plot($("lad-plot"), [
        { xs: single.map((r) => r.n), ys: single.map((r) => r.ratio), color: "#c0392b", label: "single tilt" },
        { xs: mix.map((r) => r.n), ys: mix.map((r) => r.ratio), color: "#1f8a4c", label: "mixture" },
      ], { xLabel: "n", yLabel: "ratio", logY: true });
    } catch (e) {
      fail(out, e);
    }
  }, 10);
}

await init();
curveYs = Array.from(rate_curve(MU_LO, MU_HI, curveXs.length));
$("mu").addEventListener("input", showTilt);
$("cmp-go").addEventListener("click", runCompare);
$("lad-go").addEventListener("click", runLadder);
showTilt();
