import init, { estimate, convergence, cost_table } from "./pkg/mlp_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fmt(v) {
  return Array.isArray(v) ? (v.length === 1 ? v[0].toFixed(5) : "(" + v.map((x) => x.toFixed(5)).join(", ") + ")") : String(v);
}

function table(head, rows) {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const body = rows.map((r) => "<tr>" + r.map((c) => `<td>${c}</td>`).join("") + "</tr>").join("");
  return `<table><tr>${th}</tr>${body}</table>`;
}

// Runs `work` after the browser has painted the "running" message.
function busy(el, work) {
  el.textContent = "running...";
  setTimeout(() => {
    try {
      work();
    } catch (e) {
      el.textContent = "error: " + e;
    }
  }, 20);
}

function runEstimate() {
  const out = $("est-out");
  busy(out, () => {
    const r = JSON.parse(estimate($("example").value, num("d"), num("est-n"), num("est-m"), num("est-t"), num("est-runs"), num("seed")));
    const c = r.counters;
    out.textContent =
      r.realizations.map((v, i) => `run ${i}: ${fmt(v)}`).join("\n") +
      `\nmean: ${fmt(r.mean)}\ng(x): ${fmt(r.terminal_value)}` +
      `\nper realization: ${c.gaussian_scalars} gaussians, ${c.uniforms} uniforms, ${c.f_evals} f evals, ${c.g_evals} g evals, ${c.clamp_hits} clamp hits`;
  });
}

function plot(points) {
  const cv = $("conv-plot");
  const ctx = cv.getContext("2d");
  const W = cv.width, H = cv.height, pad = 50;
  ctx.clearRect(0, 0, W, H);
  const xs = points.map((p) => Math.log10(p.gaussian_scalars));
  const ys = points.map((p) => Math.log10(Math.max(p.rel_l2_error, 1e-12)));
  const x0 = Math.floor(Math.min(...xs)), x1 = Math.ceil(Math.max(...xs)) || x0 + 1;
  const y0 = Math.floor(Math.min(...ys)), y1 = Math.ceil(Math.max(...ys)) || y0 + 1;
  const px = (x) => pad + ((x - x0) / Math.max(x1 - x0, 1)) * (W - 2 * pad);
  const py = (y) => H - pad - ((y - y0) / Math.max(y1 - y0, 1)) * (H - 2 * pad);
  ctx.strokeStyle = "#ddd";
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  for (let k = x0; k <= x1; k++) {
    ctx.beginPath(); ctx.moveTo(px(k), pad); ctx.lineTo(px(k), H - pad); ctx.stroke();
    ctx.fillText(`1e${k}`, px(k) - 12, H - pad + 16);
  }
  for (let k = y0; k <= y1; k++) {
    ctx.beginPath(); ctx.moveTo(pad, py(k)); ctx.lineTo(W - pad, py(k)); ctx.stroke();
    ctx.fillText(`1e${k}`, 6, py(k) + 4);
  }
  ctx.fillText("gaussian scalars per realization", W / 2 - 90, H - 12);
  ctx.fillText("relative L2 error", pad, pad - 12);
  ctx.strokeStyle = "#1565c0";
  ctx.fillStyle = "#1565c0";
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
  xs.forEach((x, i) => {
    ctx.beginPath(); ctx.arc(px(x), py(ys[i]), 4, 0, 2 * Math.PI); ctx.fill();
    ctx.fillText(`n=${points[i].n}`, px(x) + 6, py(ys[i]) - 6);
  });
}

function runConvergence() {
  const out = $("conv-out");
  busy(out, () => {
    const pts = JSON.parse(convergence($("example").value, num("d"), num("conv-n"), num("conv-runs"), num("seed"), $("conv-ref").value));
    plot(pts);
    out.innerHTML = table(
      ["n", "mean estimate", "reference", "source", "rel. L2 error", "gaussians"],
      pts.map((p) => [p.n, fmt(p.value), fmt(p.reference), p.provenance, p.rel_l2_error.toFixed(6), p.gaussian_scalars]),
    );
  });
}

function runCost() {
  const rows = JSON.parse(cost_table(num("d"), num("cost-n"), 0));
  $("cost-out").innerHTML = table(
    ["n", "M", "flow samples", "gaussian scalars", "uniforms"],
    rows.map((r) => [r.n, r.m, r.flow_samples, r.gaussian_scalars, r.uniforms]),
  );
}

await init();
$("est-go").onclick = runEstimate;
$("conv-go").onclick = runConvergence;
$("cost-go").onclick = runCost;
runCost();
