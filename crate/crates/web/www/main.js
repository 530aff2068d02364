import init, { builtinNames, stepDistribution, checkCoin, monteCarloCoin, checkBuiltin } from "./pkg/casim_web.js";

const $ = (id) => document.getElementById(id);

function params() {
  return {
    heads: parseFloat($("heads").value),
    sampler: $("sampler").value,
    param: parseFloat($("param").value),
    epsilon: parseFloat($("epsilon").value),
  };
}

function bars(el, rows) {
  el.innerHTML = "";
  for (const [label, p, cls] of rows) {
    const name = document.createElement("span");
    name.textContent = label;
    const track = document.createElement("div");
    const bar = document.createElement("div");
    bar.className = "bar " + (cls || "");
    bar.style.width = (100 * p).toFixed(2) + "%";
    track.appendChild(bar);
    const value = document.createElement("span");
    value.textContent = p.toFixed(4);
    el.append(name, track, value);
  }
}

function fail(el, err) {
  el.innerHTML = "";
  const msg = document.createElement("p");
  msg.className = "error";
  msg.textContent = String(err.message || err);
  el.appendChild(msg);
}

function renderReport(el, report) {
  el.innerHTML = "";
  const head = document.createElement("p");
  const verdict = document.createElement("strong");
  verdict.className = "verdict " + report.verdict;
  verdict.textContent = report.verdict;
  head.append(verdict, ` with TVD ${report.distanceValue.toFixed(4)} at ε = ${report.epsilon}`);
  if (report.mcStats) {
    head.append(` (mean ${report.mcStats.mean.toFixed(4)} ± ${report.mcStats.std.toFixed(4)} over ${report.mcStats.runs} runs)`);
  }
  const grid = document.createElement("div");
  grid.className = "bars";
  const keys = [...new Set([...Object.keys(report.lhs), ...Object.keys(report.rhs)])].sort();
  const rows = [];
  for (const k of keys) {
    rows.push([k + " ref", report.lhs[k] || 0, "ref"]);
    rows.push([k + " sim", report.rhs[k] || 0]);
  }
  bars(grid, rows);
  el.append(head, grid);
}

function refresh() {
  const p = params();
  $("heads-out").textContent = p.heads.toFixed(2);
  try {
    const step = JSON.parse(stepDistribution(p.heads, p.sampler, p.param));
    bars($("step"), ["Heads", "Tails"].map((t) => [t, step.induced[t] || 0]));
  } catch (e) {
    fail($("step"), e);
  }
  try {
    renderReport($("exact"), JSON.parse(checkCoin(p.heads, p.sampler, p.param, p.epsilon)));
  } catch (e) {
    fail($("exact"), e);
  }
}

function runMonteCarlo() {
  const p = params();
  try {
    const report = monteCarloCoin(p.heads, p.sampler, p.param, p.epsilon,
      parseInt($("samples").value, 10), parseInt($("runs").value, 10), parseInt($("seed").value, 10));
    renderReport($("mc"), JSON.parse(report));
  } catch (e) {
    fail($("mc"), e);
  }
}

await init();
for (const name of builtinNames()) {
  const opt = document.createElement("option");
  opt.textContent = name;
  $("builtin").appendChild(opt);
}
for (const id of ["heads", "sampler", "param", "epsilon"]) {
  $(id).addEventListener("input", refresh);
}
$("run-mc").addEventListener("click", runMonteCarlo);
$("run-builtin").addEventListener("click", () => {
  try {
    $("builtin-out").textContent = checkBuiltin($("builtin").value, params().epsilon);
  } catch (e) {
    $("builtin-out").textContent = String(e.message || e);
  }
});
refresh();
