import init, { posterior_band, optimize_demo, lp_gp_map } from "./pkg/greybox_web.js";

const $ = (id) => document.getElementById(id);

function truth(x) {
  return 0.6 * Math.sin(3 * x) + 0.2 * Math.cos(7 * x);
}

function gaussian() {
  const u = 1 - Math.random();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * Math.random());
}

const band = { xs: [], ys: [] };

function drawBand() {
  const c = $("band");
  const g = c.getContext("2d");
  const ls = parseFloat($("band-ls").value);
  const sigma = parseFloat($("band-sigma").value);
  const rows = posterior_band(Float64Array.from(band.xs), Float64Array.from(band.ys), ls, sigma, 1, 200);
  const px = (x) => ((x + 1) / 2) * c.width;
  const py = (y) => c.height / 2 - (y * c.height) / 2.4;
  g.clearRect(0, 0, c.width, c.height);

  g.fillStyle = "rgba(70, 130, 180, 0.25)";
  g.beginPath();
  for (let i = 0; i < rows.length; i += 4) g.lineTo(px(rows[i]), py(rows[i + 3]));
  for (let i = rows.length - 4; i >= 0; i -= 4) g.lineTo(px(rows[i]), py(rows[i + 2]));
  g.fill();

  g.strokeStyle = "steelblue";
  g.beginPath();
  for (let i = 0; i < rows.length; i += 4) g.lineTo(px(rows[i]), py(rows[i + 1]));
  g.stroke();

  g.strokeStyle = "#999";
  g.setLineDash([4, 4]);
  g.beginPath();
  for (let i = 0; i < rows.length; i += 4) g.lineTo(px(rows[i]), py(truth(rows[i])));
  g.stroke();
  g.setLineDash([]);

  g.fillStyle = "black";
  band.xs.forEach((x, i) => g.fillRect(px(x) - 3, py(band.ys[i]) - 3, 6, 6));
}

function runDemo() {
  const steps = parseInt($("opt-steps").value, 10);
  $("opt-status").textContent = "running...";
  setTimeout(() => {
    const t0 = performance.now();
    const r = optimize_demo($("opt-family").value, parseInt($("opt-seed").value, 10), steps);
    $("opt-status").textContent = `${((performance.now() - t0) / 1000).toFixed(1)}s`;
    const c = $("opt");
    const g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    const floor = 1e-6;
    const logs = Array.from(r, (v) => Math.log10(Math.max(v, floor)));
    const hi = Math.max(...logs), lo = Math.min(...logs);
    const px = (t) => 40 + (t / (steps - 1)) * (c.width - 60);
    const py = (v) => 10 + ((hi - v) / Math.max(hi - lo, 1e-9)) * (c.height - 30);
    [["steelblue", 0, "grey-box"], ["darkorange", steps, "black-box"]].forEach(([color, off, name], k) => {
      g.strokeStyle = color;
      g.beginPath();
      for (let t = 0; t < steps; t++) g.lineTo(px(t), py(logs[off + t]));
      g.stroke();
      g.fillStyle = color;
      g.fillText(name, c.width - 90, 20 + 15 * k);
    });
    g.fillStyle = "#444";
    g.fillText(`best regret, log10 [${lo.toFixed(1)}, ${hi.toFixed(1)}]`, 45, c.height - 5);
  }, 10);
}

function drawLp() {
  const res = 80;
  const m = lp_gp_map(parseInt($("lp-seed").value, 10), res);
  const n = res * res;
  const f = m.subarray(0, n), worst = m.subarray(n, 2 * n);
  const lo = Math.min(...f), hi = Math.max(...f);
  const c = $("lp");
  const g = c.getContext("2d");
  const cell = c.width / res;
  for (let i = 0; i < res; i++) {
    for (let j = 0; j < res; j++) {
      const k = i * res + j;
      const shade = Math.round(255 * (1 - (f[k] - lo) / Math.max(hi - lo, 1e-12)));
      g.fillStyle = worst[k] > 0 ? `rgb(${Math.min(255, shade + 80)}, ${shade * 0.5}, ${shade * 0.5})` : `rgb(${shade}, ${shade}, ${shade})`;
      g.fillRect(i * cell, c.height - (j + 1) * cell, cell + 1, cell + 1);
    }
  }
  const [x0, x1] = [m[2 * n], m[2 * n + 1]];
  if (Number.isFinite(x0)) {
    g.strokeStyle = "deepskyblue";
    g.lineWidth = 3;
    g.beginPath();
    g.arc(((x0 + 2) / 4) * c.width, c.height - ((x1 + 2) / 4) * c.height, 8, 0, 2 * Math.PI);
    g.stroke();
    g.lineWidth = 1;
  }
}

await init();

$("band").addEventListener("click", (e) => {
  if (e.shiftKey) {
    band.xs = [];
    band.ys = [];
  } else {
    const rect = e.target.getBoundingClientRect();
    const x = ((e.clientX - rect.left) / rect.width) * 2 - 1;
    band.xs.push(x);
    band.ys.push(truth(x) + parseFloat($("band-sigma").value) * gaussian());
  }
  drawBand();
});
$("band-ls").addEventListener("change", drawBand);
$("band-sigma").addEventListener("change", drawBand);
$("opt-run").addEventListener("click", runDemo);
$("lp-draw").addEventListener("click", drawLp);

drawBand();
drawLp();
