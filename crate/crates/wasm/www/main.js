import init, { Demo, hapke_curve } from "./pkg/varimix_wasm.js";

const $ = (id) => document.getElementById(id);
const COLOURS = ["#2a9d3f", "#b5651d", "#1f6fb4"];
let demo = null;
let picked = null;

function drawMap(canvas, bytes, size) {
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  if (bytes.length === 0) {
    ctx.clearRect(0, 0, size, size);
    return;
  }
  ctx.putImageData(new ImageData(new Uint8ClampedArray(bytes), size, size), 0, 0);
}

function plot(canvas, xs, series, { ymax, xlabel }) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 32;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 8, w - pad - 8, h - pad - 8);
  const x0 = xs[0];
  const x1 = xs[xs.length - 1];
  const top = ymax ?? Math.max(1e-9, ...series.flatMap((s) => s.ys));
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - pad - 8);
  const py = (y) => h - pad - (y / top) * (h - pad - 16);
  for (const s of series) {
    ctx.strokeStyle = s.colour;
    ctx.lineWidth = s.width ?? 1.5;
    ctx.globalAlpha = s.alpha ?? 1;
    ctx.beginPath();
    s.ys.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
  }
  ctx.globalAlpha = 1;
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(top.toFixed(2), 2, 16);
  ctx.fillText(xlabel, w / 2 - 20, h - 8);
}

function showPixel() {
  if (!demo || !picked) return;
  const [r, c] = picked;
  const wl = demo.wavelengths();
  const bands = wl.length;
  const series = [];
  for (let k = 0; k < 3; k++) {
    const v = demo.variants(k);
    for (let j = 0; j < v.length / bands; j++) {
      series.push({ ys: Array.from(v.slice(j * bands, (j + 1) * bands)), colour: COLOURS[k], alpha: 0.35, width: 1 });
    }
  }
  series.push({ ys: Array.from(demo.pixel_spectrum(r, c)), colour: "#000", width: 2 });
  plot($("spectrum"), Array.from(wl), series, { xlabel: "wavelength (nm)" });
  const fmt = (a) => Array.from(a).map((v) => v.toFixed(2)).join(" / ");
  const est = demo.estimate_abundances(r, c);
  $("pixcap").textContent =
    `pixel (${r}, ${c}) true ${fmt(demo.truth_abundances(r, c))}` + (est.length ? `, estimate ${fmt(est)}` : "");
}

function pick(ev) {
  if (!demo) return;
  const rect = ev.target.getBoundingClientRect();
  const size = demo.size();
  const c = Math.min(size - 1, Math.floor(((ev.clientX - rect.left) / rect.width) * size));
  const r = Math.min(size - 1, Math.floor(((ev.clientY - rect.top) / rect.height) * size));
  picked = [r, c];
  showPixel();
}

function synthesize() {
  const t = performance.now();
  try {
    demo?.free();
    demo = new Demo(
      Number($("size").value),
      Number($("bands").value),
      Number($("snr").value),
      Number($("var").value),
      BigInt($("seed").value),
    );
  } catch (e) {
    demo = null;
    $("status").textContent = `error: ${e.message ?? e}`;
    return;
  }
  const size = demo.size();
  drawMap($("truth"), demo.truth_rgba(), size);
  drawMap($("estimate"), new Uint8Array(), size);
  $("estcap").textContent = "estimate";
  picked = [Math.floor(size / 2), Math.floor(size / 2)];
  showPixel();
  $("status").textContent = `scene ${size}x${size} generated in ${(performance.now() - t).toFixed(0)} ms`;
}

function runUnmix() {
  if (!demo) return;
  const algo = $("algo").value;
  $("status").textContent = `running ${algo}…`;
  // let the status repaint before the solver blocks the thread
  setTimeout(() => {
    const t = performance.now();
    try {
      const err = demo.unmix(algo, Number($("iters").value));
      drawMap($("estimate"), demo.estimate_rgba(), demo.size());
      $("estcap").textContent = `${algo}: RMSE ${err.toFixed(4)}`;
      $("status").textContent = `${algo} finished in ${(performance.now() - t).toFixed(0)} ms`;
      showPixel();
    } catch (e) {
      $("status").textContent = `error: ${e.message ?? e}`;
    }
  }, 20);
}

function drawHapke() {
  const mu1 = Number($("mu1").value);
  const mu2 = Number($("mu2").value);
  const n = 100;
  const xs = Array.from({ length: n + 1 }, (_, i) => i / n);
  const ys = Array.from(hapke_curve(mu1, mu2, n));
  plot($("hapke"), xs, [{ ys: xs, colour: "#bbb", width: 1 }, { ys, colour: "#b5651d", width: 2 }], {
    ymax: 1,
    xlabel: "single-scattering albedo",
  });
  $("hapkecap").textContent = `reflectance at albedo 0.5: ${ys[n / 2].toFixed(4)}`;
}

await init();
$("synth").addEventListener("click", synthesize);
$("run").addEventListener("click", runUnmix);
$("truth").addEventListener("click", pick);
$("estimate").addEventListener("click", pick);
$("mu1").addEventListener("input", drawHapke);
$("mu2").addEventListener("input", drawHapke);
synthesize();
drawHapke();
