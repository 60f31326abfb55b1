import init, { densityCurve, tvCurve, myulaHistogram } from "./pkg/myula_web.js";

const $ = (id) => document.getElementById(id);
const PAD = 40;

function frame(canvas, xr, yr) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const w = canvas.width - 2 * PAD, h = canvas.height - 2 * PAD;
  const sx = (x) => PAD + ((x - xr[0]) / (xr[1] - xr[0])) * w;
  const sy = (y) => canvas.height - PAD - ((y - yr[0]) / (yr[1] - yr[0])) * h;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(PAD, PAD, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "12px sans-serif";
  ctx.fillText(xr[0].toPrecision(3), PAD, canvas.height - PAD + 15);
  ctx.fillText(xr[1].toPrecision(3), PAD + w - 30, canvas.height - PAD + 15);
  ctx.fillText(yr[1].toPrecision(3), 2, PAD + 4);
  ctx.fillText(yr[0].toPrecision(3), 2, canvas.height - PAD);
  return { ctx, sx, sy };
}

function line(f, xs, ys, color) {
  f.ctx.strokeStyle = color;
  f.ctx.lineWidth = 1.5;
  f.ctx.beginPath();
  xs.forEach((x, i) => (i ? f.ctx.lineTo(f.sx(x), f.sy(ys[i])) : f.ctx.moveTo(f.sx(x), f.sy(ys[i]))));
  f.ctx.stroke();
}

// flat rows of width k -> columns
function columns(flat, k) {
  const cols = Array.from({ length: k }, () => []);
  flat.forEach((v, i) => cols[i % k].push(v));
  return cols;
}

const LO = -3, HI = 3, BINS = 60;

function params() {
  return {
    target: $("target").value,
    lambda: Number($("lambda").value),
    gamma: Number($("gamma").value),
    iters: Number($("iters").value),
    seed: BigInt($("seed").value),
  };
}

function drawDensity(p) {
  const [x, pi, pil] = columns(densityCurve(p.target, p.lambda, LO, HI, 601), 3);
  const f = frame($("density"), [LO, HI], [0, Math.max(...pi, ...pil) * 1.05]);
  line(f, x, pi, "#333");
  line(f, x, pil, "#c33");
  return { x, pil };
}

function drawTv(p) {
  const [lam, tv] = columns(tvCurve(p.target, 1e-4, 1, 41), 2);
  const lx = lam.map(Math.log10), ly = tv.map(Math.log10);
  const f = frame($("tv"), [lx[0], lx[lx.length - 1]], [Math.min(...ly), Math.max(...ly)]);
  line(f, lx, ly, "#333");
  const mark = Math.log10(p.lambda);
  f.ctx.strokeStyle = "#c33";
  f.ctx.beginPath();
  f.ctx.moveTo(f.sx(mark), PAD);
  f.ctx.lineTo(f.sx(mark), $("tv").height - PAD);
  f.ctx.stroke();
}

function drawHist(p, curve) {
  const h = myulaHistogram(p.target, p.lambda, p.gamma, p.iters, p.seed, BINS, LO, HI);
  const f = frame($("hist"), [LO, HI], [0, Math.max(...h, ...curve.pil) * 1.05]);
  const bw = (HI - LO) / BINS;
  f.ctx.fillStyle = "#48c";
  h.forEach((v, i) => {
    const x0 = f.sx(LO + i * bw), x1 = f.sx(LO + (i + 1) * bw);
    f.ctx.fillRect(x0, f.sy(v), x1 - x0 - 1, f.sy(0) - f.sy(v));
  });
  line(f, curve.x, curve.pil, "#c33");
}

function redraw(withChain) {
  $("error").textContent = "";
  try {
    const p = params();
    const curve = drawDensity(p);
    drawTv(p);
    if (withChain) drawHist(p, curve);
  } catch (e) {
    $("error").textContent = String(e.message ?? e);
  }
}

await init();
["target", "lambda"].forEach((id) => $(id).addEventListener("change", () => redraw(false)));
$("run").addEventListener("click", () => redraw(true));
redraw(true);
