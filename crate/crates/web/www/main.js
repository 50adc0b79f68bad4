import init, { simulate_episode, sample_environments, return_grid } from "./pkg/tea_web.js";

const $ = (id) => document.getElementById(id);
let animation = null;

function drawCart(traj) {
  const canvas = $("cart");
  const ctx = canvas.getContext("2d");
  const scale = canvas.width / 5.6; // track spans x in [-2.8, 2.8]
  const ground = canvas.height - 40;
  let i = 0;
  if (animation) cancelAnimationFrame(animation);
  const frame = () => {
    const [x, , theta] = traj.states[i];
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#999";
    ctx.beginPath(); ctx.moveTo(0, ground); ctx.lineTo(canvas.width, ground); ctx.stroke();
    for (const edge of [-2.4, 2.4]) {
      const ex = canvas.width / 2 + edge * scale;
      ctx.beginPath(); ctx.moveTo(ex, ground - 10); ctx.lineTo(ex, ground + 10); ctx.stroke();
    }
    const cx = canvas.width / 2 + x * scale;
    const cartW = 40 + 20 * traj.cart_mass;
    ctx.fillStyle = "#3b7dd8";
    ctx.fillRect(cx - cartW / 2, ground - 24, cartW, 24);
    const len = 2 * traj.pole_length * scale * 0.5;
    ctx.strokeStyle = "#d8643b"; ctx.lineWidth = 6;
    ctx.beginPath(); ctx.moveTo(cx, ground - 24);
    ctx.lineTo(cx + len * Math.sin(theta), ground - 24 - len * Math.cos(theta)); ctx.stroke();
    ctx.lineWidth = 1;
    ctx.fillStyle = "#222";
    ctx.fillText(`step ${i} / ${traj.actions.length}`, 8, 14);
    i += 1;
    if (i < traj.states.length) animation = requestAnimationFrame(frame);
  };
  frame();
}

function runEpisode() {
  const traj = JSON.parse(simulate_episode(+$("pole").value, +$("mass").value, $("controller").value, +$("ep-seed").value));
  $("ep-result").textContent = `return ${traj.ret}${traj.truncated ? " (cap reached)" : ""}`;
  drawCart(traj);
}

function axes(ctx, w, h, pad) {
  ctx.strokeStyle = "#222";
  ctx.beginPath(); ctx.moveTo(pad, 10); ctx.lineTo(pad, h - pad); ctx.lineTo(w - 10, h - pad); ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText("pole half-length 0.1 .. 2.0", w / 2 - 60, h - 8);
  ctx.save(); ctx.translate(12, h / 2 + 40); ctx.rotate(-Math.PI / 2); ctx.fillText("cart mass 0.5 .. 2.0", 0, 0); ctx.restore();
}

function sampleEnvs() {
  const manifest = JSON.parse(sample_environments(+$("env-seed").value, 5, 10));
  const canvas = $("scatter"), ctx = canvas.getContext("2d");
  const pad = 36, w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  axes(ctx, w, h, pad);
  for (const e of manifest.environments) {
    const px = pad + ((e.pole_length - 0.1) / 1.9) * (w - pad - 20);
    const py = h - pad - ((e.cart_mass - 0.5) / 1.5) * (h - pad - 20);
    ctx.fillStyle = e.role === "source" ? "#3b7dd8" : "#d8643b";
    ctx.beginPath(); ctx.arc(px, py, 5, 0, 2 * Math.PI); ctx.fill();
    ctx.fillStyle = "#222"; ctx.fillText(e.label, px + 7, py + 4);
  }
}

function surface() {
  const res = +$("res").value;
  const grid = JSON.parse(return_grid(res, $("controller").value, 3, 0));
  const canvas = $("heat"), ctx = canvas.getContext("2d");
  const pad = 36, w = canvas.width, h = canvas.height;
  const cw = (w - pad - 20) / res, ch = (h - pad - 20) / res;
  ctx.clearRect(0, 0, w, h);
  grid.returns.forEach((row, i) => row.forEach((r, j) => {
    const t = r / 500;
    ctx.fillStyle = `rgb(${Math.round(255 * (1 - t))}, ${Math.round(120 + 100 * t)}, ${Math.round(255 * t)})`;
    ctx.fillRect(pad + i * cw, h - pad - (j + 1) * ch, cw + 0.5, ch + 0.5);
  }));
  axes(ctx, w, h, pad);
  const flat = grid.returns.flat();
  $("surface-info").textContent = `mean return ${(flat.reduce((a, b) => a + b, 0) / flat.length).toFixed(1)} (${$("controller").value})`;
}

async function main() {
  await init();
  $("status").textContent = "";
  for (const id of ["pole", "mass"]) {
    $(id).addEventListener("input", () => { $(`${id}-out`).textContent = (+$(id).value).toFixed(2); });
  }
  $("run").addEventListener("click", runEpisode);
  $("sample").addEventListener("click", sampleEnvs);
  $("surface").addEventListener("click", surface);
  sampleEnvs();
  runEpisode();
}

main().catch((e) => { $("status").textContent = `Failed to load: ${e}`; });
