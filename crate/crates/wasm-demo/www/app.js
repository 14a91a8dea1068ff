// Demo page logic. Expects the wasm-pack output in ./pkg (see README):
//   wasm-pack build --target web --out-dir www/pkg crates/wasm-demo
import init, { synthesize_pair, score_caption } from "./pkg/changecap_demo.js";

const $ = (id) => document.getElementById(id);
const sliders = ["seed", "events", "illum", "noise", "dilate", "erode", "flip"];

function blit(canvasId, rgba, size) {
  const canvas = $(canvasId);
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  const img = new ImageData(new Uint8ClampedArray(rgba), size, size);
  ctx.putImageData(img, 0, 0);
}

function refresh() {
  for (const id of sliders) $(`${id}-out`).textContent = $(id).value;
  const pair = synthesize_pair(
    BigInt($("seed").value),
    Number($("events").value),
    Number($("illum").value),
    Number($("noise").value),
    Number($("dilate").value),
    Number($("erode").value),
    Number($("flip").value),
    $("allkinds").checked,
  );
  const size = pair.size;
  blit("pre", pair.pre_rgba(), size);
  blit("post", pair.post_rgba(), size);
  blit("gt", pair.gt_rgba(), size);
  blit("pseudo", pair.pseudo_rgba(), size);
  $("mask-stats").textContent =
    `changed pixels: ${pair.changed_pixels} · pseudo-label pixels: ${pair.pseudo_pixels}`;

  const captions = JSON.parse(pair.captions_json());
  const list = $("captions");
  list.replaceChildren(
    ...captions.map((text) => {
      const li = document.createElement("li");
      li.textContent = text;
      li.onclick = () => { $("candidate").value = text; score(); };
      return li;
    }),
  );
  $("references").value = captions.join("\n");
  pair.free();
}

function score() {
  const references = $("references").value.split("\n").map((s) => s.trim()).filter(Boolean);
  if (references.length === 0) return;
  const report = JSON.parse(score_caption($("candidate").value, JSON.stringify(references)));
  const fmt = (v) => v.toFixed(2);
  $("m-b1").textContent = fmt(report.bleu1);
  $("m-b2").textContent = fmt(report.bleu2);
  $("m-b3").textContent = fmt(report.bleu3);
  $("m-b4").textContent = fmt(report.bleu4);
  $("m-met").textContent = fmt(report.meteor);
  $("m-rou").textContent = fmt(report.rouge_l);
  $("m-cid").textContent = fmt(report.cider);
  $("m-s").textContent = fmt(report.s_star_m);
  $("metrics").hidden = false;
}

await init();
for (const id of sliders) $(id).oninput = refresh;
$("allkinds").onchange = refresh;
$("score").onclick = score;
refresh();
score();
