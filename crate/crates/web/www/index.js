import init, { Demo, levels } from "./pkg/masnet_web.js";

const $ = (id) => document.getElementById(id);
let demo;
let pair = 0;
let running = false;

function draw(canvas, rgba, size) {
  canvas.width = size;
  canvas.height = size;
  const image = new ImageData(new Uint8ClampedArray(rgba), size, size);
  canvas.getContext("2d").putImageData(image, 0, 0);
}

function buildMapCanvases() {
  const maps = $("maps");
  maps.replaceChildren();
  for (let stage = 0; stage < demo.stages(); stage++) {
    for (const branch of [1, 2]) {
      const fig = document.createElement("figure");
      const canvas = document.createElement("canvas");
      canvas.id = `map-${stage}-${branch}`;
      const caption = document.createElement("figcaption");
      caption.textContent = `stage ${stage}, branch ${branch}`;
      fig.append(canvas, caption);
      maps.append(fig);
    }
  }
}

function render(loss) {
  const size = demo.size();
  $("pair-index").textContent = `pair ${pair}`;
  draw($("a"), demo.imageA(), size);
  draw($("b"), demo.imageB(), size);
  draw($("truth"), demo.truth(), size);
  draw($("pred"), demo.prediction(), size);
  for (let stage = 0; stage < demo.stages(); stage++) {
    for (const branch of [1, 2]) {
      draw($(`map-${stage}-${branch}`), demo.attention(stage, branch, $("kind").value), size);
    }
  }
  const lossText = loss === undefined || Number.isNaN(loss) ? "" : `  loss ${loss.toFixed(4)}`;
  $("status").textContent =
    `iter ${demo.iter()}/${demo.maxIters()}${lossText}  IoU on this pair ${(100 * demo.pairIou()).toFixed(1)}%`;
}

function reset() {
  running = false;
  demo = new Demo(7, $("level").value);
  demo.showPair(pair);
  buildMapCanvases();
  render();
}

async function runToEnd() {
  running = true;
  while (running && demo.iter() < demo.maxIters()) {
    render(demo.train(10));
    await new Promise((r) => requestAnimationFrame(r));
  }
  running = false;
}

await init();
for (const level of levels()) {
  $("level").append(new Option(level, level, level === "individual", level === "individual"));
}
$("step").onclick = () => render(demo.train(50));
$("run").onclick = () => { if (!running) runToEnd(); };
$("reset").onclick = reset;
$("prev").onclick = () => { pair = Math.max(0, pair - 1); demo.showPair(pair); render(); };
$("next").onclick = () => { pair += 1; demo.showPair(pair); render(); };
$("level").onchange = () => { demo.setLevel($("level").value); render(); };
$("kind").onchange = () => render();
reset();
