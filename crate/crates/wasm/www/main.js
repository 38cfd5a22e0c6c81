import init, { renderPrompts, pviFromProbs, syntheticRun } from "./pkg/icpvi_wasm.js";

const $ = (id) => document.getElementById(id);

const example = {
  template: [
    "id = cola",
    "field.text = Context",
    "question = Question: Is this {labels}?",
    "answer_prefix = Answer:",
  ].join("\n"),
  labels: ["unacceptable", "acceptable"],
  exemplars: [
    { text: "How much harder has it rained, the faster a flow you see in the river?", label: "acceptable" },
    { text: "The more obnoxious Fred, the less attention you should pay to him.", label: "unacceptable" },
    { text: "I'm glad I saw anybody.", label: "unacceptable" },
    { text: "Julie and Jenny arrived first", label: "acceptable" },
  ],
  query: "John wrote books.",
};

function render() {
  $("prompt-error").textContent = "";
  try {
    const out = JSON.parse(renderPrompts($("prompt-input").value));
    $("input-target").textContent = out.input_target;
    $("null-target").textContent = out.null_target;
  } catch (e) {
    $("prompt-error").textContent = String(e.message ?? e);
  }
}

function calc() {
  try {
    const v = pviFromProbs(Number($("p-null").value), Number($("p-input").value));
    $("pvi-out").textContent = v.toFixed(4);
  } catch (e) {
    $("pvi-out").textContent = String(e.message ?? e);
  }
}

function drawHistogram(hist) {
  const canvas = $("hist");
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const bins = hist.bins;
  const max = Math.max(1, ...bins.map((b) => b.count_correct + b.count_incorrect));
  const pad = 30;
  const w = (width - 2 * pad) / bins.length;
  const scale = (height - 2 * pad) / max;
  bins.forEach((b, i) => {
    const x = pad + i * w;
    const hc = b.count_correct * scale;
    const hi = b.count_incorrect * scale;
    ctx.fillStyle = "#2e7d32";
    ctx.fillRect(x + 1, height - pad - hc, w - 2, hc);
    ctx.fillStyle = "#c62828";
    ctx.fillRect(x + 1, height - pad - hc - hi, w - 2, hi);
  });
  ctx.fillStyle = "#222";
  ctx.font = "12px sans-serif";
  ctx.fillText(bins[0].left.toFixed(2), pad, height - 10);
  const last = bins[bins.length - 1].right.toFixed(2);
  ctx.fillText(last, width - pad - ctx.measureText(last).width, height - 10);
  ctx.fillText("PVI (bits)", width / 2 - 25, height - 10);
}

function run() {
  $("run-error").textContent = "";
  try {
    const out = JSON.parse(
      syntheticRun(
        Number($("n-test").value),
        Number($("noise").value),
        BigInt($("seed").value),
        Number($("bins").value),
      ),
    );
    const r = out.report;
    const fmt = (v) => (v === null || v === undefined ? "-" : v.toFixed(3));
    $("strata").innerHTML = [
      ["accuracy", r.accuracy],
      ["accuracy, lowest 20% PVI", r.acc_low_pvi],
      ["accuracy, highest 20% PVI", r.acc_high_pvi],
      ["mean PVI, correct", r.mean_pvi_true],
      ["mean PVI, incorrect", r.mean_pvi_false],
    ]
      .map(([k, v]) => `<tr><th>${k}</th><td>${fmt(v)}</td></tr>`)
      .join("");
    drawHistogram(out.histogram);
  } catch (e) {
    $("run-error").textContent = String(e.message ?? e);
  }
}

await init();
$("prompt-input").value = JSON.stringify(example, null, 2);
$("render").addEventListener("click", render);
$("calc").addEventListener("click", calc);
$("run").addEventListener("click", run);
render();
calc();
run();
