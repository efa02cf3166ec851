import init, {
  synthetic_topics,
  synthetic_search,
  fuse_explorer,
  xinfap_explorer,
} from "./pkg/gar_wasm.js";

const $ = (id) => document.getElementById(id);

function escape(s) {
  return String(s).replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function fail(target, e) {
  target.innerHTML = `<p class="error">${escape(e)}</p>`;
}

function hitsTable(result) {
  const ap = result.ap === null ? "" : ` (AP ${result.ap.toFixed(4)})`;
  const rows = result.hits
    .map(
      (h) =>
        `<tr class="${h.relevant ? "rel" : ""}"><td>${h.rank}</td><td>${escape(h.shot)}</td>` +
        `<td>${h.score.toFixed(4)}</td><td>${escape(h.description)}</td></tr>`,
    )
    .join("");
  return `<div><h3>${escape(result.channel)}${ap}</h3><table>${rows}</table></div>`;
}

function runSearch() {
  const out = $("search-out");
  const channels = [...document.querySelectorAll(".channel:checked")].map((c) => c.value).join(",");
  try {
    const r = JSON.parse(synthetic_search($("query").value, channels, Number($("k").value)));
    let html = "";
    if (r.oov.length) html += `<p>Out-of-vocabulary terms: ${r.oov.map(escape).join(", ")}</p>`;
    if (r.t2t.length) html += `<p>Rewrites:</p><ul>${r.t2t.map((t) => `<li>${escape(t)}</li>`).join("")}</ul>`;
    if (r.images.length) html += `<p>${r.images.map((src) => `<img src="${src}" alt="">`).join(" ")}</p>`;
    if (r.captions.length) html += `<p>Captions:</p><ul>${r.captions.map((t) => `<li>${escape(t)}</li>`).join("")}</ul>`;
    for (const w of r.warnings) html += `<p class="error">${escape(w)}</p>`;
    const fused = { ...r.fused, channel: "fused" };
    html += `<div class="columns">${hitsTable(fused)}${r.channels.map(hitsTable).join("")}</div>`;
    out.innerHTML = html;
  } catch (e) {
    fail(out, e);
  }
}

function runFuse() {
  const out = $("fuse-out");
  try {
    out.textContent = fuse_explorer($("runs").value, $("weights").value, $("norm").value, Number($("cutoff").value));
    out.className = "";
  } catch (e) {
    out.textContent = String(e);
    out.className = "error";
  }
}

function runSample() {
  const out = $("sample-out");
  try {
    const r = JSON.parse(
      xinfap_explorer(
        Number($("top-rate").value),
        Number($("bottom-rate").value),
        Number($("resamples").value),
        BigInt($("seed").value || 0),
      ),
    );
    const peak = Math.max(...r.histogram, 1);
    const bars = r.histogram
      .map((c, i) => {
        const lo = (i / 20).toFixed(2);
        return `<tr><td>${lo}</td><td><span class="bar" style="width:${(300 * c) / peak}px"></span> ${c}</td></tr>`;
      })
      .join("");
    out.innerHTML =
      `<p>True AP ${r.true_ap.toFixed(4)}, mean xinfAP ${r.mean.toFixed(4)} ` +
      `(sd ${r.std_dev.toFixed(4)}, range ${r.min.toFixed(4)} to ${r.max.toFixed(4)}) over ${r.resamples} resamples</p>` +
      `<table>${bars}</table>`;
  } catch (e) {
    fail(out, e);
  }
}

await init();
const topics = JSON.parse(synthetic_topics());
$("topics").innerHTML = topics.map((t) => `<option value="${escape(t.text)}">`).join("");
$("query").value = topics[0].text;
$("search").addEventListener("click", runSearch);
$("fuse").addEventListener("click", runFuse);
$("sample").addEventListener("click", runSample);
$("status").textContent = `${topics.length} synthetic topics loaded.`;
