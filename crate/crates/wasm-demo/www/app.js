import init, { WasmSession, fixture_csv } from "./pkg/gridwrangle_wasm.js";

const $ = (id) => document.getElementById(id);
let session = null;
let csv = "";

function status(msg, isErr = false) {
  $("status").textContent = msg;
  $("status").className = isErr ? "err" : "";
}

function guard(fn) {
  return (...args) => {
    try {
      fn(...args);
    } catch (e) {
      status(String(e.message ?? e), true);
    }
  };
}

function load(text) {
  csv = text;
  const config = JSON.stringify({ outlier_k: Number($("outlier-k").value) });
  session?.free();
  session = new WasmSession(csv, config);
  const pairs = JSON.parse(session.charts());
  $("pair").innerHTML = pairs
    .map(([c, n]) => `<option value="${c}\u0000${n}">${n} by ${c}</option>`)
    .join("");
  $("suggestions").tBodies[0].innerHTML = "";
  refresh();
}

function refresh() {
  if (!session) return;
  const info = JSON.parse(session.info());
  status(`version ${info.version}, ${info.rows} rows, ${info.groups} groups, ${info.error_total} errors, cursor ${info.cursor}/${info.history_len}`);
  drawChart();
  drawRanked();
}

function drawChart() {
  const [cat, num] = $("pair").value.split("\u0000");
  const chart = JSON.parse(
    session.chart(cat, num, $("sampling").value, Number($("k").value), BigInt($("seed").value)),
  );
  $("groups").innerHTML = chart.groups.map(groupSvg).join("");
}

function groupSvg(g) {
  const nums = g.points.map((p) => p.value).filter((v) => typeof v === "number");
  const lo = Math.min(0, ...nums);
  const hi = Math.max(1, ...nums);
  const w = 220, h = 120;
  const y = (v) => (typeof v === "number" ? h - 10 - ((v - lo) / (hi - lo)) * (h - 20) : h - 4);
  const dots = g.points.map((p, i) => {
    const cls = p.codes[0] ?? "clean";
    const x = 10 + ((i + 0.5) / g.points.length) * (w - 20);
    return `<circle class="${cls}" cx="${x}" cy="${y(p.value)}" r="4"><title>row ${p.row}: ${JSON.stringify(p.value)} ${p.codes.join(" ")}</title></circle>`;
  });
  const counts = Object.entries(g.error_counts).map(([c, n]) => `${c} ${n}`).join(", ");
  return `<div class="group"><h4>${g.key}</h4><small>${g.cardinality} rows${counts ? "; " + counts : ""}${g.fallback ? "; no anchor" : ""}</small>
    <svg width="${w}" height="${h}">${dots.join("")}</svg></div>`;
}

function drawRanked() {
  const rows = JSON.parse(session.ranked()).filter((r) => r.errors > 0);
  $("ranked").tBodies[0].innerHTML = rows
    .map((r) => {
      const buttons = Object.keys(r.error_counts)
        .map((c) => `<button data-key="${r.key}" data-code="${c}">${c}</button>`)
        .join(" ");
      return `<tr><td>${r.key}</td><td>${r.errors}</td><td>${JSON.stringify(r.error_counts)}</td><td>${buttons}</td></tr>`;
    })
    .join("");
}

function showSuggestions(key, code) {
  const list = JSON.parse(session.suggest(key, code));
  $("suggestions").tBodies[0].innerHTML = list
    .map((s, i) => {
      const a = s.action;
      const label = `${a.kind} ${a.target} ${JSON.stringify(a.scope)}`;
      return `<tr><td>${s.rank}</td><td>${label}</td><td>${s.predicted_resolved}</td><td>${s.predicted_new_errors}</td>
        <td><button data-i="${i}" data-op="preview">preview</button> <button data-i="${i}" data-op="apply">apply</button></td></tr>`;
    })
    .join("");
  $("suggestions").dataset.list = JSON.stringify(list.map((s) => s.action));
}

function suggestionOp(i, op) {
  const action = JSON.stringify(JSON.parse($("suggestions").dataset.list)[i]);
  if (op === "preview") {
    $("out").textContent = JSON.stringify(JSON.parse(session.preview(action)), null, 2);
    return;
  }
  $("out").textContent = JSON.stringify(JSON.parse(session.apply(action)), null, 2);
  $("suggestions").tBodies[0].innerHTML = "";
  refresh();
}

await init();

$("load-fixture").onclick = guard(() => load(fixture_csv()));
$("file").onchange = guard(async (e) => {
  const f = e.target.files[0];
  if (f) guard(load)(await f.text());
});
$("outlier-k").onchange = guard(() => csv && load(csv));
for (const id of ["pair", "sampling", "k", "seed"]) $(id).onchange = guard(refresh);
$("undo").onclick = guard(() => {
  $("out").textContent = JSON.stringify(JSON.parse(session.undo()), null, 2);
  refresh();
});
$("redo").onclick = guard(() => {
  $("out").textContent = JSON.stringify(JSON.parse(session.redo()), null, 2);
  refresh();
});
$("script").onclick = guard(() => ($("out").textContent = session.script("python")));
$("ranked").onclick = guard((e) => {
  const b = e.target.closest("button");
  if (b) showSuggestions(b.dataset.key, b.dataset.code);
});
$("suggestions").onclick = guard((e) => {
  const b = e.target.closest("button");
  if (b) suggestionOp(Number(b.dataset.i), b.dataset.op);
});

guard(() => load(fixture_csv()))();
