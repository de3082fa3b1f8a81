/** DOM builders for the annotation list, submit diagnostics, and report
 * table.  Kept free of canvas and fetch so they run under a DOM stub. */

import type { AnnotationResponse, ReportResponse } from "./api.js";
import { Draft, dropWarning, previewNormalize } from "./segments.js";

export function renderDraftList(
  list: HTMLElement,
  drafts: Draft[],
  songDurationS: number,
  onDelete: (id: number) => void,
): void {
  list.innerHTML = "";
  const preview = previewNormalize(drafts, songDurationS);
  for (const d of drafts) {
    const row = document.createElement("li");
    const label = document.createElement("span");
    label.textContent = `${d.startS.toFixed(2)} - ${d.endS.toFixed(2)} s`;
    row.appendChild(label);
    const group = preview.find((g) => g.memberIds.includes(d.id));
    if (group && group.memberIds.length > 1) {
      const merged = document.createElement("span");
      merged.className = "merge-note";
      merged.textContent =
        ` merges to ${group.startS.toFixed(2)} - ${group.endS.toFixed(2)} s`;
      row.appendChild(merged);
    }
    const warning = group ? (group.kept ? null : group.reason)
                          : dropWarning(d);
    if (warning) {
      const badge = document.createElement("span");
      badge.className = "warn-badge";
      badge.textContent = warning;
      row.appendChild(badge);
    }
    const remove = document.createElement("button");
    remove.textContent = "delete";
    remove.onclick = () => onDelete(d.id);
    row.appendChild(remove);
    list.appendChild(row);
  }
}

export function renderSubmitResult(
  box: HTMLElement,
  resp: AnnotationResponse,
): void {
  box.innerHTML = "";
  const head = document.createElement("p");
  head.textContent =
    `submitted ${resp.submitted}: ${resp.kept.length} kept, ` +
    `${resp.dropped.length} dropped`;
  box.appendChild(head);
  for (const k of resp.kept) {
    const line = document.createElement("div");
    line.className = "kept";
    line.textContent = `kept ${k.start_s.toFixed(2)} - ${k.end_s.toFixed(2)} s`;
    box.appendChild(line);
  }
  for (const d of resp.dropped) {
    const line = document.createElement("div");
    line.className = "dropped";
    line.textContent =
      `dropped ${d.start_s.toFixed(2)} - ${d.end_s.toFixed(2)} s: ${d.reason}`;
    box.appendChild(line);
  }
}

export function reportTable(
  current: ReportResponse,
  previous: ReportResponse | null,
): HTMLTableElement {
  const table = document.createElement("table");
  const head = table.insertRow();
  for (const h of ["song", "mean (prev)", "mean (current)",
                   "median (prev)", "median (current)"]) {
    const th = document.createElement("th");
    th.textContent = h;
    head.appendChild(th);
  }
  const fmt = (v: number | undefined) => (v === undefined ? "-" : v.toFixed(2));
  for (const sid of Object.keys(current.songs).sort()) {
    const row = table.insertRow();
    row.insertCell().textContent = sid;
    row.insertCell().textContent = fmt(previous?.songs[sid]?.mean_sdr);
    row.insertCell().textContent = fmt(current.songs[sid].mean_sdr);
    row.insertCell().textContent = fmt(previous?.songs[sid]?.median_sdr);
    row.insertCell().textContent = fmt(current.songs[sid].median_sdr);
  }
  const totals = table.insertRow();
  totals.className = "totals";
  totals.insertCell().textContent = "across songs";
  totals.insertCell().textContent = fmt(previous?.mean_sdr);
  totals.insertCell().textContent = fmt(current.mean_sdr);
  totals.insertCell().textContent = fmt(previous?.median_sdr);
  totals.insertCell().textContent = fmt(current.median_sdr);
  return table;
}
