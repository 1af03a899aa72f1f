/** Virtualized packet table plus the per-packet layer tree.
 *
 * Only the visible row window (plus a small overscan) exists in the DOM,
 * so the table stays responsive at 100k+ rows; total scroll height is
 * kept by a spacer element. Budget: <= ~60 row nodes alive regardless of
 * row count.
 */

import type { LayerDoc, RecordDoc } from "./types.js";

export const ROW_HEIGHT = 22;
const OVERSCAN = 8;
const FALLBACK_VIEWPORT = 600; // used when layout yields no height (tests)

export const COLUMN_TITLES = ["No", "Time", "Source", "Destination", "Protocol", "Length", "Info"];
const COLUMN_CLASSES = ["no", "time", "source", "destination", "protocol", "length", "info"];

function cellValues(record: RecordDoc): (string | number)[] {
  const row = record.summary;
  return [row.no, row.time, row.source, row.destination, row.protocol, row.length, row.info];
}

export class PacketTable {
  private rows: RecordDoc[] = [];
  private selected: number | null = null;
  private followTail = true;

  private readonly viewport: HTMLElement;
  private readonly spacer: HTMLElement;
  private readonly window: HTMLElement;
  private readonly onSelect: (index: number, record: RecordDoc) => void;

  constructor(root: HTMLElement, onSelect: (index: number, record: RecordDoc) => void) {
    this.onSelect = onSelect;

    const header = document.createElement("div");
    header.className = "pkt-header pkt-grid";
    for (let i = 0; i < COLUMN_TITLES.length; i++) {
      const cell = document.createElement("span");
      cell.className = `col col-${COLUMN_CLASSES[i]}`;
      cell.textContent = COLUMN_TITLES[i] ?? "";
      header.appendChild(cell);
    }

    this.viewport = document.createElement("div");
    this.viewport.className = "pkt-viewport";
    this.spacer = document.createElement("div");
    this.spacer.className = "pkt-spacer";
    this.window = document.createElement("div");
    this.window.className = "pkt-window";
    this.spacer.appendChild(this.window);
    this.viewport.appendChild(this.spacer);
    this.viewport.addEventListener("scroll", () => {
      const nearBottom =
        this.viewport.scrollTop + this.viewport.clientHeight >= this.spacer.offsetHeight - ROW_HEIGHT;
      this.followTail = nearBottom;
      this.render();
    });

    root.replaceChildren(header, this.viewport);
  }

  setRows(rows: RecordDoc[]): void {
    this.rows = rows;
    this.spacer.style.height = `${rows.length * ROW_HEIGHT}px`;
    if (this.followTail) {
      this.viewport.scrollTop = Math.max(0, rows.length * ROW_HEIGHT - this.viewportHeight());
    }
    this.render();
  }

  setSelected(index: number | null): void {
    this.selected = index;
    this.render();
  }

  rowCount(): number {
    return this.rows.length;
  }

  /** DOM nodes currently alive in the window (for the virtualization budget). */
  liveNodeCount(): number {
    return this.window.childElementCount;
  }

  private viewportHeight(): number {
    return this.viewport.clientHeight || FALLBACK_VIEWPORT;
  }

  private render(): void {
    const height = this.viewportHeight();
    const first = Math.max(0, Math.floor(this.viewport.scrollTop / ROW_HEIGHT) - OVERSCAN);
    const visible = Math.ceil(height / ROW_HEIGHT) + OVERSCAN * 2;
    const last = Math.min(this.rows.length, first + visible);

    const children: HTMLElement[] = [];
    for (let i = first; i < last; i++) {
      const record = this.rows[i];
      if (!record) continue;
      const row = document.createElement("div");
      row.className = "pkt-row pkt-grid" + (i === this.selected ? " selected" : "");
      row.style.top = `${i * ROW_HEIGHT}px`;
      row.dataset.index = String(i);
      const values = cellValues(record);
      for (let c = 0; c < values.length; c++) {
        const cell = document.createElement("span");
        cell.className = `col col-${COLUMN_CLASSES[c]}`;
        cell.textContent = String(values[c]);
        row.appendChild(cell);
      }
      row.addEventListener("click", () => this.onSelect(i, record));
      children.push(row);
    }
    this.window.replaceChildren(...children);
  }
}

function fieldText(value: unknown): string {
  if (value === null || value === undefined) return "-";
  if (Array.isArray(value)) return value.map(fieldText).join(", ");
  return String(value);
}

function layerNode(layer: LayerDoc): HTMLElement {
  const details = document.createElement("details");
  details.className = "layer";
  details.open = true;
  const summary = document.createElement("summary");
  summary.textContent = layer.layer;
  details.appendChild(summary);
  const list = document.createElement("dl");
  for (const [name, value] of Object.entries(layer.fields)) {
    const term = document.createElement("dt");
    term.textContent = name;
    const def = document.createElement("dd");
    def.textContent = fieldText(value);
    list.append(term, def);
  }
  details.appendChild(list);
  return details;
}

/** The decoded layer stack of one packet, outermost first, plus notes. */
export function renderLayerTree(record: RecordDoc): HTMLElement {
  const root = document.createElement("div");
  root.className = "layer-tree";
  const title = document.createElement("div");
  title.className = "layer-title";
  title.textContent = `Packet #${record.summary.no} (${record.summary.length} bytes)`;
  root.appendChild(title);
  for (const layer of record.layers) {
    root.appendChild(layerNode(layer));
  }
  if (record.notes.length) {
    const notes = document.createElement("div");
    notes.className = "layer-notes";
    notes.textContent = `notes: ${record.notes.join("; ")}`;
    root.appendChild(notes);
  }
  return root;
}
