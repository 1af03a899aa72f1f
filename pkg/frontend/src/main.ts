/** Dashboard wiring: session controls, live table, filter box, stats, alerts. */

import {
  ApiError,
  createSession,
  listInterfaces,
  putFilter,
  startSession,
  stopSession,
  streamUrl,
} from "./api.js";
import {
  applyEvent,
  controlsFor,
  initialState,
  selectRow,
  setConnection,
  setFilterAccepted,
  setFilterRejected,
  setSession,
  type ViewState,
} from "./model.js";
import { EventStream } from "./stream.js";
import { PacketTable, renderLayerTree } from "./table.js";
import type { SessionDoc, StreamEvent } from "./types.js";

const FILTER_DEBOUNCE_MS = 300;

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class Dashboard {
  private state: ViewState = initialState();
  private stream: EventStream | null = null;
  private table: PacketTable;
  private filterTimer: number | undefined;

  private readonly iface = element<HTMLSelectElement>("iface");
  private readonly sessionLabel = element<HTMLElement>("session-label");
  private readonly startButton = element<HTMLButtonElement>("start");
  private readonly stopButton = element<HTMLButtonElement>("stop");
  private readonly newButton = element<HTMLButtonElement>("new-session");
  private readonly filterInput = element<HTMLInputElement>("filter");
  private readonly filterErrorBox = element<HTMLElement>("filter-error");
  private readonly banner = element<HTMLElement>("banner");
  private readonly dot = element<HTMLElement>("conn-dot");
  private readonly counters = element<HTMLElement>("counters");
  private readonly statsBox = element<HTMLElement>("stats");
  private readonly alertsBox = element<HTMLElement>("alerts");
  private readonly detailBox = element<HTMLElement>("detail");

  constructor() {
    this.table = new PacketTable(element("packets"), (index) => {
      this.state = selectRow(this.state, index);
      this.render();
    });
    this.newButton.addEventListener("click", () => void this.newSession());
    this.startButton.addEventListener("click", () => void this.start());
    this.stopButton.addEventListener("click", () => void this.stop());
    this.filterInput.addEventListener("input", () => this.filterEdited());
  }

  async boot(): Promise<void> {
    try {
      const interfaces = await listInterfaces();
      this.iface.replaceChildren(
        ...interfaces.map((info) => {
          const option = document.createElement("option");
          option.value = info.name;
          option.textContent = `${info.name}${info.up ? "" : " (down)"}`;
          return option;
        }),
      );
    } catch (error) {
      this.showError(error);
    }
    this.render();
  }

  private attach(session: SessionDoc): void {
    this.stream?.stop();
    this.state = setSession(this.state, session);
    this.filterInput.value = session.filter;
    const stream = new EventStream({
      url: (since) => streamUrl(session.id, since),
      onEvent: (event: StreamEvent) => {
        this.state = applyEvent(this.state, event);
        this.render();
      },
      onStatus: (status) => {
        this.state = setConnection(this.state, status);
        this.render();
      },
    });
    this.stream = stream;
    stream.start(0);
    this.render();
  }

  private async newSession(): Promise<void> {
    const name = this.iface.value;
    if (!name) return;
    try {
      const session = await createSession({ kind: "live", interface: name }, this.filterInput.value);
      this.attach(session);
    } catch (error) {
      this.showError(error);
    }
  }

  private async start(): Promise<void> {
    if (!this.state.session) return;
    try {
      const doc = await startSession(this.state.session.id);
      this.state = { ...this.state, session: doc, sessionState: doc.state };
      this.render();
    } catch (error) {
      this.showError(error);
    }
  }

  private async stop(): Promise<void> {
    if (!this.state.session) return;
    try {
      const doc = await stopSession(this.state.session.id);
      this.state = { ...this.state, session: doc, sessionState: doc.state };
      this.render();
    } catch (error) {
      this.showError(error);
    }
  }

  private filterEdited(): void {
    window.clearTimeout(this.filterTimer);
    this.filterTimer = window.setTimeout(() => void this.pushFilter(), FILTER_DEBOUNCE_MS);
  }

  private async pushFilter(): Promise<void> {
    const text = this.filterInput.value;
    if (!this.state.session) {
      this.state = setFilterAccepted(this.state, text);
      this.render();
      return;
    }
    try {
      await putFilter(this.state.session.id, text);
      this.state = setFilterAccepted(this.state, text);
    } catch (error) {
      const rejection = error instanceof ApiError ? error.filterError() : null;
      if (rejection) {
        this.state = setFilterRejected(this.state, rejection);
      } else {
        this.showError(error);
      }
    }
    this.render();
  }

  private showError(error: unknown): void {
    const text =
      error instanceof ApiError
        ? `${error.body.error ?? "error"}: ${error.message}`
        : String(error);
    this.banner.textContent = text;
    this.banner.classList.add("visible");
    window.setTimeout(() => this.banner.classList.remove("visible"), 6000);
  }

  private render(): void {
    const { startEnabled, stopEnabled } = controlsFor(this.state);
    this.startButton.disabled = !this.state.session || !startEnabled;
    this.stopButton.disabled = !this.state.session || !stopEnabled;

    this.sessionLabel.textContent = this.state.session
      ? `${this.state.session.id} [${this.state.sessionState ?? "?"}]`
      : "no session";
    this.dot.className = `dot ${this.state.connection}`;

    const counters = this.state.session?.counters;
    this.counters.textContent = counters
      ? `seen ${counters.seen}  matched ${counters.matched}  dropped ${counters.dropped}`
      : "";

    renderFilterError(this.filterErrorBox, this.filterInput.value, this.state);
    renderStats(this.statsBox, this.state);
    renderAlerts(this.alertsBox, this.state);

    this.table.setRows(this.state.rows);
    this.table.setSelected(this.state.selectedRow);
    const selected = this.state.selectedRow !== null ? this.state.rows[this.state.selectedRow] : null;
    this.detailBox.replaceChildren(selected ? renderLayerTree(selected) : emptyDetail());
  }
}

/** The caret line puts ^ exactly under the server-reported parse offset. */
export function renderFilterError(box: HTMLElement, text: string, state: ViewState): void {
  if (!state.filterError) {
    box.replaceChildren();
    box.classList.remove("visible");
    return;
  }
  const error = state.filterError;
  const message = document.createElement("div");
  message.className = "filter-error-message";
  message.textContent = `${error.error} at offset ${error.offset}: ${error.detail}`;
  const caretLine = document.createElement("pre");
  caretLine.className = "filter-error-caret";
  caretLine.textContent = `${text}\n${" ".repeat(error.offset)}^`;
  box.replaceChildren(message, caretLine);
  box.classList.add("visible");
}

export function renderStats(box: HTMLElement, state: ViewState): void {
  if (!state.stats) {
    box.textContent = "no statistics yet";
    return;
  }
  const rows: HTMLElement[] = [];
  for (const [proto, count] of Object.entries(state.stats.protocols)) {
    const row = document.createElement("div");
    row.className = "stat-row";
    row.textContent = `${proto}: ${count.packets} packets, ${count.bytes} bytes`;
    rows.push(row);
  }
  const total = document.createElement("div");
  total.className = "stat-row total";
  total.textContent = `Total: ${state.stats.total_packets} packets, ${state.stats.total_bytes} bytes`;
  rows.push(total);
  box.replaceChildren(...rows);
}

export function renderAlerts(box: HTMLElement, state: ViewState): void {
  if (!state.alerts.length) {
    box.textContent = "no alerts";
    return;
  }
  box.replaceChildren(
    ...state.alerts.map((alert) => {
      const row = document.createElement("div");
      row.className = `alert-row ${alert.severity}`;
      row.textContent = `[${alert.severity}] ${alert.kind} ${alert.subject}`;
      return row;
    }),
  );
}

function emptyDetail(): HTMLElement {
  const hint = document.createElement("div");
  hint.className = "detail-hint";
  hint.textContent = "select a packet to inspect its layers";
  return hint;
}

if (typeof document !== "undefined" && document.getElementById("packets")) {
  const dashboard = new Dashboard();
  void dashboard.boot();
}
