/** Pure view-state store.
 *
 * The dashboard holds no traffic logic: every number shown comes from a
 * server event or response, and applying the same event sequence always
 * produces the same state.
 */

import type {
  AlertDoc,
  ConnectionStatus,
  FilterErrorDoc,
  RecordDoc,
  SessionDoc,
  SessionStateName,
  StatsDoc,
  StreamEvent,
} from "./types.js";

export interface ViewState {
  session: SessionDoc | null;
  sessionState: SessionStateName | null;
  rows: RecordDoc[]; // exactly in event sequence order
  lastSeq: number;
  stats: StatsDoc | null;
  alerts: AlertDoc[];
  filterText: string;
  /** set exactly when the server rejected the filter text */
  filterError: FilterErrorDoc | null;
  connection: ConnectionStatus;
  selectedRow: number | null; // index into rows
  gapNotice: boolean;
  errors: string[];
}

export function initialState(): ViewState {
  return {
    session: null,
    sessionState: null,
    rows: [],
    lastSeq: 0,
    stats: null,
    alerts: [],
    filterText: "",
    filterError: null,
    connection: "disconnected",
    selectedRow: null,
    gapNotice: false,
    errors: [],
  };
}

export function applyEvent(state: ViewState, event: StreamEvent): ViewState {
  const next: ViewState = { ...state, lastSeq: Math.max(state.lastSeq, event.seq) };
  switch (event.type) {
    case "packet":
      next.rows = [...state.rows, event.data as RecordDoc];
      break;
    case "stats":
      next.stats = event.data as StatsDoc;
      break;
    case "alert":
      next.alerts = [...state.alerts, event.data as AlertDoc];
      break;
    case "session-state": {
      const name = (event.data as { state: SessionStateName }).state;
      next.sessionState = name;
      if (state.session) {
        next.session = { ...state.session, state: name };
      }
      break;
    }
    case "gap":
      next.gapNotice = true;
      break;
    case "error": {
      const body = event.data as Partial<FilterErrorDoc> & { detail?: string };
      if (typeof body.offset === "number") {
        next.filterError = body as FilterErrorDoc;
      } else {
        next.errors = [...state.errors, body.detail ?? "unknown stream error"];
      }
      break;
    }
  }
  return next;
}

export function applyAll(state: ViewState, events: StreamEvent[]): ViewState {
  return events.reduce(applyEvent, state);
}

export function setSession(state: ViewState, session: SessionDoc): ViewState {
  return {
    ...state,
    session,
    sessionState: session.state,
    filterText: session.filter,
    rows: [],
    lastSeq: 0,
    stats: null,
    alerts: [],
    filterError: null,
    selectedRow: null,
    gapNotice: false,
  };
}

export function setFilterAccepted(state: ViewState, text: string): ViewState {
  return { ...state, filterText: text, filterError: null };
}

export function setFilterRejected(state: ViewState, error: FilterErrorDoc): ViewState {
  return { ...state, filterError: error };
}

export function setConnection(state: ViewState, connection: ConnectionStatus): ViewState {
  return { ...state, connection };
}

export function selectRow(state: ViewState, index: number | null): ViewState {
  return { ...state, selectedRow: index };
}

/** Start is legal only when idle, stop only while capturing. */
export function controlsFor(state: ViewState): { startEnabled: boolean; stopEnabled: boolean } {
  const name = state.sessionState;
  return {
    startEnabled: name === "idle",
    stopEnabled: name === "capturing",
  };
}
