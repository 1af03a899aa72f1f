/** Documents exchanged with the monitoring API (see docs/api.md). */

export interface SummaryRowDoc {
  no: number;
  time: string; // relative seconds, 9 decimals
  time_ns: number;
  source: string;
  destination: string;
  protocol: string;
  length: number;
  info: string;
}

export interface LayerDoc {
  layer: string;
  fields: Record<string, unknown>;
}

export interface RecordDoc {
  index: number;
  summary: SummaryRowDoc;
  layers: LayerDoc[];
  notes: string[];
}

export interface StatsDoc {
  protocols: Record<string, { packets: number; bytes: number }>;
  total_packets: number;
  total_bytes: number;
  duration_ns: number;
}

export interface AlertDoc {
  kind: string;
  subject: string;
  window_start_ns: number;
  window_end_ns: number;
  evidence: Record<string, unknown>;
  severity: "critical" | "warning" | "info";
}

export type SessionStateName = "idle" | "capturing" | "stopped";

export interface SessionDoc {
  id: string;
  source: { kind: string; [key: string]: unknown };
  state: SessionStateName;
  filter: string;
  counters: { seen: number; matched: number; dropped: number };
  created_at: number;
}

export interface InterfaceDoc {
  name: string;
  description: string;
  mac: string | null;
  ipv4: string[];
  up: boolean;
}

export interface FilterErrorDoc {
  error: string;
  detail: string;
  offset: number;
  expected?: string[];
}

export type StreamEventType =
  | "packet"
  | "stats"
  | "alert"
  | "session-state"
  | "gap"
  | "error";

export interface StreamEvent {
  seq: number;
  type: StreamEventType;
  data: unknown;
}

export type ConnectionStatus = "disconnected" | "connecting" | "connected";
