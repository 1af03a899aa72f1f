/** Thin fetch wrappers for the control API. */

import type {
  FilterErrorDoc,
  InterfaceDoc,
  RecordDoc,
  SessionDoc,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly body: Record<string, unknown>;

  constructor(status: number, body: Record<string, unknown>) {
    super(typeof body.detail === "string" ? body.detail : `HTTP ${status}`);
    this.status = status;
    this.body = body;
  }

  /** The parser location when the server rejected a filter expression. */
  filterError(): FilterErrorDoc | null {
    if (typeof this.body.offset === "number") {
      return this.body as unknown as FilterErrorDoc;
    }
    return null;
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (response.status === 204) return undefined as T;
  let body: Record<string, unknown>;
  try {
    body = await response.json();
  } catch {
    body = { detail: response.statusText };
  }
  if (!response.ok) throw new ApiError(response.status, body);
  return body as T;
}

export function listInterfaces(): Promise<InterfaceDoc[]> {
  return request("/api/interfaces");
}

export function createSession(source: Record<string, unknown>, filter: string): Promise<SessionDoc> {
  return request("/api/sessions", {
    method: "POST",
    body: JSON.stringify({ source, filter }),
  });
}

export function startSession(id: string): Promise<SessionDoc> {
  return request(`/api/sessions/${id}/start`, { method: "POST" });
}

export function stopSession(id: string): Promise<SessionDoc> {
  return request(`/api/sessions/${id}/stop`, { method: "POST" });
}

export function putFilter(id: string, filter: string): Promise<SessionDoc> {
  return request(`/api/sessions/${id}/filter`, {
    method: "PUT",
    body: JSON.stringify({ filter }),
  });
}

export function getReport(id: string): Promise<Record<string, unknown>> {
  return request(`/api/sessions/${id}/report`);
}

export function deleteSession(id: string): Promise<void> {
  return request(`/api/sessions/${id}`, { method: "DELETE" });
}

export function getPackets(id: string, since: number): Promise<{ records: RecordDoc[]; gap: boolean }> {
  return request(`/api/sessions/${id}/packets?since=${since}`);
}

export function streamUrl(id: string, since: number): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/api/sessions/${id}/stream?since=${since}`;
}
