/** WebSocket event stream client with a resume cursor.
 *
 * Reconnects with exponential backoff and `?since=<last seq>` so a drop
 * never duplicates or loses events (ring evictions arrive as an explicit
 * gap event from the server).
 */

import type { ConnectionStatus, StreamEvent } from "./types.js";

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export interface StreamOptions {
  /** builds the stream URL for a given resume cursor */
  url: (since: number) => string;
  onEvent: (event: StreamEvent) => void;
  onStatus?: (status: ConnectionStatus) => void;
  /** injectable for tests; defaults to the browser WebSocket */
  makeSocket?: (url: string) => SocketLike;
  backoffMs?: number[];
  scheduler?: (fn: () => void, ms: number) => void;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 5000, 10000];

export class EventStream {
  lastSeq = 0;

  private socket: SocketLike | null = null;
  private stopped = false;
  private attempts = 0;
  private readonly options: StreamOptions;

  constructor(options: StreamOptions) {
    this.options = options;
  }

  start(since = 0): void {
    this.lastSeq = since;
    this.stopped = false;
    this.attempts = 0;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    this.socket?.close();
    this.socket = null;
    this.status("disconnected");
  }

  /** Send a command ({cmd: "set_filter"|"stop", ...}) if connected. */
  send(command: Record<string, unknown>): boolean {
    if (!this.socket) return false;
    this.socket.send(JSON.stringify(command));
    return true;
  }

  private status(status: ConnectionStatus): void {
    this.options.onStatus?.(status);
  }

  private connect(): void {
    if (this.stopped) return;
    this.status("connecting");
    const make =
      this.options.makeSocket ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    const socket = make(this.options.url(this.lastSeq));
    this.socket = socket;

    socket.onopen = () => {
      this.attempts = 0;
      this.status("connected");
    };
    socket.onmessage = (message) => {
      const event = JSON.parse(message.data) as StreamEvent;
      if (typeof event.seq === "number" && event.seq > this.lastSeq) {
        this.lastSeq = event.seq;
      }
      this.options.onEvent(event);
    };
    socket.onerror = () => {
      /* onclose always follows */
    };
    socket.onclose = () => {
      if (this.socket !== socket) return; // superseded
      this.socket = null;
      this.status("disconnected");
      if (this.stopped) return;
      const backoff = this.options.backoffMs ?? DEFAULT_BACKOFF;
      const delay = backoff[Math.min(this.attempts, backoff.length - 1)] ?? 10000;
      this.attempts += 1;
      const schedule = this.options.scheduler ?? ((fn, ms) => setTimeout(fn, ms));
      schedule(() => this.connect(), delay);
    };
  }
}
