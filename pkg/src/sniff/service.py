"""HTTP control API and live event stream for capture sessions.

Endpoints (JSON bodies throughout, errors as {"error", "detail", ...}):

    GET    /api/interfaces
    POST   /api/sessions                {source, filter?, ring_capacity?}
    GET    /api/sessions
    GET    /api/sessions/{id}
    POST   /api/sessions/{id}/start
    POST   /api/sessions/{id}/stop
    PUT    /api/sessions/{id}/filter    {filter}
    GET    /api/sessions/{id}/packets?since=N&limit=N
    GET    /api/sessions/{id}/report
    DELETE /api/sessions/{id}
    WS     /api/sessions/{id}/stream?since=SEQ

Stream events are {"seq", "type", "data"} with type one of packet, stats,
alert, session-state, gap, or error; sequence numbers are per-session and
gapless except across ring evictions, which arrive as an explicit gap
event. WS clients may send {"cmd": "set_filter", "filter": text} and
{"cmd": "stop"}.

Auth: when SNIFF_API_TOKEN is set every request needs
"Authorization: Bearer <token>" (WS alternatively ?token=). Without a
token the service is meant for its loopback-only default binding.
"""

from __future__ import annotations

import asyncio
import dataclasses
import os
import threading
from typing import Optional

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import analysis
from .capture import (
    CaptureSession,
    FileSource,
    InvalidTransition,
    LiveSource,
    OpenFailed,
    PermissionDenied,
    SessionState,
    SessionTable,
    list_interfaces,
    source_label,
)
from .decode import PacketRecord, format_time
from .filters import FilterError, compile_filter

API_TOKEN_ENV = "SNIFF_API_TOKEN"

EVENT_LOG_CAPACITY = 16384
STATS_EVERY_PACKETS = 100
STREAM_POLL_SECS = 0.02

WS_CLOSE_UNKNOWN_SESSION = 4404
WS_CLOSE_SESSION_DELETED = 4000
WS_CLOSE_UNAUTHORIZED = 4401


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str, **extra):
        super().__init__(detail)
        self.status = status
        self.body = {"error": error, "detail": detail, **extra}


def _filter_error_body(exc: FilterError) -> dict:
    return {
        "error": type(exc).__name__,
        "detail": str(exc),
        "offset": exc.offset,
        "expected": list(exc.expected),
    }


@dataclasses.dataclass(frozen=True)
class StreamEvent:
    seq: int
    type: str
    data: dict

    def doc(self) -> dict:
        return {"seq": self.seq, "type": self.type, "data": self.data}


class EventLog:
    """Bounded per-session event history with monotonically increasing seq."""

    def __init__(self, capacity: int = EVENT_LOG_CAPACITY):
        self._events: list[StreamEvent] = []
        self._capacity = capacity
        self._next_seq = 1
        self._lock = threading.Lock()

    def append(self, event_type: str, data: dict) -> StreamEvent:
        with self._lock:
            event = StreamEvent(self._next_seq, event_type, data)
            self._next_seq += 1
            self._events.append(event)
            if len(self._events) > self._capacity:
                del self._events[: len(self._events) - self._capacity]
            return event

    def read_after(self, seq: int, limit: int = 512) -> tuple[list, bool]:
        """Events with sequence > seq, plus whether older ones were evicted."""
        with self._lock:
            if not self._events:
                return [], False
            floor = self._events[0].seq
            gap = seq + 1 < floor
            start = max(seq + 1, floor)
            selected = [e for e in self._events if e.seq >= start][:limit]
            return selected, gap


def layer_doc(layer) -> dict:
    fields = {}
    for item in dataclasses.fields(layer):
        value = getattr(layer, item.name)
        if isinstance(value, bytes):
            value = value.hex()
        elif isinstance(value, tuple):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        fields[item.name] = value
    return {"layer": layer.name, "fields": fields}


def record_doc(record: PacketRecord) -> dict:
    row = record.summary
    return {
        "index": record.index,
        "summary": {
            "no": row.no,
            "time": format_time(row.time_ns),
            "time_ns": row.time_ns,
            "source": row.source,
            "destination": row.destination,
            "protocol": row.protocol,
            "length": row.length,
            "info": row.info,
        },
        "layers": [layer_doc(layer) for layer in record.layers],
        "notes": list(record.decode_notes),
    }


class SessionHub:
    """Couples one capture session to its event log and runs end-of-capture analysis."""

    def __init__(self, session: CaptureSession, filter_text: str):
        self.session = session
        self.filter_text = filter_text
        self.log = EventLog()
        self.deleted = threading.Event()
        self._packet_count = 0
        session.subscribe(self._on_session_event)

    def _on_session_event(self, kind: str, payload) -> None:
        if kind == "packet":
            self.log.append("packet", record_doc(payload))
            self._packet_count += 1
            if self._packet_count % STATS_EVERY_PACKETS == 0:
                self._emit_stats()
        elif kind == "state":
            if payload is SessionState.STOPPED:
                self._emit_stats()
                for alert in analysis.run_all_detectors(self.session.records()):
                    self.log.append("alert", analysis.alert_to_doc(alert))
            self.log.append("session-state", {"state": payload.value})

    def _emit_stats(self) -> None:
        stats = analysis.accumulate_stats(self.session.records())
        self.log.append("stats", analysis.stats_to_doc(stats))

    def set_filter(self, text: str) -> None:
        self.session.set_filter(compile_filter(text))
        self.filter_text = text

    def doc(self) -> dict:
        session = self.session
        counters = session.counters
        return {
            "id": session.id,
            "source": _source_doc(session.source),
            "state": session.state.value,
            "filter": self.filter_text,
            "counters": {
                "seen": counters.seen,
                "matched": counters.matched,
                "dropped": counters.dropped,
            },
            "created_at": session.created_at,
        }


def _source_doc(source) -> dict:
    if isinstance(source, FileSource):
        return {"kind": "file", "path": source.path}
    if isinstance(source, LiveSource):
        return {
            "kind": "live",
            "interface": source.interface,
            "promiscuous": source.promiscuous,
            "snaplen": source.snaplen,
        }
    return {"kind": "scripted", "label": source_label(source)}


def _parse_source(doc) -> object:
    if not isinstance(doc, dict):
        raise ApiError(400, "BadSource", "source must be an object")
    kind = doc.get("kind")
    if kind == "file":
        path = doc.get("path")
        if not isinstance(path, str) or not path:
            raise ApiError(400, "BadSource", "file source needs a path")
        return FileSource(path)
    if kind == "live":
        interface = doc.get("interface")
        if not isinstance(interface, str) or not interface:
            raise ApiError(400, "BadSource", "live source needs an interface")
        return LiveSource(
            interface=interface,
            promiscuous=bool(doc.get("promiscuous", True)),
            snaplen=int(doc.get("snaplen", 262144)),
        )
    raise ApiError(400, "BadSource", f"unknown source kind {kind!r}")


def create_app(
    *,
    table: Optional[SessionTable] = None,
    interfaces_provider=list_interfaces,
    static_dir: Optional[str] = None,
    api_token: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="sniff monitor", version="0.1.0", docs_url=None, redoc_url=None)
    sessions = table if table is not None else SessionTable()
    hubs: dict[str, SessionHub] = {}
    hubs_lock = threading.Lock()
    token = api_token if api_token is not None else os.environ.get(API_TOKEN_ENV)
    app.state.sessions = sessions
    app.state.hubs = hubs

    def check_auth(request: Request) -> None:
        if token and request.headers.get("Authorization") != f"Bearer {token}":
            raise ApiError(401, "Unauthorized", "missing or wrong API token")

    def get_hub(session_id: str) -> SessionHub:
        with hubs_lock:
            hub = hubs.get(session_id)
        if hub is None:
            raise ApiError(404, "UnknownSession", f"no session {session_id!r}")
        return hub

    @app.exception_handler(ApiError)
    async def handle_api_error(request, exc: ApiError):
        return JSONResponse(exc.body, status_code=exc.status)

    @app.get("/api/interfaces")
    async def get_interfaces(request: Request):
        check_auth(request)
        try:
            infos = interfaces_provider()
        except PermissionDenied as exc:
            raise ApiError(403, "PermissionDenied", str(exc))
        return [
            {
                "name": info.name,
                "description": info.description,
                "mac": info.mac,
                "ipv4": list(info.ipv4),
                "up": info.is_up,
            }
            for info in infos
        ]

    @app.get("/api/sessions")
    async def get_sessions(request: Request):
        check_auth(request)
        with hubs_lock:
            all_hubs = list(hubs.values())
        return [hub.doc() for hub in all_hubs]

    @app.post("/api/sessions", status_code=201)
    async def create_session(request: Request):
        check_auth(request)
        body = await _json_body(request)
        source = _parse_source(body.get("source"))
        filter_text = body.get("filter", "")
        try:
            filter_expr = compile_filter(filter_text)
        except FilterError as exc:
            return JSONResponse(_filter_error_body(exc), status_code=400)
        ring_capacity = int(body.get("ring_capacity", 4096))
        session = sessions.create(source, filter_expr=filter_expr, ring_capacity=ring_capacity)
        hub = SessionHub(session, filter_text)
        with hubs_lock:
            hubs[session.id] = hub
        return hub.doc()

    @app.get("/api/sessions/{session_id}")
    async def get_session(session_id: str, request: Request):
        check_auth(request)
        return get_hub(session_id).doc()

    @app.post("/api/sessions/{session_id}/start")
    async def start_session(session_id: str, request: Request):
        check_auth(request)
        hub = get_hub(session_id)
        try:
            hub.session.start()
        except InvalidTransition as exc:
            raise ApiError(409, "InvalidTransition", str(exc))
        except OpenFailed as exc:
            raise ApiError(400, "OpenFailed", str(exc))
        return hub.doc()

    @app.post("/api/sessions/{session_id}/stop")
    async def stop_session(session_id: str, request: Request):
        check_auth(request)
        hub = get_hub(session_id)
        try:
            hub.session.stop()
        except InvalidTransition as exc:
            raise ApiError(409, "InvalidTransition", str(exc))
        return hub.doc()

    @app.put("/api/sessions/{session_id}/filter")
    async def put_filter(session_id: str, request: Request):
        check_auth(request)
        hub = get_hub(session_id)
        body = await _json_body(request)
        text = body.get("filter", "")
        if not isinstance(text, str):
            raise ApiError(400, "BadFilter", "filter must be a string")
        try:
            hub.set_filter(text)
        except FilterError as exc:
            return JSONResponse(_filter_error_body(exc), status_code=400)
        return hub.doc()

    @app.get("/api/sessions/{session_id}/packets")
    async def get_packets(session_id: str, request: Request, since: int = 0, limit: int = 1000):
        check_auth(request)
        hub = get_hub(session_id)
        result = hub.session.drain(since)
        records = result.records[:limit]
        return {
            "records": [record_doc(r) for r in records],
            "gap": result.gap,
            "state": hub.session.state.value,
            "counters": hub.doc()["counters"],
        }

    @app.get("/api/sessions/{session_id}/report")
    async def get_report(session_id: str, request: Request):
        check_auth(request)
        hub = get_hub(session_id)
        records = hub.session.records()
        counters = hub.session.counters
        meta = {
            "id": hub.session.id,
            "source": source_label(hub.session.source),
            "state": hub.session.state.value,
            "filter": hub.filter_text,
            "seen": counters.seen,
            "matched": counters.matched,
            "dropped": counters.dropped,
        }
        report = analysis.generate_report(
            meta,
            analysis.accumulate_stats(records),
            analysis.build_conversations(records),
            analysis.pair_echoes(records),
            analysis.run_all_detectors(records),
        )
        return analysis.report_to_doc(report)

    @app.delete("/api/sessions/{session_id}", status_code=204)
    async def delete_session(session_id: str, request: Request):
        check_auth(request)
        hub = get_hub(session_id)
        if hub.session.state is SessionState.CAPTURING:
            hub.session.stop()
        hub.deleted.set()
        with hubs_lock:
            hubs.pop(session_id, None)
        sessions.remove(session_id)

    @app.websocket("/api/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str, since: int = 0):
        if token:
            presented = websocket.query_params.get("token") or _bearer(websocket.headers.get("Authorization"))
            if presented != token:
                await websocket.accept()
                await websocket.close(code=WS_CLOSE_UNAUTHORIZED, reason="missing or wrong API token")
                return
        with hubs_lock:
            hub = hubs.get(session_id)
        await websocket.accept()
        if hub is None:
            await websocket.close(code=WS_CLOSE_UNKNOWN_SESSION, reason="unknown session")
            return

        cursor = since
        gap_sent = False
        receive_task = asyncio.create_task(websocket.receive_json())
        try:
            while True:
                events, gap = hub.log.read_after(cursor)
                if gap and not gap_sent:
                    await websocket.send_json(
                        {"seq": cursor, "type": "gap", "data": {"resumed_after": cursor}}
                    )
                    gap_sent = True
                for event in events:
                    await websocket.send_json(event.doc())
                    cursor = event.seq
                if hub.deleted.is_set():
                    await websocket.close(code=WS_CLOSE_SESSION_DELETED, reason="session deleted")
                    return
                timeout = 0 if events else STREAM_POLL_SECS
                done, _ = await asyncio.wait({receive_task}, timeout=timeout)
                if receive_task in done:
                    message = receive_task.result()  # raises on client disconnect
                    await _handle_command(websocket, hub, message)
                    receive_task = asyncio.create_task(websocket.receive_json())
        except (WebSocketDisconnect, RuntimeError):
            return
        finally:
            receive_task.cancel()

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="dashboard")

    return app


def _bearer(header: Optional[str]) -> Optional[str]:
    if header and header.startswith("Bearer "):
        return header[len("Bearer ") :]
    return None


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise ApiError(400, "BadRequest", "body is not valid JSON")
    if not isinstance(body, dict):
        raise ApiError(400, "BadRequest", "body must be a JSON object")
    return body


async def _handle_command(websocket: WebSocket, hub: SessionHub, message) -> None:
    if not isinstance(message, dict):
        await websocket.send_json({"type": "error", "data": {"detail": "command must be an object"}})
        return
    cmd = message.get("cmd")
    if cmd == "set_filter":
        try:
            hub.set_filter(message.get("filter", ""))
        except FilterError as exc:
            await websocket.send_json({"type": "error", "data": _filter_error_body(exc)})
    elif cmd == "stop":
        try:
            hub.session.stop()
        except InvalidTransition as exc:
            await websocket.send_json(
                {"type": "error", "data": {"error": "InvalidTransition", "detail": str(exc)}}
            )
    else:
        await websocket.send_json({"type": "error", "data": {"detail": f"unknown command {cmd!r}"}})
