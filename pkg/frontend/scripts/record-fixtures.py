#!/usr/bin/env python3
"""Record API fixtures for the dashboard contract tests.

Replays testdata/ping.pcap through the real service and captures the
responses and the full event stream into frontend/tests/fixtures/.
Deterministic except created_at, which is zeroed.
"""

import json
import sys
from pathlib import Path

from fastapi.testclient import TestClient

REPO = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(REPO / "tests"))

from sniff.service import create_app  # noqa: E402


def main() -> None:
    fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)

    import os

    os.environ["SNIFF_FIXTURE_IFACES"] = json.dumps([
        {"name": "eth0", "mac": "02:fc:00:00:00:01", "ipv4": ["10.10.50.84"], "up": True},
        {"name": "lo", "mac": None, "ipv4": ["127.0.0.1"], "up": True},
    ])
    app = create_app()
    with TestClient(app) as client:
        interfaces = client.get("/api/interfaces").json()

        created = client.post(
            "/api/sessions",
            json={"source": {"kind": "file", "path": str(REPO / "testdata" / "ping.pcap")}},
        ).json()
        session_id = created["id"]

        events = []
        with client.websocket_connect(f"/api/sessions/{session_id}/stream") as ws:
            client.post(f"/api/sessions/{session_id}/start")
            while True:
                event = ws.receive_json()
                events.append(event)
                if event["type"] == "session-state" and event["data"]["state"] == "stopped":
                    break

        bad_filter = client.put(f"/api/sessions/{session_id}/filter", json={"filter": "ip.src =="})
        report = client.get(f"/api/sessions/{session_id}/report").json()
        final_session = client.get(f"/api/sessions/{session_id}").json()

    for doc in (created, final_session):
        doc["created_at"] = 0.0
        doc["id"] = "fixture-session"
        doc["source"]["path"] = "testdata/ping.pcap"
    report["session"]["id"] = "fixture-session"
    report["session"]["source"] = "file:testdata/ping.pcap"

    (fixtures / "ping_events.json").write_text(json.dumps(events, indent=2) + "\n")
    (fixtures / "ping_api.json").write_text(json.dumps({
        "interfaces": interfaces,
        "session_created": created,
        "session_final": final_session,
        "filter_error": {"status": bad_filter.status_code, "body": bad_filter.json()},
        "report": report,
    }, indent=2) + "\n")
    print(f"recorded {len(events)} events")


if __name__ == "__main__":
    main()
