"""Feedback collection service.

A thread-safe in-process store hands out forms (question + statement block)
first-come-first-served, records judgments with timing, and exports the
resulting training log.  Every state change is appended as one JSON line to
an event file and replayed at startup, so the collected feedback survives
restarts without any external database.

The HTTP layer is a thin JSON mapping over the store (endpoints documented
in PROTOCOL.md at the repository root):

  GET  /health            liveness + progress counters
  GET  /form/next         next unjudged form, or {"done": true}
  POST /form/<id>/submit  judgments for a served form
  GET  /export/log        collected feedback as a cf-learn log file
  GET  /export/timing     annotation timing summary

A form served but never submitted is re-served after ``reserve_timeout``
seconds; a submitted form is final (each question-query pair is evaluated
exactly once).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .cflearn import LogEntry, format_log_line
from .errors import (AlreadySubmittedError, ExhaustedError,
                     IncompleteJudgmentsError, UnknownFormError)
from .feedback import (FeedbackRecord, StatementBlock, generate_statements,
                       map_feedback_to_tokens, sequence_reward)


@dataclass
class FormSession:
    form_id: str
    block: StatementBlock
    served_at: float | None = None
    annotator_id: str = ""
    record: FeedbackRecord | None = None

    @property
    def submitted(self) -> bool:
        return self.record is not None


def block_payload(form_id: str, block: StatementBlock) -> dict:
    return {
        "id": form_id,
        "question": block.question,
        "query": block.query,
        "statements": [
            {"type": s.type, "text": s.text, "tooltip": s.tooltip,
             "covered": list(s.covered)}
            for s in block.statements
        ],
    }


class FormStore:
    """Single-writer store over all form sessions; every mutation happens
    under one lock and is appended to the event log before returning."""

    def __init__(self, pairs: list[tuple[str, str]], event_path,
                 reserve_timeout: float = 600.0, clock=time.time):
        self._lock = threading.Lock()
        self._clock = clock
        self._event_path = event_path
        self.reserve_timeout = reserve_timeout
        self.sessions: list[FormSession] = []
        seen: set[tuple[str, str]] = set()
        for question, query in pairs:
            if (question, query) in seen:  # each pair is evaluated only once
                continue
            seen.add((question, query))
            form_id = f"f{len(self.sessions):04d}"
            self.sessions.append(FormSession(form_id, generate_statements(query, question)))
        self.by_id = {s.form_id: s for s in self.sessions}
        if event_path and os.path.exists(event_path):
            self._replay()

    # ---- persistence ------------------------------------------------------

    def _append_event(self, event: dict) -> None:
        if not self._event_path:
            return
        with open(self._event_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self) -> None:
        with open(self._event_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                ev = json.loads(line)
                session = self.by_id.get(ev["form"])
                if session is None:
                    continue
                if ev["event"] == "serve":
                    session.served_at = ev["at"]
                    session.annotator_id = ev.get("annotator", "")
                elif ev["event"] == "submit" and session.record is None:
                    session.record = FeedbackRecord(
                        tuple(bool(j) for j in ev["judgments"]),
                        ev["elapsed"], ev.get("annotator", ""))

    # ---- operations -------------------------------------------------------

    def serve_next(self, annotator_id: str = "") -> dict:
        """Next form payload; raises Exhausted when none can be served."""
        with self._lock:
            now = self._clock()
            for session in self.sessions:
                if session.submitted:
                    continue
                held = (session.served_at is not None
                        and now - session.served_at < self.reserve_timeout)
                if held:
                    continue
                session.served_at = now
                session.annotator_id = annotator_id
                self._append_event({"event": "serve", "form": session.form_id,
                                    "at": now, "annotator": annotator_id})
                return block_payload(session.form_id, session.block)
            raise ExhaustedError("no unjudged forms available")

    def submit(self, form_id: str, judgments: list[bool], annotator_id: str = "") -> dict:
        with self._lock:
            session = self.by_id.get(form_id)
            if session is None:
                raise UnknownFormError(f"no such form: {form_id}")
            if session.submitted:
                raise AlreadySubmittedError(f"form {form_id} already judged")
            if len(judgments) != len(session.block.statements):
                raise IncompleteJudgmentsError(
                    f"form {form_id}: expected {len(session.block.statements)} "
                    f"judgments, got {len(judgments)}")
            now = self._clock()
            served_at = session.served_at if session.served_at is not None else now
            record = FeedbackRecord(tuple(bool(j) for j in judgments),
                                    max(0.0, now - served_at),
                                    annotator_id or session.annotator_id)
            token_rewards = map_feedback_to_tokens(session.block, record)
            session.record = record
            self._append_event({"event": "submit", "form": form_id, "at": now,
                                "elapsed": record.elapsed_seconds,
                                "judgments": list(record.judgments),
                                "annotator": record.annotator_id})
            return {"ok": True, "form": form_id,
                    "seq_reward": sequence_reward(record),
                    "token_rewards": token_rewards}

    def export_entries(self) -> list[LogEntry]:
        """Submitted forms as log entries, in form order."""
        with self._lock:
            out = []
            for s in self.sessions:
                if not s.submitted:
                    continue
                out.append(LogEntry(
                    s.block.question, s.block.query,
                    sequence_reward(s.record),
                    tuple(map_feedback_to_tokens(s.block, s.record))))
            return out

    def timing_summary(self) -> dict:
        with self._lock:
            times = [s.record.elapsed_seconds for s in self.sessions if s.submitted]
        if not times:
            return {"count": 0, "mean": 0.0, "stddev": 0.0, "under_10_seconds": 0}
        arr = np.asarray(times)
        return {"count": len(times), "mean": float(arr.mean()),
                "stddev": float(arr.std()),
                "under_10_seconds": int(np.sum(arr < 10.0))}

    def progress(self) -> dict:
        with self._lock:
            done = sum(s.submitted for s in self.sessions)
            return {"forms_total": len(self.sessions), "forms_submitted": done}


# ---------------------------------------------------------------------------
# HTTP layer


def make_handler(store: FormStore, static_dir: str | None = None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, payload, content_type="application/json") -> None:
            body = (json.dumps(payload).encode()
                    if content_type == "application/json" else payload)
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self._send(204, b"", content_type="text/plain")

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/health":
                self._send(200, {"status": "ok", **store.progress()})
            elif url.path == "/form/next":
                annotator = parse_qs(url.query).get("annotator_id", [""])[0]
                try:
                    payload = store.serve_next(annotator)
                    self._send(200, {"done": False, "form": payload})
                except ExhaustedError:
                    self._send(200, {"done": True})
            elif url.path == "/export/log":
                lines = [format_log_line(e) for e in store.export_entries()]
                body = ("\n".join(lines) + "\n" if lines else "").encode()
                self._send(200, body, content_type="text/tab-separated-values")
            elif url.path == "/export/timing":
                self._send(200, store.timing_summary())
            elif static_dir is not None:
                self._serve_static(url.path)
            else:
                self._send(404, {"error": "not_found"})

        def do_POST(self):
            url = urlparse(self.path)
            parts = url.path.strip("/").split("/")
            if len(parts) == 3 and parts[0] == "form" and parts[2] == "submit":
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                    judgments = [self._parse_judgment(j) for j in body["judgments"]]
                except (ValueError, KeyError, TypeError):
                    self._send(400, {"error": "bad_request"})
                    return
                try:
                    ack = store.submit(parts[1], judgments, body.get("annotator_id", ""))
                    self._send(200, ack)
                except UnknownFormError:
                    self._send(404, {"error": "unknown_form"})
                except AlreadySubmittedError:
                    self._send(409, {"error": "already_submitted"})
                except IncompleteJudgmentsError:
                    self._send(400, {"error": "incomplete_judgments"})
            else:
                self._send(404, {"error": "not_found"})

        @staticmethod
        def _parse_judgment(value) -> bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("yes", "no"):
                return value.lower() == "yes"
            raise ValueError(f"judgment must be yes/no, got {value!r}")

        def _serve_static(self, path: str) -> None:
            rel = "index.html" if path == "/" else path.lstrip("/")
            full = os.path.realpath(os.path.join(static_dir, rel))
            if not full.startswith(os.path.realpath(static_dir)) or not os.path.isfile(full):
                self._send(404, {"error": "not_found"})
                return
            ctype = {"html": "text/html", "js": "text/javascript",
                     "css": "text/css"}.get(full.rsplit(".", 1)[-1], "application/octet-stream")
            with open(full, "rb") as fh:
                self._send(200, fh.read(), content_type=ctype)

    return Handler


def serve(store: FormStore, host: str = "127.0.0.1", port: int = 8767,
          static_dir: str | None = None) -> ThreadingHTTPServer:
    """Start the HTTP server on a background thread; caller shuts it down."""
    server = ThreadingHTTPServer((host, port), make_handler(store, static_dir))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
