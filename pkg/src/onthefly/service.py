"""Live runs behind a small HTTP + JSON API.

Each live run owns one worker thread that drives a :class:`~onthefly.harness.Session`.
The worker is the only writer of the run's event log; HTTP handlers read the
log by cursor and drop parameter overrides into a mailbox that the worker
drains once per iteration boundary (last write wins per parameter).
"""
from __future__ import annotations

import json
import logging
import mimetypes
import os
import threading
import time
import uuid
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import ConfigError
from .harness import ADJUSTABLE, RunRecord, Session, validate_param
from .objectives import DOMAINS

log = logging.getLogger(__name__)

MAX_BATCH = 1000
DEFAULT_TICK_MS = 20

CREATED, RUNNING, PAUSED, FINISHED, STOPPED = "created", "running", "paused", "finished", "stopped"
TRANSITIONS = {
    (CREATED, "start"): RUNNING,
    (RUNNING, "pause"): PAUSED,
    (PAUSED, "resume"): RUNNING,
    (RUNNING, "stop"): STOPPED,
    (PAUSED, "stop"): STOPPED,
}


class ServiceError(Exception):
    def __init__(self, status, message, field=None):
        super().__init__(message)
        self.status = int(status)
        self.field = field

    def body(self):
        out = {"error": str(self)}
        if self.field:
            out["field"] = self.field
        return out


class LiveRun:
    def __init__(self, run_id, request, session, tick_ms):
        self.run_id = run_id
        self.request = request
        self.session = session
        self.tick_ms = tick_ms
        self.state = CREATED
        self.events = []
        self._mailbox = {}
        self._drained_for = -1
        self._cond = threading.Condition()
        self._thread = None
        self._started = None
        self._elapsed_ms = 0.0
        self.done = threading.Event()

    # -- worker -------------------------------------------------------------

    def _append(self, event):
        with self._cond:
            self.events.append(event)

    def _work(self):
        self._started = time.perf_counter()
        final = FINISHED
        while True:
            with self._cond:
                if self.state == PAUSED:
                    self.events.append({"iteration": self.session.next_iteration,
                                        "kind": "state", "payload": {"state": PAUSED}})
                    while self.state == PAUSED:
                        self._cond.wait()
                    if self.state == RUNNING:
                        self.events.append({"iteration": self.session.next_iteration,
                                            "kind": "state", "payload": {"state": RUNNING}})
                if self.state == STOPPED:
                    final = STOPPED
                    break
                pending, self._mailbox = self._mailbox, {}
                self._drained_for = self.session.next_iteration
                for name, value in pending.items():
                    ev = self.session.apply(name, value, source="human")
                    if ev is not None:
                        self.events.append(ev)
            event = self.session.step()
            if event is None:
                break
            self._append(event)
            if self.tick_ms:
                with self._cond:
                    self._cond.wait_for(lambda: self.state == STOPPED, self.tick_ms / 1000.0)
        self._elapsed_ms = (time.perf_counter() - self._started) * 1000.0
        with self._cond:
            self.state = final
            self.events.append({"iteration": self.session.next_iteration, "kind": "state",
                                "payload": {"state": final}})
            self._cond.notify_all()
        self.done.set()

    # -- API ------------------------------------------------------------------

    def transition(self, action):
        with self._cond:
            new = TRANSITIONS.get((self.state, action))
            if new is None:
                raise ServiceError(HTTPStatus.CONFLICT,
                                   f"cannot {action} a run that is {self.state}")
            self.state = new
            self._cond.notify_all()
        if action == "start":
            self._thread = threading.Thread(target=self._work, name=f"run-{self.run_id}",
                                            daemon=True)
            self._thread.start()
        return new

    def enqueue(self, name, value):
        if name not in ADJUSTABLE[self.session.algorithm]:
            raise ServiceError(HTTPStatus.BAD_REQUEST,
                               f"{name!r} is not adjustable for {self.session.algorithm}",
                               field="parameter")
        try:
            value = validate_param(name, value)
        except ConfigError as exc:
            raise ServiceError(HTTPStatus.BAD_REQUEST, str(exc), field="value") from None
        with self._cond:
            if self.state not in (CREATED, RUNNING, PAUSED):
                raise ServiceError(HTTPStatus.CONFLICT, f"run is {self.state}; not adjustable")
            self._mailbox[name] = value
            nxt = self.session.next_iteration
            return nxt + 1 if self._drained_for == nxt else nxt

    def read(self, cursor):
        with self._cond:
            batch = self.events[cursor:cursor + MAX_BATCH]
        return batch, cursor + len(batch)

    def describe(self):
        with self._cond:
            return {"run_id": self.run_id, "state": self.state, "request": self.request,
                    "algorithm": self.session.algorithm,
                    "objective": self.session.objective.value,
                    "next_iteration": self.session.next_iteration,
                    "event_count": len(self.events),
                    "params": {k: self.session.current_value(k)
                               for k in ADJUSTABLE[self.session.algorithm]}}

    def record(self):
        with self._cond:
            events = list(self.events)
        summary = self.session.summary() if self.session.next_iteration else {}
        summary["wall_time_ms"] = round(self._elapsed_ms, 3)
        return RunRecord(run_id=self.run_id, algorithm=self.session.algorithm,
                         objective=self.session.objective.value,
                         master_seed=self.session.seed, config=self.session.config,
                         events=events, summary=summary)


class TuningService:
    """Registry of live runs; the HTTP layer is a thin shell around this."""

    def __init__(self, default_tick_ms=DEFAULT_TICK_MS):
        self.default_tick_ms = default_tick_ms
        self._runs = {}
        self._lock = threading.Lock()

    def create_run(self, request):
        if not isinstance(request, dict):
            raise ServiceError(HTTPStatus.BAD_REQUEST, "request body must be a JSON object")
        for key in ("algorithm", "objective"):
            if key not in request:
                raise ServiceError(HTTPStatus.BAD_REQUEST, f"missing {key}", field=key)
        unknown = set(request) - {"algorithm", "objective", "config", "seed", "tick_ms"}
        if unknown:
            field = sorted(unknown)[0]
            raise ServiceError(HTTPStatus.BAD_REQUEST, f"unknown field {field!r}", field=field)
        seed = request.get("seed", 0)
        tick_ms = request.get("tick_ms", self.default_tick_ms)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ServiceError(HTTPStatus.BAD_REQUEST, "seed must be a non-negative integer",
                               field="seed")
        if not isinstance(tick_ms, (int, float)) or isinstance(tick_ms, bool) or tick_ms < 0:
            raise ServiceError(HTTPStatus.BAD_REQUEST, "tick_ms must be >= 0", field="tick_ms")
        config = request.get("config") or {}
        if not isinstance(config, dict):
            raise ServiceError(HTTPStatus.BAD_REQUEST, "config must be an object", field="config")
        try:
            session = Session(request["algorithm"], request["objective"], config, seed)
        except (ConfigError, TypeError, ValueError) as exc:
            raise ServiceError(HTTPStatus.BAD_REQUEST, str(exc),
                               field=getattr(exc, "field", None)) from None
        run_id = uuid.uuid4().hex[:16]
        with self._lock:
            self._runs[run_id] = LiveRun(run_id, request, session, tick_ms)
        return run_id

    def get(self, run_id):
        with self._lock:
            run = self._runs.get(run_id)
        if run is None:
            raise ServiceError(HTTPStatus.NOT_FOUND, f"unknown run {run_id}")
        return run

    def list(self):
        with self._lock:
            runs = list(self._runs.values())
        return [r.describe() for r in runs]

    def transition(self, run_id, action):
        if action not in ("start", "pause", "resume", "stop"):
            raise ServiceError(HTTPStatus.BAD_REQUEST, f"unknown action {action!r}",
                               field="action")
        return self.get(run_id).transition(action)

    def next_events(self, run_id, cursor):
        events, nxt = self.get(run_id).read(cursor)
        return {"events": events, "next_cursor": nxt}

    def apply_adjustment(self, run_id, parameter, value):
        return {"applied_at_iteration": self.get(run_id).enqueue(parameter, value)}

    def stop_all(self):
        with self._lock:
            runs = list(self._runs.values())
        for r in runs:
            try:
                r.transition("stop")
            except ServiceError:
                pass


def objectives_listing():
    return [{"id": oid.value, "dimension": dom.dimension, "domain": dom.to_dict()}
            for oid, dom in DOMAINS.items()]


class _Handler(BaseHTTPRequestHandler):
    service: TuningService = None
    static_dir = None
    server_version = "onthefly"

    def log_message(self, fmt, *args):
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _send(self, status, body, content_type="application/json; charset=utf-8"):
        data = body if isinstance(body, bytes) else json.dumps(body).encode("utf-8")
        self.send_response(int(status))
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            return json.loads(raw.decode("utf-8") or "{}")
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ServiceError(HTTPStatus.BAD_REQUEST, "body is not valid JSON") from None

    def _dispatch(self, method):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if parts[:1] != ["api"]:
                if method == "GET":
                    return self._static(url.path)
                raise ServiceError(HTTPStatus.NOT_FOUND, f"no route {url.path}")
            status, body = self._route(method, parts[1:], url)
            self._send(status, body)
        except ServiceError as exc:
            self._send(exc.status, exc.body())
        except Exception as exc:  # keep the server alive on handler bugs
            log.exception("unhandled error for %s %s", method, self.path)
            self._send(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": str(exc)})

    def _route(self, method, parts, url):
        svc = self.service
        if parts == ["objectives"] and method == "GET":
            return HTTPStatus.OK, objectives_listing()
        if parts == ["runs"]:
            if method == "POST":
                return HTTPStatus.CREATED, {"run_id": svc.create_run(self._body())}
            if method == "GET":
                return HTTPStatus.OK, svc.list()
        if len(parts) == 2 and parts[0] == "runs" and method == "GET":
            return HTTPStatus.OK, svc.get(parts[1]).describe()
        if len(parts) == 3 and parts[0] == "runs":
            run_id, leaf = parts[1], parts[2]
            if leaf == "control" and method == "POST":
                body = self._body()
                return HTTPStatus.OK, {"state": svc.transition(run_id, body.get("action"))}
            if leaf == "params" and method == "POST":
                body = self._body()
                if "parameter" not in body or "value" not in body:
                    raise ServiceError(HTTPStatus.BAD_REQUEST, "need parameter and value",
                                       field="parameter" if "parameter" not in body else "value")
                return HTTPStatus.OK, svc.apply_adjustment(run_id, body["parameter"],
                                                           body["value"])
            if leaf == "events" and method == "GET":
                raw = parse_qs(url.query).get("cursor", ["0"])[0]
                try:
                    cursor = int(raw)
                except ValueError:
                    cursor = -1
                if cursor < 0:
                    raise ServiceError(HTTPStatus.BAD_REQUEST,
                                       "cursor must be a non-negative integer", field="cursor")
                return HTTPStatus.OK, svc.next_events(run_id, cursor)
            if leaf == "record" and method == "GET":
                return HTTPStatus.OK, svc.get(run_id).record().to_dict()
        raise ServiceError(HTTPStatus.NOT_FOUND, f"no route {method} {url.path}")

    def _static(self, path):
        if not self.static_dir:
            raise ServiceError(HTTPStatus.NOT_FOUND, f"no route {path}")
        root = os.path.realpath(self.static_dir)
        target = os.path.realpath(os.path.join(root, path.lstrip("/") or "index.html"))
        if os.path.isdir(target):
            target = os.path.join(target, "index.html")
        if not target.startswith(root + os.sep) or not os.path.isfile(target):
            raise ServiceError(HTTPStatus.NOT_FOUND, f"no such asset {path}")
        with open(target, "rb") as fh:
            data = fh.read()
        ctype = mimetypes.guess_type(target)[0] or "application/octet-stream"
        self._send(HTTPStatus.OK, data, ctype)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")


def make_server(service=None, host="127.0.0.1", port=8080, static_dir=None):
    """Build (but do not start) an HTTP server bound to ``host:port``."""
    handler = type("Handler", (_Handler,), {"service": service or TuningService(),
                                            "static_dir": static_dir})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server
