import json
import threading
import time
import urllib.error
import urllib.request

import pytest

from onthefly.harness import RunRecord, replay, run_experiment
from onthefly.service import MAX_BATCH, ServiceError, TuningService, make_server


@pytest.fixture
def api(tmp_path):
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<h1>console</h1>")
    service = TuningService(default_tick_ms=0)
    server = make_server(service, port=0, static_dir=str(static))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"

    def call(method, path, body=None, raw=None):
        data = raw if raw is not None else (None if body is None else json.dumps(body).encode())
        req = urllib.request.Request(base + path, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=10) as resp:
                ctype = resp.headers.get("Content-Type", "")
                payload = resp.read()
                return resp.status, json.loads(payload) if "json" in ctype else payload
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read())

    yield call
    service.stop_all()
    server.shutdown()
    server.server_close()


def wait_until(pred, timeout=10.0):
    end = time.monotonic() + timeout
    while time.monotonic() < end:
        if pred():
            return True
        time.sleep(0.005)
    raise AssertionError("condition not reached in time")


def poll_all(call, run_id):
    events, cursor = [], 0
    while True:
        status, body = call("GET", f"/api/runs/{run_id}/events?cursor={cursor}")
        assert status == 200
        assert body["next_cursor"] == cursor + len(body["events"])
        events += body["events"]
        cursor = body["next_cursor"]
        if events and events[-1]["kind"] == "state" and \
                events[-1]["payload"]["state"] in ("finished", "stopped"):
            return events
        time.sleep(0.01)


def create(call, **body):
    body.setdefault("algorithm", "gd")
    body.setdefault("objective", "bohachevsky")
    status, resp = call("POST", "/api/runs", body)
    assert status == 201, resp
    return resp["run_id"]


def state_of(call, run_id):
    return call("GET", f"/api/runs/{run_id}")[1]["state"]


# -- creation ---------------------------------------------------------------

def test_create_and_echo(api):
    body = {"algorithm": "gd", "objective": "bohachevsky", "config": {"iterations": 10},
            "seed": 3, "tick_ms": 0}
    a = create(api, **body)
    b = create(api, **body)
    assert a != b
    status, info = api("GET", f"/api/runs/{a}")
    assert status == 200 and info["request"] == body and info["state"] == "created"
    assert {r["run_id"] for r in api("GET", "/api/runs")[1]} == {a, b}


@pytest.mark.parametrize("body, field", [
    ({"algorithm": "ea", "objective": "repressilator", "config": {"pop_size": 1}}, "pop_size"),
    ({"algorithm": "gd", "objective": "booth"}, "objective"),
    ({"algorithm": "gd"}, "objective"),
    ({"algorithm": "gd", "objective": "bohachevsky", "config": {"alpha": -1}}, "alpha"),
    ({"algorithm": "gd", "objective": "bohachevsky", "tick_ms": -5}, "tick_ms"),
    ({"algorithm": "gd", "objective": "bohachevsky", "seed": "x"}, "seed"),
])
def test_create_errors_name_field(api, body, field):
    status, resp = api("POST", "/api/runs", body)
    assert status == 400
    assert resp["field"] == field and resp["error"]


def test_bad_json_and_unknown_routes(api):
    assert api("POST", "/api/runs", raw=b"{nope")[0] == 400
    assert api("GET", "/api/nothing")[0] == 404
    assert api("GET", "/api/runs/missing")[0] == 404
    assert api("POST", "/api/runs/missing/control", {"action": "start"})[0] == 404
    assert api("GET", "/api/runs/missing/events?cursor=0")[0] == 404


def test_objectives_listing(api):
    status, body = api("GET", "/api/objectives")
    ids = {o["id"]: o for o in body}
    assert status == 200
    assert set(ids) == {"bohachevsky", "booth", "mh_density", "sa_density", "repressilator"}
    assert ids["repressilator"]["dimension"] == 4
    assert ids["mh_density"]["domain"] == {"lower": [-3.0, 2.0], "upper": [3.0, 4.0]}


def test_static_assets(api):
    status, body = api("GET", "/")
    assert status == 200 and b"console" in body
    assert api("GET", "/../../etc/passwd")[0] == 404


# -- lifecycle --------------------------------------------------------------

def test_finished_run_log(api):
    rid = create(api, config={"iterations": 10, "init": [1, 1]}, seed=1)
    assert api("POST", f"/api/runs/{rid}/control", {"action": "start"}) == (200, {"state": "running"})
    events = poll_all(api, rid)
    assert events[0]["kind"] == "trace" and events[0]["iteration"] == 0
    assert [e["iteration"] for e in events if e["kind"] == "trace"] == list(range(11))
    assert events[-1]["payload"]["state"] == "finished"
    assert state_of(api, rid) == "finished"
    n = len(events)
    assert api("GET", f"/api/runs/{rid}/events?cursor={n}")[1] == {"events": [], "next_cursor": n}
    assert api("GET", f"/api/runs/{rid}/events?cursor={n + 7}")[1] == \
        {"events": [], "next_cursor": n + 7}
    assert api("GET", f"/api/runs/{rid}/events?cursor=-1")[0] == 400
    status, resp = api("POST", f"/api/runs/{rid}/control", {"action": "pause"})
    assert status == 409 and "finished" in resp["error"]
    assert api("POST", f"/api/runs/{rid}/params", {"parameter": "alpha", "value": 0.1})[0] == 409


def test_illegal_transitions(api):
    rid = create(api)
    assert api("POST", f"/api/runs/{rid}/control", {"action": "pause"})[0] == 409
    assert api("POST", f"/api/runs/{rid}/control", {"action": "resume"})[0] == 409
    assert api("POST", f"/api/runs/{rid}/control", {"action": "jump"})[0] == 400


def test_stop_seals_log(api):
    rid = create(api, config={"iterations": 100000}, tick_ms=1)
    api("POST", f"/api/runs/{rid}/control", {"action": "start"})
    wait_until(lambda: api("GET", f"/api/runs/{rid}")[1]["event_count"] > 3)
    assert api("POST", f"/api/runs/{rid}/control", {"action": "stop"}) == (200, {"state": "stopped"})
    events = poll_all(api, rid)
    assert events[-1] == {"iteration": events[-1]["iteration"], "kind": "state",
                          "payload": {"state": "stopped"}}
    time.sleep(0.05)
    assert len(api("GET", f"/api/runs/{rid}/events?cursor=0")[1]["events"]) == len(events)
    assert api("POST", f"/api/runs/{rid}/control", {"action": "resume"})[0] == 409


def test_pause_and_resume(api):
    rid = create(api, config={"iterations": 400}, tick_ms=2)
    api("POST", f"/api/runs/{rid}/control", {"action": "start"})
    wait_until(lambda: api("GET", f"/api/runs/{rid}")[1]["event_count"] > 2)
    assert api("POST", f"/api/runs/{rid}/control", {"action": "pause"})[1]["state"] == "paused"

    def paused_logged():
        evs = api("GET", f"/api/runs/{rid}/events?cursor=0")[1]["events"]
        return any(e["kind"] == "state" and e["payload"]["state"] == "paused" for e in evs)

    wait_until(paused_logged)
    count = api("GET", f"/api/runs/{rid}")[1]["event_count"]
    time.sleep(0.1)
    assert api("GET", f"/api/runs/{rid}")[1]["event_count"] == count
    assert api("POST", f"/api/runs/{rid}/control", {"action": "resume"})[1]["state"] == "running"
    events = poll_all(api, rid)
    kinds = [e["payload"]["state"] for e in events if e["kind"] == "state"]
    assert kinds == ["paused", "running", "finished"]


# -- adjustments ------------------------------------------------------------

def test_unknown_parameter_rejected(api):
    rid = create(api)
    status, resp = api("POST", f"/api/runs/{rid}/params", {"parameter": "proposal_std",
                                                           "value": 0.1})
    assert status == 400 and resp["field"] == "parameter"
    status, resp = api("POST", f"/api/runs/{rid}/params", {"parameter": "alpha", "value": -2})
    assert status == 400 and resp["field"] == "value"


def test_last_write_wins_while_paused(api):
    rid = create(api, config={"iterations": 300}, tick_ms=2, seed=4)
    api("POST", f"/api/runs/{rid}/control", {"action": "start"})
    wait_until(lambda: api("GET", f"/api/runs/{rid}")[1]["event_count"] > 2)
    api("POST", f"/api/runs/{rid}/control", {"action": "pause"})
    wait_until(lambda: any(e["kind"] == "state" for e in
                           api("GET", f"/api/runs/{rid}/events?cursor=0")[1]["events"]))
    resume_at = api("GET", f"/api/runs/{rid}")[1]["next_iteration"]
    first = api("POST", f"/api/runs/{rid}/params", {"parameter": "alpha", "value": 0.0005})
    second = api("POST", f"/api/runs/{rid}/params", {"parameter": "alpha", "value": 0.002})
    assert first == second == (200, {"applied_at_iteration": resume_at})
    api("POST", f"/api/runs/{rid}/control", {"action": "resume"})
    events = poll_all(api, rid)
    adj = [e for e in events if e["kind"] == "adjustment"]
    assert len(adj) == 1
    assert adj[0]["iteration"] == resume_at
    assert adj[0]["payload"] == {"parameter": "alpha", "old": 0.001, "new": 0.002,
                                 "source": "human", "reason": "manual"}


def test_live_adjustment_causality_and_replay(api):
    config = {"iterations": 300}
    rid = create(api, config=config, tick_ms=2, seed=8)
    api("POST", f"/api/runs/{rid}/control", {"action": "start"})
    wait_until(lambda: api("GET", f"/api/runs/{rid}")[1]["event_count"] > 5)
    status, ack = api("POST", f"/api/runs/{rid}/params", {"parameter": "alpha", "value": 0.0005})
    assert status == 200
    k = ack["applied_at_iteration"]
    events = poll_all(api, rid)
    adj = [e for e in events if e["kind"] == "adjustment"]
    assert len(adj) == 1 and adj[0]["iteration"] == k
    assert adj[0]["payload"]["old"] == 0.001 and adj[0]["payload"]["new"] == 0.0005

    record = RunRecord.from_dict(api("GET", f"/api/runs/{rid}/record")[1])
    assert record.events == events
    replayed = replay(record)
    assert replayed.trace_events() == record.trace_events()

    plain = run_experiment("gd", "bohachevsky", config, 8)
    live = record.trace_events()
    assert plain.trace_events()[:k] == live[:k]
    assert plain.trace_events()[k + 1:] != live[k + 1:]


@pytest.mark.parametrize("algo, objective, config, param, value", [
    ("nm", "booth", {"maxiter": 60}, "alpha", 0.5),
    ("mh", "mh_density", {"n_iterations": 200}, "proposal_std", 0.5),
    ("sa", "sa_density", {"n_iterations": 200}, "cooling", 0.8),
    ("ea", "repressilator", {"pop_size": 8, "generations": 20}, "mutation_std", 3.0),
])
def test_replay_equivalence_all_algorithms(api, algo, objective, config, param, value):
    rid = create(api, algorithm=algo, objective=objective, config=config, seed=2, tick_ms=1)
    api("POST", f"/api/runs/{rid}/params", {"parameter": param, "value": value})
    api("POST", f"/api/runs/{rid}/control", {"action": "start"})
    events = poll_all(api, rid)
    record = RunRecord.from_dict(api("GET", f"/api/runs/{rid}/record")[1])
    assert record.events == events
    assert [e["iteration"] for e in record.adjustment_events()] == [0]
    assert replay(record).trace_events() == record.trace_events()


def test_event_batches_are_bounded():
    service = TuningService(default_tick_ms=0)
    rid = service.create_run({"algorithm": "mh", "objective": "mh_density",
                              "config": {"n_iterations": 2500}, "seed": 1})
    service.transition(rid, "start")
    assert service.get(rid).done.wait(30)
    first = service.next_events(rid, 0)
    assert len(first["events"]) == MAX_BATCH and first["next_cursor"] == MAX_BATCH
    total, cursor = [], 0
    while True:
        batch = service.next_events(rid, cursor)
        if not batch["events"]:
            break
        total += batch["events"]
        cursor = batch["next_cursor"]
    assert total == service.get(rid).record().events
    traces = [e["iteration"] for e in total if e["kind"] == "trace"]
    assert traces == list(range(2500))


def test_service_errors_in_process():
    service = TuningService()
    with pytest.raises(ServiceError) as info:
        service.create_run({"algorithm": "gd", "objective": "bohachevsky", "colour": 1})
    assert info.value.status == 400 and info.value.field == "colour"
    with pytest.raises(ServiceError) as info:
        service.get("nope")
    assert info.value.status == 404
