from __future__ import annotations

import json
import threading
import time
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from fogpaas import fixtures as fx
from fogpaas.api import PaaSApi, PaaSServer
from fogpaas.infra import InfrastructureRepository
from fogpaas.nodesim import Simulator, default_sim_config


def body(resp):
    return json.loads(resp.encode()) if resp.encode() else None


@pytest.fixture
def api():
    infra = fx.tc_infra("tc1")
    repo = InfrastructureRepository(clock=lambda: 0)
    fx.populate(repo, infra)
    sim = Simulator(default_sim_config(infra, modules=fx.PAAS_MODULES), infra)
    return PaaSApi(repo, sim)


def deploy(api, pinned=True):
    doc = fx.parade_bench_descriptor().to_dict()
    payload = {"descriptor": doc, "assignment": fx.TC_LAYOUTS["tc1"]} if pinned else doc
    return api.route_request("POST", "/applications", json.dumps(payload))


def test_domains_on_fresh_server():
    resp = PaaSApi().route_request("GET", "/domains")
    assert resp.status == 200 and resp.encode() == b"[]\n"


def test_subscription_lifecycle(api):
    assert api.route_request("POST", "/fognodes?fromuri=http://cb").status == 201
    assert api.route_request("POST", "/fognodes?fromuri=http://cb").status == 409
    resp = api.route_request("DELETE", "/fognodes?fromuri=http://cb")
    assert resp.status == 204 and resp.encode() == b""
    assert api.route_request("DELETE", "/fognodes?fromuri=http://cb").status == 404
    assert api.route_request("POST", "/fognodes").status == 400


def test_publish_and_remove_node(api):
    node = fx.fog_node("fog-3", "fog-domain-3").to_dict()
    links = [{"endpoint_a": "fog-3", "endpoint_b": "fog-1", "latency": 1}]
    resp = api.route_request("POST", "/nodes", json.dumps({"node": node, "links": links}))
    assert resp.status == 201 and body(resp)["id"] == "fog-3"
    assert api.route_request("POST", "/nodes", json.dumps({"node": node})).status == 409
    ghost = {"node": fx.fog_node("fog-4", "d").to_dict(), "links": [{"endpoint_a": "fog-4", "endpoint_b": "x", "latency": 1}]}
    assert api.route_request("POST", "/nodes", json.dumps(ghost)).status == 422
    assert api.route_request("DELETE", "/nodes/fog-3").status == 204
    assert api.route_request("DELETE", "/nodes/fog-3").status == 404
    infra = body(api.route_request("GET", "/infrastructure"))
    assert sorted(n["id"] for n in infra["nodes"]) == ["cloud-1", "fog-1", "fog-2"]


def test_malformed_bodies(api):
    resp = api.route_request("POST", "/applications", "{not json")
    assert resp.status == 400 and body(resp)["violations"]
    resp = api.route_request("POST", "/applications", json.dumps({"name": "x"}))
    assert resp.status == 400
    assert api.route_request("POST", "/nodes", "").status == 400
    resp = api.route_request("POST", "/applications/x/migrations", json.dumps({"reason": "whim"}))
    assert resp.status == 400 and len(body(resp)["violations"]) == 2


def test_deploy_status_and_teardown(api):
    resp = deploy(api)
    assert resp.status == 202
    app_id = body(resp)["id"]
    assert resp.headers["Location"] == f"/applications/{app_id}"
    status = body(api.route_request("GET", f"/applications/{app_id}"))
    assert status["status"] == "running"
    assert status["deployment_plan"]["assignment"] == dict(sorted(fx.TC_LAYOUTS["tc1"].items()))
    assert [a["id"] for a in body(api.route_request("GET", "/applications"))] == [app_id]
    assert body(api.route_request("DELETE", f"/applications/{app_id}"))["status"] == "terminated"
    assert api.route_request("GET", "/applications/none").status == 404
    assert api.route_request("DELETE", "/applications/none").status == 404


def test_deploy_with_planner(api):
    resp = deploy(api, pinned=False)
    assert resp.status == 202 and body(resp)["status"] == "running"


def test_infeasible_descriptor(api):
    doc = fx.parade_bench_descriptor().to_dict()
    for c in doc["components"]:
        c["cpu_req"] = 10**9
    resp = api.route_request("POST", "/applications", json.dumps(doc))
    assert resp.status == 422 and body(resp)["error"] == "PlacementFailed"


def test_migration_routes(api):
    app_id = body(deploy(api))["id"]
    resp = api.route_request("POST", f"/applications/{app_id}/migrations",
                             json.dumps({"component": fx.ANALYZER, "reason": "mobility"}))
    assert resp.status == 202
    mid = body(resp)["id"]
    report = body(api.route_request("GET", f"/migrations/{mid}"))
    assert report["status"] == "completed"
    assert report["report"]["component"] == fx.ANALYZER
    assert api.route_request("GET", "/migrations/m99").status == 404
    assert api.route_request("POST", f"/applications/{app_id}/migrations",
                             json.dumps({"component": "ghost"})).status == 404
    assert api.route_request("POST", "/applications/none/migrations",
                             json.dumps({"component": fx.ANALYZER})).status == 404
    api.route_request("DELETE", f"/applications/{app_id}")
    assert api.route_request("POST", f"/applications/{app_id}/migrations",
                             json.dumps({"component": fx.ANALYZER})).status == 409


def test_unknown_route_and_method(api):
    assert api.route_request("GET", "/nothing").status == 404
    assert api.route_request("PUT", "/domains").status == 405


def test_documented_routes_total(api):
    samples = {
        r"^/nodes/([^/]+)$": "/nodes/fog-1",
        r"^/applications/([^/]+)$": "/applications/x",
        r"^/applications/([^/]+)/migrations$": "/applications/x/migrations",
        r"^/migrations/([^/]+)$": "/migrations/m1",
    }
    for method, pattern in api.documented_routes():
        path = samples.get(pattern, pattern.strip("^$"))
        if path == "/fognodes":
            path += "?fromuri=http://probe"
        resp = api.route_request(method, path, "{}")
        assert resp.status != 404 or body(resp)["error"] != "NotFound", (method, path)


# -- real server -----------------------------------------------------------------


def call(url, method, path, payload=None):
    data = None if payload is None else json.dumps(payload).encode()
    req = urllib.request.Request(url + path, data=data, method=method)
    try:
        with urllib.request.urlopen(req, timeout=5) as r:
            return r.status, r.read()
    except urllib.error.HTTPError as e:
        return e.code, e.read()


@pytest.fixture
def server(api):
    srv = PaaSServer(api, "127.0.0.1", 0, notify_interval=0.01)
    srv.start()
    yield srv
    srv.stop()


def test_http_table_routes(server):
    fresh = PaaSServer(PaaSApi(), "127.0.0.1", 0)
    fresh.start()
    try:
        assert call(fresh.url, "GET", "/domains") == (200, b"[]\n")
        status, _ = call(fresh.url, "POST", "/fognodes?fromuri=http://cb")
        assert status == 201
        assert call(fresh.url, "DELETE", "/fognodes?fromuri=http://cb") == (204, b"")
    finally:
        fresh.stop()


class _Collector(BaseHTTPRequestHandler):
    received: list = []

    def do_POST(self):
        n = int(self.headers["Content-Length"])
        self.received.append(json.loads(self.rfile.read(n)))
        self.send_response(200)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def log_message(self, *a):
        pass


def test_http_callbacks_and_node_left_migration(server):
    sink = ThreadingHTTPServer(("127.0.0.1", 0), _Collector)
    _Collector.received = []
    threading.Thread(target=sink.serve_forever, daemon=True).start()
    try:
        cb = f"http://127.0.0.1:{sink.server_address[1]}/events"
        assert call(server.url, "POST", f"/fognodes?fromuri={cb}")[0] == 201
        status, raw = call(server.url, "POST", "/applications",
                           {"descriptor": fx.parade_bench_descriptor().to_dict(), "assignment": fx.TC_LAYOUTS["tc1"]})
        app_id = json.loads(raw)["id"]
        assert call(server.url, "DELETE", "/nodes/fog-1")[0] == 204
        deadline = time.time() + 5
        record = None
        while time.time() < deadline:
            record = json.loads(call(server.url, "GET", f"/applications/{app_id}")[1])
            if _Collector.received and record["deployment_plan"]["assignment"][fx.ANALYZER] != "fog-1":
                break
            time.sleep(0.02)
        assert [e["type"] for e in _Collector.received] == ["node-left"]
        assert record["deployment_plan"]["assignment"][fx.ANALYZER] != "fog-1"
        assert record["status"] == "running"
    finally:
        sink.shutdown()
        sink.server_close()
