"""HTTP surface over the repository and orchestrator.

``PaaSApi.route_request`` is a pure dispatcher (method, target, body) ->
``Response`` so the route table can be exercised without sockets;
``serve`` wraps it in a threading HTTP server.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable
from urllib.parse import parse_qs, urlsplit

from .appgraph import descriptor_from_dict, validate_graph
from .errors import (
    ChainingFailed,
    DanglingLink,
    DeploymentFailed,
    DescriptorSyntaxError,
    DuplicateNode,
    DuplicateSubscription,
    FogPaaSError,
    GraphError,
    InvalidState,
    NoCandidate,
    PlacementFailed,
    SchemaError,
    StepFailed,
    UnknownApplication,
    UnknownComponent,
    UnknownNode,
    UnknownSubscription,
)
from .infra import InfrastructureRepository, LinkRecord, NodeRecord
from .migration import REASONS, MigrationRequest
from .nodesim import REGISTRY, SimConfig, Simulator
from .orchestrator import Orchestrator

log = logging.getLogger(__name__)

INTERNAL_PREFIX = "internal:"
ORCHESTRATOR_SUBSCRIBER = "internal:orchestrator"


@dataclass
class Response:
    status: int
    body: Any = None
    headers: dict[str, str] = field(default_factory=dict)

    def encode(self) -> bytes:
        if self.body is None:
            return b""
        return (json.dumps(self.body, sort_keys=True) + "\n").encode("utf-8")


class BadRequest(Exception):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _error(status: int, exc: BaseException, violations: list[str] | None = None) -> Response:
    body: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    if violations is not None:
        body["violations"] = violations
    return Response(status, body)


def _json_body(body: bytes | str | None) -> Any:
    if body is None or body == b"" or body == "":
        raise BadRequest(["request body is empty"])
    if isinstance(body, bytes):
        try:
            body = body.decode("utf-8")
        except UnicodeDecodeError:
            raise BadRequest(["request body is not UTF-8"]) from None
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise BadRequest([f"malformed JSON: {exc}"]) from None


class PaaSApi:
    """Route table for every documented resource."""

    def __init__(
        self,
        repo: InfrastructureRepository | None = None,
        sim: Simulator | None = None,
        orchestrator: Orchestrator | None = None,
    ):
        self.repo = repo or InfrastructureRepository()
        self.sim = sim or Simulator(SimConfig(uniform_latency_ms=10))
        self.orchestrator = orchestrator or Orchestrator(self.repo, self.sim)
        self._routes: list[tuple[str, re.Pattern, Callable[..., Response]]] = [
            ("GET", re.compile(r"^/domains$"), self._get_domains),
            ("POST", re.compile(r"^/fognodes$"), self._subscribe),
            ("DELETE", re.compile(r"^/fognodes$"), self._unsubscribe),
            ("POST", re.compile(r"^/nodes$"), self._publish),
            ("DELETE", re.compile(r"^/nodes/([^/]+)$"), self._remove),
            ("GET", re.compile(r"^/infrastructure$"), self._infrastructure),
            ("GET", re.compile(r"^/applications$"), self._list_apps),
            ("POST", re.compile(r"^/applications$"), self._deploy),
            ("GET", re.compile(r"^/applications/([^/]+)$"), self._status),
            ("DELETE", re.compile(r"^/applications/([^/]+)$"), self._teardown),
            ("POST", re.compile(r"^/applications/([^/]+)/migrations$"), self._migrate),
            ("GET", re.compile(r"^/migrations/([^/]+)$"), self._migration),
        ]

    def documented_routes(self) -> list[tuple[str, str]]:
        return [(m, p.pattern) for m, p, _ in self._routes]

    def route_request(self, method: str, target: str, body: bytes | str | None = None) -> Response:
        parts = urlsplit(target)
        query = {k: v[-1] for k, v in parse_qs(parts.query, keep_blank_values=True).items()}
        path_matched = False
        for m, pattern, handler in self._routes:
            match = pattern.match(parts.path)
            if not match:
                continue
            path_matched = True
            if m != method:
                continue
            try:
                return handler(*match.groups(), query=query, body=body)
            except BadRequest as exc:
                return _error(400, exc, exc.violations)
            except FogPaaSError as exc:
                log.warning("%s %s failed: %s", method, target, exc)
                return _error(500, exc)
        if path_matched:
            return Response(405, {"error": "MethodNotAllowed", "message": f"{method} {parts.path}"})
        return Response(404, {"error": "NotFound", "message": parts.path})

    # -- infrastructure ----------------------------------------------------

    def _get_domains(self, query, body) -> Response:
        return Response(200, [d.to_dict() for d in self.repo.list_domains()])

    def _subscriber(self, query) -> str:
        uri = query.get("fromuri")
        if not uri:
            raise BadRequest(["query parameter fromuri is required"])
        return uri

    def _subscribe(self, query, body) -> Response:
        uri = self._subscriber(query)
        try:
            sub = self.repo.subscribe(uri)
        except DuplicateSubscription as exc:
            return _error(409, exc)
        return Response(201, {"subscriber_uri": sub.subscriber_uri, "created_at": sub.created_at})

    def _unsubscribe(self, query, body) -> Response:
        uri = self._subscriber(query)
        try:
            self.repo.unsubscribe(uri)
        except UnknownSubscription as exc:
            return _error(404, exc)
        return Response(204)

    def _publish(self, query, body) -> Response:
        doc = _json_body(body)
        if not isinstance(doc, dict):
            raise BadRequest(["body must be a JSON object"])
        node_doc = doc.get("node", doc)
        links_doc = doc.get("links", [])
        try:
            node = NodeRecord.from_dict({k: v for k, v in node_doc.items() if k != "links"})
            links = [LinkRecord.from_dict(l) for l in links_doc]
        except (KeyError, TypeError, ValueError) as exc:
            raise BadRequest([f"invalid node or link: {exc}"]) from None
        try:
            self.repo.publish_node(node, links)
        except DuplicateNode as exc:
            return _error(409, exc)
        except DanglingLink as exc:
            return _error(422, exc)
        except ValueError as exc:
            raise BadRequest([str(exc)]) from None
        self.sync_sim()
        return Response(201, self.repo.snapshot().node(node.id).to_dict())

    def sync_sim(self) -> None:
        """Give newly joined nodes a registry path in the simulator."""
        snap = self.repo.snapshot()
        self.sim.sync_nodes(snap)
        cfg = self.sim.config
        for n in snap.nodes:
            key = tuple(sorted((n.id, REGISTRY)))
            cfg.bandwidth_mbps.setdefault(key, n.registry_bandwidth or 100.0)

    def _remove(self, node_id, query, body) -> Response:
        try:
            self.repo.remove_node(node_id)
        except UnknownNode as exc:
            return _error(404, exc)
        return Response(204)

    def _infrastructure(self, query, body) -> Response:
        return Response(200, self.repo.snapshot().to_dict())

    # -- applications ------------------------------------------------------

    def _list_apps(self, query, body) -> Response:
        return Response(200, [self.orchestrator.application_status(a) for a in self.orchestrator.applications()])

    def _deploy(self, query, body) -> Response:
        doc = _json_body(body)
        assignment = None
        if isinstance(doc, dict) and "descriptor" in doc:
            assignment = doc.get("assignment")
            doc = doc["descriptor"]
        try:
            d = descriptor_from_dict(doc)
        except (SchemaError, DescriptorSyntaxError) as exc:
            raise BadRequest([str(exc)]) from None
        violations = validate_graph(d)
        if violations:
            raise BadRequest(violations)
        self.sync_sim()
        try:
            rec = self.orchestrator.handle_deploy(d, assignment)
        except PlacementFailed as exc:
            return _error(422, exc)
        except GraphError as exc:
            raise BadRequest(exc.violations) from None
        except (DeploymentFailed, ChainingFailed) as exc:
            return _error(500, exc)
        return Response(202, {"id": rec.id, "status": rec.status}, {"Location": f"/applications/{rec.id}"})

    def _status(self, app_id, query, body) -> Response:
        try:
            return Response(200, self.orchestrator.application_status(app_id))
        except UnknownApplication as exc:
            return _error(404, exc)

    def _teardown(self, app_id, query, body) -> Response:
        try:
            rec = self.orchestrator.teardown(app_id)
        except UnknownApplication as exc:
            return _error(404, exc)
        return Response(200, rec.to_dict())

    def _migrate(self, app_id, query, body) -> Response:
        doc = _json_body(body)
        if not isinstance(doc, dict):
            raise BadRequest(["body must be a JSON object"])
        violations = []
        component = doc.get("component")
        if not isinstance(component, str):
            violations.append("component: required string")
        reason = doc.get("reason", "manual")
        if reason not in REASONS:
            violations.append(f"reason: must be one of {list(REASONS)}")
        hint = doc.get("hint")
        if hint is not None and not isinstance(hint, str):
            violations.append("hint: must be a string")
        if violations:
            raise BadRequest(violations)
        req = MigrationRequest(app_id, component, reason, hint)
        try:
            mid = self.orchestrator.submit_migration(req)
        except (UnknownApplication, UnknownComponent) as exc:
            return _error(404, exc)
        except InvalidState as exc:
            return _error(409, exc)
        except NoCandidate as exc:
            return _error(422, exc)
        return Response(202, {"id": mid, "status": self.orchestrator.migrations[mid]["status"]},
                        {"Location": f"/migrations/{mid}"})

    def _migration(self, mid, query, body) -> Response:
        entry = self.orchestrator.migrations.get(mid)
        if entry is None:
            return Response(404, {"error": "UnknownMigration", "message": mid})
        return Response(200, entry)


# -- notification transport ------------------------------------------------


def http_post_json(uri: str, payload: dict, timeout: float = 5.0) -> bool:
    data = json.dumps(payload, sort_keys=True).encode("utf-8")
    req = urllib.request.Request(uri, data=data, method="POST", headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return 200 <= resp.status < 300
    except (urllib.error.URLError, OSError) as exc:
        log.debug("callback %s failed: %s", uri, exc)
        return False


class CallbackTransport:
    """Delivers ``internal:`` subscribers in process and the rest over HTTP."""

    def __init__(self, post: Callable[[str, dict], bool] = http_post_json):
        self.local: dict[str, Callable[[str, dict], bool]] = {}
        self.post = post

    def __call__(self, uri: str, payload: dict) -> bool:
        if uri.startswith(INTERNAL_PREFIX):
            handler = self.local.get(uri)
            return True if handler is None else handler(uri, payload)
        return self.post(uri, payload)


# -- server ----------------------------------------------------------------


def _handler_for(api: PaaSApi):
    class Handler(BaseHTTPRequestHandler):
        server_version = "fogpaas"
        protocol_version = "HTTP/1.1"

        def _dispatch(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else None
            resp = api.route_request(self.command, self.path, body)
            data = resp.encode()
            self.send_response(resp.status)
            for k, v in resp.headers.items():
                self.send_header(k, v)
            if data:
                self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            if data:
                self.wfile.write(data)

        do_GET = do_POST = do_DELETE = do_PUT = _dispatch

        def log_message(self, fmt, *args):
            log.info("%s " + fmt, self.address_string(), *args)

    return Handler


class PaaSServer:
    """Threading HTTP server plus the repository's notification loop."""

    def __init__(self, api: PaaSApi, host: str = "127.0.0.1", port: int = 8080, notify_interval: float = 0.05):
        self.api = api
        self.transport = CallbackTransport()
        self.transport.local[ORCHESTRATOR_SUBSCRIBER] = api.orchestrator.on_infra_event
        api.repo.transport = self.transport
        if ORCHESTRATOR_SUBSCRIBER not in {s.subscriber_uri for s in api.repo.subscriptions()}:
            api.repo.subscribe(ORCHESTRATOR_SUBSCRIBER)
        self.httpd = ThreadingHTTPServer((host, port), _handler_for(api))
        self.notify_interval = notify_interval
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self.api.repo.start_delivery(self.notify_interval)
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="fogpaas-http", daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self.api.repo.start_delivery(self.notify_interval)
        try:
            self.httpd.serve_forever()
        finally:
            self.api.repo.stop_delivery()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.api.repo.stop_delivery()
        if self._thread is not None:
            self._thread.join()
