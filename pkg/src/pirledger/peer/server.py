"""HTTP/JSON front end for a Peer.

Routes::

    POST /channels/{name}/{evaluate|submit}/{function}   body {"args": [...]}
    GET  /channels                                       channel list with params
    GET  /channels/{name}/storage                        footprint + state digest
    POST /channels/{name}/cache/drop                     forget the cached m_DB
    GET  /stats                                          recent request log
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import unquote

from .chaincode import Peer
from .state import DEFAULT_CHANNELS, StoreError, load_config

log = logging.getLogger(__name__)

MAX_BODY = 64 << 20


class PeerRequestHandler(BaseHTTPRequestHandler):
    server: "PeerServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, code: int, body: dict | list) -> None:
        raw = json.dumps(body).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def _error(self, code: int, detail: str) -> None:
        self._send(code, {"status": "error", "payload": "", "detail": detail, "server_us": 0})

    def _parts(self) -> list[str]:
        path = self.path.split("?", 1)[0]
        return [unquote(p) for p in path.strip("/").split("/") if p]

    def do_GET(self):
        peer = self.server.peer
        parts = self._parts()
        if parts == ["channels"]:
            self._send(200, peer.channel_list())
        elif parts == ["stats"]:
            with peer._log_lock:
                entries = list(peer.request_log)
            self._send(200, entries)
        elif len(parts) == 3 and parts[0] == "channels" and parts[2] == "storage":
            if parts[1] not in peer.channels:
                self._error(404, "unknown channel")
            else:
                self._send(200, peer.storage_report(parts[1]))
        else:
            self._error(404, f"no route for GET {self.path}")

    def do_POST(self):
        peer = self.server.peer
        parts = self._parts()
        try:
            length = int(self.headers.get("Content-Length") or 0)
        except ValueError:
            length = -1
        if length < 0 or length > MAX_BODY:
            self.close_connection = True
            self._error(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, "bad Content-Length")
            return
        raw = self.rfile.read(length) if length else b""

        if len(parts) == 4 and parts[0] == "channels" and parts[2:] == ["cache", "drop"]:
            if parts[1] not in peer.channels:
                self._error(404, "unknown channel")
                return
            peer.drop_cache(parts[1])
            self._send(200, {"status": "ok", "payload": "", "detail": "", "server_us": 0})
            return
        if len(parts) != 4 or parts[0] != "channels":
            self._error(404, f"no route for POST {self.path}")
            return
        try:
            body = json.loads(raw or b"{}")
            args = body.get("args", []) if isinstance(body, dict) else None
            if not isinstance(args, list) or not all(isinstance(a, str) for a in args):
                raise ValueError("args must be a list of strings")
        except (ValueError, UnicodeDecodeError) as exc:
            self._error(400, f"bad request body: {exc}")
            return
        _, channel, tx_type, function = parts
        response = peer.handle(channel, tx_type, function, args, request_bytes=len(raw))
        self._send(200, response.to_json())


class PeerServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, peer: Peer):
        super().__init__(address, PeerRequestHandler)
        self.peer = peer

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, name="pirpeer", daemon=True)
        thread.start()
        return thread


def parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    return host or "127.0.0.1", int(port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pirpeer", description="Run a simulated ledger peer with PIR chaincode.")
    parser.add_argument("--bind", default="127.0.0.1:7051", help="host:port to listen on")
    parser.add_argument("--data", default=None, help="state directory (in-memory when omitted)")
    parser.add_argument("--config", default=None, help="JSON channel list (defaults: mini, mid, rich)")
    parser.add_argument("--no-records", action="store_true", help="do not keep the per-record JSON view")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(asctime)s %(levelname)s %(message)s")

    configs = load_config(args.config) if args.config else DEFAULT_CHANNELS
    try:
        peer = Peer(configs, data_dir=args.data, write_records=not args.no_records)
    except StoreError as exc:
        print(f"pirpeer: {exc}", file=sys.stderr)
        return 2
    server = PeerServer(parse_bind(args.bind), peer)
    log.info("serving %s on %s", ", ".join(peer.channels), server.url)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
