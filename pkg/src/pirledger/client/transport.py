"""Thin HTTP client for the peer's wire API with byte accounting."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

import requests


class PeerError(RuntimeError):
    """Peer answered with status "error"; ``detail`` is its explanation verbatim."""

    def __init__(self, function: str, detail: str):
        super().__init__(f"{function}: {detail}")
        self.function = function
        self.detail = detail


@dataclass
class Exchange:
    status: str
    payload: str
    detail: str
    server_us: int
    sent: int
    received: int


class PeerClient:
    """Counts request and response body bytes per call and in aggregate."""

    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._local = threading.local()
        self._lock = threading.Lock()
        self.bytes_sent = 0
        self.bytes_received = 0

    @property
    def session(self) -> requests.Session:
        # requests.Session is not thread-safe; one per thread
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
        return s

    def _account(self, sent: int, received: int) -> None:
        with self._lock:
            self.bytes_sent += sent
            self.bytes_received += received

    def call(self, channel: str, tx_type: str, function: str, args=()) -> Exchange:
        body = json.dumps({"args": [str(a) for a in args]}).encode()
        url = f"{self.base_url}/channels/{channel}/{tx_type}/{function}"
        resp = self.session.post(url, data=body, headers={"Content-Type": "application/json"}, timeout=self.timeout)
        raw = resp.content
        self._account(len(body), len(raw))
        try:
            doc = resp.json()
        except ValueError:
            resp.raise_for_status()
            raise PeerError(function, f"non-JSON response (HTTP {resp.status_code})") from None
        return Exchange(doc.get("status", "error"), doc.get("payload", ""), doc.get("detail", ""),
                        int(doc.get("server_us", 0)), len(body), len(raw))

    def invoke(self, channel: str, tx_type: str, function: str, args=()) -> Exchange:
        """call() that raises PeerError on a bottom result."""
        ex = self.call(channel, tx_type, function, args)
        if ex.status != "ok":
            raise PeerError(function, ex.detail)
        return ex

    def get_json(self, path: str):
        resp = self.session.get(f"{self.base_url}/{path.lstrip('/')}", timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def post_json(self, path: str):
        resp = self.session.post(f"{self.base_url}/{path.lstrip('/')}", data=b"", timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    # chaincode wrappers

    def init_ledger(self, channel: str, n: int, record_bytes: int, hint: str = "", records: str = "") -> dict:
        args = [str(n), str(record_bytes)]
        if hint or records:
            args.append(hint)
        if records:
            args.append(records)
        return json.loads(self.invoke(channel, "submit", "InitLedger", args).payload)

    def metadata(self, channel: str) -> dict:
        return json.loads(self.invoke(channel, "evaluate", "GetMetadata").payload)

    def pir_query(self, channel: str, ct_q_b64: str) -> Exchange:
        return self.invoke(channel, "evaluate", "PIRQuery", [ct_q_b64])
