"""The three chaincode functions and the evaluate/submit dispatcher.

``Peer.execute`` is the single entry point. Submit transactions take the
channel's write lock and append exactly one block on success; evaluate
transactions take the read lock and never touch the block log.
"""

from __future__ import annotations

import binascii
import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .. import bgv, codec
from ..bgv import BgvParams
from ..ring import count_ops
from .records import parse_records, record_seed, synthesize_records
from .state import DEFAULT_CHANNELS, ChannelConfig, ChannelState, StoreError

log = logging.getLogger(__name__)

EVALUATE, SUBMIT = "evaluate", "submit"
TX_TYPES = (EVALUATE, SUBMIT)
READ_ONLY = frozenset({"GetMetadata", "PIRQuery"})
WRITE = frozenset({"InitLedger"})
FUNCTIONS = READ_ONLY | WRITE

# Fields a request-log entry may carry. None of them is derived from the
# queried index; tests assert the schema.
LOG_FIELDS = (
    "channel", "tx_type", "function", "status", "request_bytes",
    "response_bytes", "server_us", "ring_ops", "cache",
)


class ChaincodeError(Exception):
    """Bottom result of a chaincode function; ``str(exc)`` is the detail sent to the caller."""


@dataclass
class TxResponse:
    status: str
    payload: str = ""
    detail: str = ""
    server_us: int = 0
    ring_ops: dict = field(default_factory=dict)
    cache: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> dict:
        return {"status": self.status, "payload": self.payload, "detail": self.detail, "server_us": self.server_us}


def _metadata_payload(state: ChannelState) -> dict:
    try:
        n = state.world_state["n"]
        record_s = state.world_state["record_s"]
        meta = state.world_state["bgv_params"]
    except KeyError:
        raise ChaincodeError("not initialized") from None
    params_meta = json.loads(meta)
    return {
        "n": int(n),
        "record_s": int(record_s),
        "bgv_params": {
            "log_n": int(params_meta["log_n"]),
            "n": int(params_meta["n"]),
            "log_q": [int(b) for b in params_meta["log_q"]],
            "log_p": [int(b) for b in params_meta["log_p"]],
            "t": int(params_meta["t"]),
        },
    }


def _string_meta(params: BgvParams) -> dict:
    meta = params.meta()
    return {
        "log_n": str(meta["log_n"]),
        "n": str(meta["n"]),
        "log_q": [str(b) for b in meta["log_q"]],
        "log_p": [str(b) for b in meta["log_p"]],
        "t": str(meta["t"]),
    }


def _compact(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode()


def _parse_int(name: str, raw: str) -> int:
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ChaincodeError(f"argument {name} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ChaincodeError(f"argument {name} must be positive, got {value}")
    return value


class Peer:
    """A single endorsing peer hosting one world state per channel."""

    def __init__(
        self,
        configs=DEFAULT_CHANNELS,
        data_dir: str | os.PathLike | None = None,
        write_records: bool = True,
        log_size: int = 10_000,
    ):
        self.write_records = write_records
        self.channels: dict[str, ChannelState] = {}
        for config in configs:
            if config.name in self.channels:
                raise ValueError(f"duplicate channel {config.name!r}")
            state = ChannelState(config, data_dir)
            if data_dir is not None:
                state.restore()
            self.channels[config.name] = state
        self.request_log: deque[dict] = deque(maxlen=log_size)
        self._log_lock = threading.Lock()

    # dispatcher ------------------------------------------------------------------

    def execute(self, channel: str, tx_type: str, function: str, args=()) -> TxResponse:
        start = time.perf_counter_ns()
        response = self._dispatch(channel, tx_type, function, [str(a) for a in args])
        response.server_us = (time.perf_counter_ns() - start) // 1000
        return response

    def _dispatch(self, channel: str, tx_type: str, function: str, args: list[str]) -> TxResponse:
        state = self.channels.get(channel)
        if state is None:
            return TxResponse("error", detail="unknown channel")
        if tx_type not in TX_TYPES:
            return TxResponse("error", detail=f"unknown transaction type {tx_type!r}")
        if function not in FUNCTIONS:
            return TxResponse("error", detail=f"unknown function {function!r}")
        if tx_type == SUBMIT and function in READ_ONLY:
            return TxResponse("error", detail=f"{function} is read-only; use evaluate")
        if tx_type == EVALUATE and function in WRITE:
            return TxResponse("error", detail=f"{function} mutates state; use submit")
        try:
            if function == "InitLedger":
                with state.lock.write():
                    return self._init_ledger(state, args)
            with state.lock.read():
                if function == "GetMetadata":
                    return TxResponse("ok", json.dumps(_metadata_payload(state)))
                return self._pir_query(state, args)
        except ChaincodeError as exc:
            return TxResponse("error", detail=str(exc))

    def handle(self, channel: str, tx_type: str, function: str, args, request_bytes: int = 0) -> TxResponse:
        """execute() plus a request-log entry, as used by the wire server."""
        response = self.execute(channel, tx_type, function, args)
        entry = {
            "channel": channel,
            "tx_type": tx_type,
            "function": function,
            "status": response.status,
            "request_bytes": request_bytes,
            "response_bytes": len(json.dumps(response.to_json()).encode()),
            "server_us": response.server_us,
            "ring_ops": dict(response.ring_ops),
            "cache": response.cache,
        }
        with self._log_lock:
            self.request_log.append(entry)
        return response

    # Alg. InitLedger -------------------------------------------------------------

    def _init_ledger(self, state: ChannelState, args: list[str]) -> TxResponse:
        if len(args) < 2 or len(args) > 4:
            raise ChaincodeError("InitLedger expects [n, record_bytes, hint?, records?]")
        n = _parse_int("n", args[0])
        record_bytes = _parse_int("record_bytes", args[1])
        hint = self._parse_hint(args[2]) if len(args) > 2 and args[2] else {}
        bound_s = codec.compute_record_s(record_bytes)

        log_n = hint.get("log_n") or codec.select_min_logn(n, bound_s)
        if log_n is None:
            raise ChaincodeError(f"no feasible ring: {n}*{bound_s}={n * bound_s} exceeds N=2^{max(codec.LOG_N_CANDIDATES)}")
        config = state.config
        try:
            params = BgvParams(
                log_n=int(log_n),
                t=int(hint.get("t", config.t)),
                log_q=tuple(hint.get("log_q", config.log_q)),
                log_p=tuple(hint.get("log_p", config.log_p)),
            )
        except (bgv.ParamsError, TypeError, ValueError) as exc:
            raise ChaincodeError(f"invalid parameters: {exc}") from None

        template = config.template_spec
        if len(args) > 3 and args[3]:
            try:
                records = parse_records(args[3])
            except ValueError as exc:
                raise ChaincodeError(f"unreadable records: {exc}") from None
            if len(records) != n:
                raise ChaincodeError(f"expected {n} records, got {len(records)}")
        else:
            records = synthesize_records(n, record_bytes, template, record_seed(state.name, n, record_bytes))
        oversize = [i for i, rec in enumerate(records) if len(rec) > record_bytes]
        if oversize:
            i = oversize[0]
            raise ChaincodeError(f"oversize record: record {i} is {len(records[i])} bytes > {record_bytes}")

        record_s = codec.compute_record_s(max(len(r) for r in records))
        report = codec.check_feasibility(params.log_n, record_s, n, template)
        if not report.feasible:
            raise ChaincodeError(f"infeasible configuration: {report.detail}")

        try:
            record_set = codec.RecordSet(records)
            layout = codec.SlotLayout(n, record_s, params.n_ring)
            pt = codec.encode_db(codec.pack_records(record_set, layout), params)
        except codec.PirError as exc:
            raise ChaincodeError(str(exc)) from None

        m_db = bgv.serialize(pt)
        meta = _compact(_string_meta(params))
        writes = {"m_DB": m_db, "n": str(n).encode(), "record_s": str(record_s).encode(), "bgv_params": meta}
        json_bytes = 0
        if self.write_records:
            for i, rec in enumerate(records):
                writes[f"record{i:03d}"] = rec
                json_bytes += len(rec)
        tx_hash = hashlib.sha256(_compact([state.name, "InitLedger", *args])).hexdigest()
        metadata_bytes = len(writes["n"]) + len(writes["record_s"]) + len(meta)
        try:
            block = state.commit(writes, tx_hash, {"m_db": len(m_db), "metadata": metadata_bytes, "json": json_bytes})
        except OSError as exc:
            raise ChaincodeError(f"persist failed: {exc}") from None
        log.info("channel %s initialized: n=%d record_s=%d logN=%d block=%d",
                 state.name, n, record_s, params.log_n, block.sequence)
        return TxResponse("ok", json.dumps(_metadata_payload(state)))

    @staticmethod
    def _parse_hint(raw: str) -> dict:
        try:
            hint = json.loads(raw)
        except ValueError:
            raise ChaincodeError("hint must be a JSON object") from None
        if not isinstance(hint, dict):
            raise ChaincodeError("hint must be a JSON object")
        unknown = set(hint) - {"log_n", "log_q", "log_p", "t"}
        if unknown:
            raise ChaincodeError(f"unknown hint fields {sorted(unknown)}")
        return hint

    # Alg. PIRQuery ---------------------------------------------------------------

    def _pir_query(self, state: ChannelState, args: list[str]) -> TxResponse:
        if not args or not args[0]:
            raise ChaincodeError("empty query")
        if not state.initialized:
            raise ChaincodeError("not initialized")
        params = state.params()
        try:
            ct_q = bgv.from_base64(args[0], params, expect=bgv.KIND_CT)
        except (bgv.SerializationError, bgv.ParamsError, binascii.Error, ValueError) as exc:
            raise ChaincodeError(f"malformed query: {exc}") from None
        try:
            db, cached = state.prepared_db()
        except (bgv.SerializationError, bgv.ParamsError) as exc:
            raise ChaincodeError(f"stored m_DB unreadable: {exc}") from None
        with count_ops() as ops:
            ct_r = bgv.eval_ct_pt(ct_q, db)
        return TxResponse("ok", bgv.to_base64(ct_r), ring_ops=ops.as_dict(), cache="warm" if cached else "cold")

    # operator helpers ------------------------------------------------------------

    def drop_cache(self, channel: str | None = None) -> None:
        for name, state in self.channels.items():
            if channel is None or name == channel:
                state.drop_cache()

    def storage_report(self, channel: str) -> dict:
        state = self.channels[channel]
        with state.lock.read():
            report = state.footprint()
            report["blocks"] = len(state.block_log)
            report["digest"] = state.digest()
        return report

    def channel_list(self) -> list[dict]:
        out = []
        for name, state in self.channels.items():
            with state.lock.read():
                params = state.params()
                entry = {
                    "name": name,
                    "initialized": state.initialized,
                    "bgv_params": params.meta(),
                    "default_n": state.config.default_n,
                    "default_record_bytes": state.config.default_record_bytes,
                    "template": state.config.template_spec.name,
                }
            out.append(entry)
        return out


__all__ = [
    "ChaincodeError", "ChannelConfig", "Peer", "StoreError", "TxResponse",
    "EVALUATE", "SUBMIT", "LOG_FIELDS",
]
