"""End-to-end private read: metadata, keys, selector, PIRQuery, decryption."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import bgv, codec
from ..bgv import BgvParams
from .keystore import Keystore
from .transport import PeerClient

STAGES = ("metadata", "key_load", "keygen", "encrypt", "network", "decrypt")


class QueryIndexError(codec.PirError):
    """Index outside [0, n); raised before anything index-dependent leaves the client."""


@dataclass
class QueryReport:
    channel: str
    index: int
    stage_ns: dict[str, int] = field(default_factory=lambda: dict.fromkeys(STAGES, 0))
    query_bytes: int = 0
    response_bytes: int = 0
    server_us: int = 0
    record: str | int | None = None
    metadata: dict | None = None

    @property
    def stages_ms(self) -> dict[str, float]:
        return {k: round(v / 1e6, 1) for k, v in self.stage_ns.items()}

    @property
    def total_ms(self) -> float:
        # defined as the sum of the displayed stages so the two always agree
        return round(sum(self.stages_ms.values()), 1)

    @property
    def crypto_ms(self) -> float:
        s = self.stages_ms
        return round(s["key_load"] + s["keygen"] + s["encrypt"] + s["decrypt"], 1)

    @property
    def ledger_ms(self) -> float:
        s = self.stages_ms
        return round(s["metadata"] + s["network"], 1)

    def as_dict(self) -> dict:
        return {
            "channel": self.channel,
            "index": self.index,
            "stages_ms": self.stages_ms,
            "total_ms": self.total_ms,
            "query_bytes": self.query_bytes,
            "response_bytes": self.response_bytes,
            "server_us": self.server_us,
        }

    def render(self) -> str:
        lines = [f"{name:<9} {ms:>8.1f} ms" for name, ms in self.stages_ms.items()]
        lines.append(f"{'total':<9} {self.total_ms:>8.1f} ms")
        lines.append(f"query {self.query_bytes} B, response {self.response_bytes} B, peer {self.server_us / 1000:.1f} ms")
        return "\n".join(lines)


class _Stage:
    def __init__(self, report: QueryReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter_ns()

    def __exit__(self, *exc):
        self.report.stage_ns[self.name] += time.perf_counter_ns() - self.t0


def layout_from_metadata(meta: dict) -> tuple[BgvParams, codec.SlotLayout]:
    params = BgvParams.from_meta(meta["bgv_params"])
    return params, codec.SlotLayout(int(meta["n"]), int(meta["record_s"]), params.n_ring)


def obtain_keys(keystore: Keystore | None, params: BgvParams, rng, report: QueryReport):
    """Keys for params from the keystore, generating and storing them on a miss."""
    if keystore is not None:
        with _Stage(report, "key_load"):
            keys = keystore.load(params)
        if keys is not None:
            return keys
    with _Stage(report, "keygen"):
        pk, sk = bgv.keygen(params, rng)
    if keystore is not None:
        with _Stage(report, "key_load"):
            keystore.store(pk, sk, force=True)
    return pk, sk


def private_get(
    client: PeerClient,
    channel: str,
    index: int,
    keystore: Keystore | None = None,
    rng: np.random.Generator | None = None,
    metadata: dict | None = None,
    keys=None,
) -> QueryReport:
    """Retrieve record ``index`` of ``channel`` without revealing it to the peer.

    ``metadata`` and ``keys`` skip the corresponding stages when supplied (bench
    warm runs). Raises QueryIndexError before any query bytes are sent when the
    index is out of range.
    """
    rng = rng if rng is not None else np.random.default_rng()
    report = QueryReport(channel, index)
    if metadata is None:
        with _Stage(report, "metadata"):
            metadata = client.metadata(channel)
    report.metadata = metadata
    params, layout = layout_from_metadata(metadata)
    if not 0 <= index < layout.n:
        raise QueryIndexError(f"index {index} out of range [0, {layout.n})")

    pk, sk = keys if keys is not None else obtain_keys(keystore, params, rng, report)
    with _Stage(report, "encrypt"):
        ct_q = codec.build_selector(index, layout, pk, rng)
    with _Stage(report, "network"):
        ex = client.pir_query(channel, ct_q)
    report.query_bytes, report.response_bytes, report.server_us = ex.sent, ex.received, ex.server_us
    with _Stage(report, "decrypt"):
        report.record = codec.decrypt_result(ex.payload, sk, index, layout)
    return report
