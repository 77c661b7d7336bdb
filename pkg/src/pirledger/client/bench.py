"""Benchmark harness: crypto timings, artifact sizes, storage and correctness tables.

Every table is a list of row dicts with a fixed column order; ``run_bench``
writes one CSV per table plus ``summary.md``. Only timing cells vary between
runs.
"""

from __future__ import annotations

import base64
import csv
import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import bgv, codec, ring
from ..bgv import BgvParams
from ..peer.records import record_seed, synthesize_records
from .query import layout_from_metadata, private_get
from .transport import PeerClient

log = logging.getLogger(__name__)

KIB = 1024
DEFAULT_CHANNELS = ("mini", "mid", "rich")
PROJECTION_COUNTS = (100, 1000, 10000)
LINEARITY_COUNTS = (1, 10, 100)

TABLES = {
    "crypto_ops": ("N", "variant", "KeyGen_ms", "Enc_ms", "Eval_ms", "Dec_ms", "reps"),
    "artifact_sizes": ("N", "pk_KB", "sk_KB", "ct_q_KB", "ct_r_KB", "m_DB_KB", "metadata_KB",
                      "pk_bytes", "sk_bytes", "ct_q_bytes", "ct_r_bytes", "m_DB_bytes", "metadata_bytes"),
    "chaincode": ("N", "variant", "InitLedger_ms", "GetMetadata_ms", "PIRQuery_ms", "reps"),
    "network_io": ("channel", "N", "net_io_KB_per_tx", "request_bytes", "response_bytes"),
    "storage": ("N", "n", "m_DB_KB", "metadata_KB", "json_KB", "overhead_block_KB",
                           "overhead_ws_KB", "block_KB", "world_KB"),
    "end_to_end": ("workflow", "variant", "crypto_ms", "blockchain_ms", "total_ms"),
    "projection": ("transactions", "total_bandwidth_MB", "total_time_min", "N"),
    "linearity": ("k", "measured_bytes", "single_query_bytes", "projected_bytes", "ratio"),
    "correctness": ("channel", "N", "n", "successes", "failures"),
}


def _mean_ms(samples_ns) -> float:
    return round(statistics.fmean(samples_ns) / 1e6, 1) if samples_ns else float("nan")


def _kb(b: int, unit: int = KIB) -> float:
    return round(b / unit, 3)


def _timed(fn, *args):
    t0 = time.perf_counter_ns()
    out = fn(*args)
    return out, time.perf_counter_ns() - t0


def _fresh(artifact):
    # drops cached evaluation forms so a cold run pays for them
    return bgv.deserialize(bgv.serialize(artifact), artifact.params)


# crypto-only tables ----------------------------------------------------------------

def crypto_times(params: BgvParams, reps: int, cold: bool, rng) -> dict[str, float]:
    """Mean KeyGen/Enc/Eval/Dec in ms. Cold runs rebuild every NTT table and key cache per op."""
    n = params.n_ring
    layout = codec.SlotLayout(n // 128, 128, n)
    db = codec.encode_db(rng.integers(1, 256, n, dtype=np.uint64), params)
    samples = {"KeyGen": [], "Enc": [], "Eval": [], "Dec": []}
    if not cold:
        bgv.keygen(params, rng)  # build tables once
    for _ in range(reps):
        if cold:
            ring.clear_table_caches()
        (pk, sk), dt = _timed(bgv.keygen, params, rng)
        samples["KeyGen"].append(dt)
        sel = bgv.encode_slots(codec.selection_vector(0, layout), params)
        if cold:
            pk = _fresh(pk)
            ring.clear_table_caches()
        ct, dt = _timed(bgv.encrypt, pk, sel, rng)
        samples["Enc"].append(dt)
        if cold:
            db = bgv.Plaintext(db.slots, params)
            ring.clear_table_caches()
        ct_r, dt = _timed(bgv.eval_ct_pt, ct, db)
        samples["Eval"].append(dt)
        if cold:
            sk = _fresh(sk)
            ring.clear_table_caches()
        _, dt = _timed(bgv.decrypt, sk, ct_r)
        samples["Dec"].append(dt)
    return {k: _mean_ms(v) for k, v in samples.items()}


# peer-backed tables ----------------------------------------------------------------

class Bench:
    def __init__(self, client: PeerClient, channels=DEFAULT_CHANNELS, reps: int = 20,
                 parallel: int = 1, seed: int | None = None, linearity=LINEARITY_COUNTS):
        if reps < 1:
            raise ValueError("reps must be positive")
        self.client = client
        self.reps = reps
        self.parallel = max(1, parallel)
        self.rng = np.random.default_rng(seed)
        self.linearity_counts = tuple(linearity)
        listed = {c["name"]: c for c in client.get_json("/channels")}
        self.channels = []
        for name in channels:
            if name not in listed:
                log.warning("channel %s not served by the peer; skipped", name)
                continue
            self.channels.append(listed[name])
        self.tables: dict[str, list[dict]] = {name: [] for name in TABLES}
        self._meta: dict[str, dict] = {}
        self._keys: dict[str, tuple] = {}

    def _keys_for(self, name: str, params: BgvParams):
        if name not in self._keys:
            self._keys[name] = bgv.keygen(params, self.rng)
        return self._keys[name]

    def run(self) -> dict[str, list[dict]]:
        for ch in self.channels:
            self._channel(ch)
        self._end_to_end()
        self._projection()
        return self.tables

    def _channel(self, ch: dict) -> None:
        name, n_default, b_default = ch["name"], ch["default_n"], ch["default_record_bytes"]
        log.info("bench channel %s", name)
        init_us = []
        for _ in range(self.reps):
            ex = self.client.invoke(name, "submit", "InitLedger", [str(n_default), str(b_default)])
            init_us.append(ex.server_us * 1000)
        meta = self._meta[name] = json.loads(ex.payload)
        params, layout = layout_from_metadata(meta)
        label = f"2^{params.log_n}"
        pk, sk = keys = self._keys_for(name, params)

        # server-side chaincode timings; cold drops the m_DB cache before every query
        for variant in ("cold", "warm"):
            md, pq = [], []
            for r in range(self.reps):
                md.append(self.client.invoke(name, "evaluate", "GetMetadata").server_us * 1000)
                ct_q = codec.build_selector(int(self.rng.integers(layout.n)), layout, pk, self.rng)
                if variant == "cold":
                    self.client.post_json(f"/channels/{name}/cache/drop")
                elif r == 0:
                    self.client.pir_query(name, ct_q)
                pq.append(self.client.pir_query(name, ct_q).server_us * 1000)
            self.tables["chaincode"].append({
                "N": label, "variant": variant, "InitLedger_ms": _mean_ms(init_us),
                "GetMetadata_ms": _mean_ms(md), "PIRQuery_ms": _mean_ms(pq), "reps": self.reps,
            })

        for variant in ("cold", "warm"):
            times = crypto_times(params, self.reps, variant == "cold", self.rng)
            self.tables["crypto_ops"].append(
                {"N": label, "variant": variant, **{f"{k}_ms": v for k, v in times.items()}, "reps": self.reps})

        ct_q = codec.build_selector(0, layout, pk, self.rng)
        ex = self.client.pir_query(name, ct_q)
        storage = self.client.get_json(f"/channels/{name}/storage")
        sizes = {
            "pk": len(bgv.serialize(pk)),
            "sk": len(bgv.serialize(sk)),
            "ct_q": len(base64.b64decode(ct_q)),
            "ct_r": len(base64.b64decode(ex.payload)),
            "m_DB": storage["m_db"],
            "metadata": len(self.client.invoke(name, "evaluate", "GetMetadata").payload.encode()),
        }
        self.tables["artifact_sizes"].append(
            {"N": label, **{f"{k}_KB": _kb(v) for k, v in sizes.items()}, **{f"{k}_bytes": v for k, v in sizes.items()}})
        self.tables["network_io"].append({
            "channel": name, "N": label, "net_io_KB_per_tx": _kb(ex.sent + ex.received),
            "request_bytes": ex.sent, "response_bytes": ex.received,
        })
        # the storage table is in decimal kB
        self.tables["storage"].append({
            "N": label, "n": layout.n,
            **{col: _kb(storage[key], 1000) for col, key in (
                ("m_DB_KB", "m_db"), ("metadata_KB", "metadata"), ("json_KB", "json"),
                ("overhead_block_KB", "block_overhead"), ("overhead_ws_KB", "world_overhead"),
                ("block_KB", "block"), ("world_KB", "world"))},
        })

        # exhaustive sweep against the deterministic synthetic records
        spec = codec.TEMPLATES[ch.get("template") or "mini"]
        expected = synthesize_records(n_default, b_default, spec, record_seed(name, n_default, b_default))
        seeds = self.rng.integers(1 << 62, size=layout.n)

        def one(i):
            rng = np.random.default_rng(int(seeds[i]))
            return private_get(self.client, name, i, metadata=meta, keys=keys, rng=rng).record

        with ThreadPoolExecutor(self.parallel) as pool:
            got = list(pool.map(one, range(layout.n)))
        ok = sum(g == e.decode() for g, e in zip(got, expected))
        self.tables["correctness"].append(
            {"channel": name, "N": label, "n": layout.n, "successes": ok, "failures": layout.n - ok})

        if name == self.channels[-1]["name"]:
            self._linearity(name, layout, pk)

    def _linearity(self, name: str, layout: codec.SlotLayout, pk) -> None:
        single = None
        for k in self.linearity_counts:
            before = self.client.bytes_sent + self.client.bytes_received
            queries = [codec.build_selector(int(self.rng.integers(layout.n)), layout, pk, self.rng) for _ in range(k)]
            with ThreadPoolExecutor(self.parallel) as pool:
                list(pool.map(lambda q: self.client.pir_query(name, q), queries))
            measured = self.client.bytes_sent + self.client.bytes_received - before
            if single is None:
                single = measured / k
            self.tables["linearity"].append({
                "k": k, "measured_bytes": measured, "single_query_bytes": round(single),
                "projected_bytes": round(k * single), "ratio": round(measured / (k * single), 6),
            })

    def _end_to_end(self) -> None:
        upload = [r["InitLedger_ms"] for r in self.tables["chaincode"] if r["variant"] == "cold"]
        if upload:
            up = round(statistics.fmean(upload), 1)
            self.tables["end_to_end"].append({"workflow": "DW upload", "variant": "cold", "crypto_ms": 0.0,
                                                    "blockchain_ms": up, "total_ms": up})
        for variant in ("cold", "warm"):
            crypto, chain = [], []
            for ch in self.channels:
                name = ch["name"]
                meta = self._meta[name]
                for _ in range(self.reps):
                    if variant == "cold":
                        self.client.post_json(f"/channels/{name}/cache/drop")
                        report = private_get(self.client, name, int(self.rng.integers(meta["n"])), rng=self.rng)
                    else:
                        params, _ = layout_from_metadata(meta)
                        report = private_get(self.client, name, int(self.rng.integers(meta["n"])), rng=self.rng,
                                             keys=self._keys_for(name, params))
                    crypto.append(report.crypto_ms)
                    chain.append(report.ledger_ms)
            if crypto:
                c, b = round(statistics.fmean(crypto), 1), round(statistics.fmean(chain), 1)
                self.tables["end_to_end"].append({"workflow": "DR query", "variant": variant,
                                                        "crypto_ms": c, "blockchain_ms": b, "total_ms": round(c + b, 1)})

    def _projection(self) -> None:
        if not self.tables["network_io"]:
            return
        # the largest ring served
        io = max(self.tables["network_io"], key=lambda r: int(r["N"].split("^")[1]))
        per_tx = io["request_bytes"] + io["response_bytes"]
        pq = [r["PIRQuery_ms"] for r in self.tables["chaincode"] if r["N"] == io["N"] and r["variant"] == "warm"]
        per_ms = pq[0] if pq else float("nan")
        for k in PROJECTION_COUNTS:
            self.tables["projection"].append({
                "transactions": k, "total_bandwidth_MB": round(k * per_tx / 1e6, 1),
                "total_time_min": round(k * per_ms / 60000, 2), "N": io["N"],
            })


def write_tables(tables: dict[str, list[dict]], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, columns in TABLES.items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns)
            w.writeheader()
            w.writerows(tables.get(name, []))
        written.append(path)
    path = out / "summary.md"
    path.write_text(render_markdown(tables))
    written.append(path)
    return written


def render_markdown(tables: dict[str, list[dict]]) -> str:
    parts = ["# Benchmark summary", ""]
    for name, columns in TABLES.items():
        parts += [f"## {name}", "", "| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
        for row in tables.get(name, []):
            parts.append("| " + " | ".join(str(row.get(c, "")) for c in columns) + " |")
        parts.append("")
    return "\n".join(parts)


def run_bench(client: PeerClient, channels=DEFAULT_CHANNELS, reps: int = 20, out_dir=None,
              parallel: int = 1, seed: int | None = None, linearity=LINEARITY_COUNTS) -> dict[str, list[dict]]:
    bench = Bench(client, channels, reps, parallel, seed, linearity)
    tables = bench.run()
    if out_dir is not None:
        write_tables(tables, out_dir)
    return tables


__all__ = ["Bench", "TABLES", "crypto_times", "render_markdown", "run_bench", "write_tables"]
