"""Per-channel world state, block log and their on-disk form.

Directory layout per channel::

    m_DB.bin                  packed database plaintext (BGV wire format)
    meta.json                 n, record_s, bgv_params as decimal strings
    records/record%03d.json   optional JSON view of each record
    blocks.log                one JSON line per committed block
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .. import bgv
from ..bgv import BgvParams
from ..codec import TEMPLATE_BY_LOG_N, TEMPLATES, TemplateSpec
from ..ring import RingElement

META_KEYS = ("n", "record_s", "bgv_params")


class StoreError(RuntimeError):
    pass


class RWLock:
    """Many readers or one writer; a waiting writer blocks new readers."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._waiting_writers = 0

    @contextlib.contextmanager
    def read(self):
        with self._cond:
            while self._writer or self._waiting_writers:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextlib.contextmanager
    def write(self):
        with self._cond:
            self._waiting_writers += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting_writers -= 1
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


@dataclass(frozen=True)
class ChannelConfig:
    name: str
    log_n: int = 13
    t: int = bgv.DEFAULT_T
    log_q: tuple[int, ...] = bgv.DEFAULT_LOG_Q
    log_p: tuple[int, ...] = bgv.DEFAULT_LOG_P
    default_n: int = 64
    default_record_bytes: int = 128
    template: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "log_q", tuple(self.log_q))
        object.__setattr__(self, "log_p", tuple(self.log_p))
        if self.template is not None and self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")

    @property
    def template_spec(self) -> TemplateSpec:
        if self.template:
            return TEMPLATES[self.template]
        if self.name in TEMPLATES:
            return TEMPLATES[self.name]
        return TEMPLATE_BY_LOG_N.get(self.log_n, TEMPLATES["mini"])

    @property
    def params(self) -> BgvParams:
        return BgvParams(self.log_n, self.t, self.log_q, self.log_p)


DEFAULT_CHANNELS = (
    ChannelConfig("mini", 13, default_n=64, default_record_bytes=128),
    ChannelConfig("mid", 14, default_n=73, default_record_bytes=224),
    ChannelConfig("rich", 15, default_n=128, default_record_bytes=256),
)


def load_config(path: str | os.PathLike) -> list[ChannelConfig]:
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list):
        raise ValueError("channel config must be a JSON list")
    return [ChannelConfig(**entry) for entry in entries]


@dataclass(frozen=True)
class Block:
    sequence: int
    tx_hash: str
    payload_bytes: int
    sha256: str
    timestamp: float
    breakdown: dict = field(default_factory=dict)

    def to_line(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"), sort_keys=True)


def encode_write_set(writes: dict[str, bytes]) -> bytes:
    """Block payload: length-prefixed (key, value) pairs in write order."""
    parts = []
    for key, value in writes.items():
        k = key.encode()
        parts += [len(k).to_bytes(2, "little"), k, len(value).to_bytes(4, "little"), value]
    return b"".join(parts)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class ChannelState:
    def __init__(self, config: ChannelConfig, data_dir: str | os.PathLike | None = None):
        self.config = config
        self.name = config.name
        self.dir = Path(data_dir) / config.name if data_dir is not None else None
        self.world_state: dict[str, bytes] = {}
        self.block_log: list[Block] = []
        self.lock = RWLock()
        self._cache: RingElement | None = None
        self._cache_lock = threading.Lock()

    @property
    def initialized(self) -> bool:
        return all(k in self.world_state for k in ("m_DB", *META_KEYS))

    def params(self) -> BgvParams:
        raw = self.world_state.get("bgv_params")
        if raw is None:
            return self.config.params
        return BgvParams.from_meta(json.loads(raw))

    # submit path ---------------------------------------------------------------

    def commit(self, writes: dict[str, bytes], tx_hash: str, breakdown: dict) -> Block:
        """Replace the world state with ``writes`` and append one block. Caller holds the write lock."""
        payload = encode_write_set(writes)
        block = Block(
            sequence=len(self.block_log) + 1,
            tx_hash=tx_hash,
            payload_bytes=len(payload),
            sha256=hashlib.sha256(payload).hexdigest(),
            timestamp=time.time(),
            breakdown={**breakdown, "overhead": len(payload) - sum(breakdown.values())},
        )
        self.world_state = dict(writes)
        self.block_log.append(block)
        self.drop_cache()
        if self.dir is not None:
            self.persist()
            with open(self.dir / "blocks.log", "a") as fh:
                fh.write(block.to_line() + "\n")
        return block

    # evaluate-side cache -------------------------------------------------------

    def prepared_db(self) -> tuple[RingElement, bool]:
        """m_DB lifted to R_q in the evaluation domain; second item tells whether it was cached."""
        with self._cache_lock:
            if self._cache is not None:
                return self._cache, True
            params = self.params()
            pt = bgv.deserialize(self.world_state["m_DB"], params, expect=bgv.KIND_PT)
            self._cache = bgv.prepare_plaintext(pt)
            return self._cache, False

    def drop_cache(self) -> None:
        with self._cache_lock:
            self._cache = None

    # hashing / footprint -------------------------------------------------------

    def digest(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self.world_state):
            h.update(key.encode() + b"\0" + hashlib.sha256(self.world_state[key]).digest())
        for block in self.block_log:
            h.update(block.to_line().encode())
        return h.hexdigest()

    def state_files(self) -> dict[str, bytes]:
        """World-state files as they are laid out on disk (block log excluded)."""
        if not self.world_state:
            return {}
        meta = {
            "n": self.world_state["n"].decode(),
            "record_s": self.world_state["record_s"].decode(),
            "bgv_params": json.loads(self.world_state["bgv_params"]),
        }
        files = {
            "m_DB.bin": self.world_state["m_DB"],
            "meta.json": json.dumps(meta, separators=(",", ":")).encode(),
        }
        for key in sorted(self.world_state):
            if key.startswith("record") and key != "record_s":
                files[f"records/{key}.json"] = self.world_state[key]
        return files

    def blocks_file(self) -> bytes:
        return "".join(b.to_line() + "\n" for b in self.block_log).encode()

    def footprint(self) -> dict[str, int]:
        files = self.state_files()
        json_bytes = sum(len(v) for k, v in files.items() if k.startswith("records/"))
        if self.dir is not None and self.dir.exists():
            directory = sum(p.stat().st_size for p in self.dir.rglob("*") if p.is_file())
        else:
            directory = sum(len(v) for v in files.values()) + len(self.blocks_file())
        m_db = len(files.get("m_DB.bin", b""))
        metadata = len(files.get("meta.json", b""))
        return {
            "m_db": m_db,
            "metadata": metadata,
            "json": json_bytes,
            "block": self.block_log[-1].payload_bytes if self.block_log else 0,
            "block_overhead": self.block_log[-1].breakdown.get("overhead", 0) if self.block_log else 0,
            "world": directory,
            "world_overhead": directory - m_db - metadata - json_bytes,
        }

    # persistence ---------------------------------------------------------------

    def persist(self) -> None:
        if self.dir is None:
            raise StoreError(f"channel {self.name} has no data directory")
        records_dir = self.dir / "records"
        records_dir.mkdir(parents=True, exist_ok=True)
        files = self.state_files()
        for stale in records_dir.glob("*.json"):
            if f"records/{stale.name}" not in files:
                stale.unlink()
        # meta.json last: it marks the state as complete
        for rel in sorted(files, key=lambda r: r == "meta.json"):
            _atomic_write(self.dir / rel, files[rel])

    def restore(self) -> None:
        """Load world state and block log from disk; raises StoreError naming the bad key."""
        if self.dir is None:
            raise StoreError(f"channel {self.name} has no data directory")
        world: dict[str, bytes] = {}
        meta_path, mdb_path = self.dir / "meta.json", self.dir / "m_DB.bin"
        records = sorted((self.dir / "records").glob("record*.json")) if (self.dir / "records").is_dir() else []
        if meta_path.exists() or mdb_path.exists() or records:
            if not meta_path.exists():
                raise StoreError(f"corrupt store for channel {self.name}: missing keys {list(META_KEYS)} (meta.json)")
            try:
                meta = json.loads(meta_path.read_text())
            except (ValueError, UnicodeDecodeError) as exc:
                raise StoreError(f"corrupt store for channel {self.name}: meta.json unreadable ({exc})") from None
            missing = [k for k in META_KEYS if k not in meta]
            if missing:
                raise StoreError(f"corrupt store for channel {self.name}: missing keys {missing}")
            world["n"] = str(meta["n"]).encode()
            world["record_s"] = str(meta["record_s"]).encode()
            world["bgv_params"] = json.dumps(meta["bgv_params"], separators=(",", ":")).encode()
            try:
                params = BgvParams.from_meta(meta["bgv_params"])
                int(meta["n"]), int(meta["record_s"])
            except (KeyError, TypeError, ValueError) as exc:
                raise StoreError(f"corrupt store for channel {self.name}: bad metadata ({exc})") from None
            if not mdb_path.exists():
                raise StoreError(f"corrupt store for channel {self.name}: missing key 'm_DB' (m_DB.bin)")
            world["m_DB"] = mdb_path.read_bytes()
            try:
                bgv.deserialize(world["m_DB"], params, expect=bgv.KIND_PT)
            except (bgv.SerializationError, bgv.ParamsError) as exc:
                raise StoreError(f"corrupt store for channel {self.name}: key 'm_DB' invalid ({exc})") from None
            for path in records:
                world[path.stem] = path.read_bytes()
        blocks = []
        log_path = self.dir / "blocks.log"
        if log_path.exists():
            for lineno, line in enumerate(log_path.read_text().splitlines(), 1):
                try:
                    blocks.append(Block(**json.loads(line)))
                except (TypeError, ValueError) as exc:
                    raise StoreError(f"corrupt store for channel {self.name}: blocks.log line {lineno} ({exc})") from None
        self.world_state = world
        self.block_log = blocks
        self.drop_cache()
