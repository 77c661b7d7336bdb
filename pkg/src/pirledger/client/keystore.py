"""Client-side key storage, one subdirectory per parameter fingerprint."""

from __future__ import annotations

import json
import os
from pathlib import Path

import filelock

from .. import bgv
from ..bgv import BgvParams, PublicKey, SecretKey

ENV_VAR = "PIRCTL_KEYS"


class KeystoreError(RuntimeError):
    pass


def default_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".pirctl" / "keys"


class Keystore:
    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else default_dir()
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = filelock.FileLock(str(self.root / ".lock"))

    def slot(self, params: BgvParams) -> Path:
        return self.root / params.fingerprint

    def paths(self, params: BgvParams) -> dict[str, Path]:
        d = self.slot(params)
        return {"pk": d / "pk.bin", "sk": d / "sk.bin", "params": d / "params.json"}

    def exists(self, params: BgvParams) -> bool:
        p = self.paths(params)
        return p["pk"].exists() and p["sk"].exists()

    def load(self, params: BgvParams) -> tuple[PublicKey, SecretKey] | None:
        with self._lock:
            if not self.exists(params):
                return None
            p = self.paths(params)
            try:
                pk = bgv.deserialize(p["pk"].read_bytes(), params, expect=bgv.KIND_PK)
                sk = bgv.deserialize(p["sk"].read_bytes(), params, expect=bgv.KIND_SK)
            except (bgv.SerializationError, bgv.ParamsError) as exc:
                raise KeystoreError(f"stored keys under {self.slot(params)} are unreadable: {exc}") from None
            return pk, sk

    def store(self, pk: PublicKey, sk: SecretKey, force: bool = False) -> dict[str, Path]:
        params = pk.params
        with self._lock:
            if self.exists(params) and not force:
                raise KeystoreError(f"keys for fingerprint {params.fingerprint} already exist (use --force to replace)")
            slot = self.slot(params)
            slot.mkdir(parents=True, exist_ok=True)
            p = self.paths(params)
            _write(p["pk"], bgv.serialize(pk), 0o644)
            _write(p["sk"], bgv.serialize(sk), 0o600)
            meta = {**params.meta(), "fingerprint": params.fingerprint}
            _write(p["params"], json.dumps(meta, indent=1).encode(), 0o644)
            return p

    def generate(self, params: BgvParams, rng, force: bool = False) -> tuple[PublicKey, SecretKey]:
        if self.exists(params) and not force:
            raise KeystoreError(f"keys for fingerprint {params.fingerprint} already exist (use --force to replace)")
        pk, sk = bgv.keygen(params, rng)
        self.store(pk, sk, force=force)
        return pk, sk

    def describe(self, params: BgvParams) -> dict:
        p = self.paths(params)
        info = {"fingerprint": params.fingerprint, "dir": str(self.slot(params)), "present": self.exists(params)}
        for name in ("pk", "sk"):
            if p[name].exists():
                st = p[name].stat()
                info[f"{name}_bytes"] = st.st_size
                info[f"{name}_mode"] = oct(st.st_mode & 0o777)
        return info


def _write(path: Path, data: bytes, mode: int) -> None:
    tmp = path.with_name(path.name + ".tmp")
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, mode)
    with os.fdopen(fd, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.chmod(tmp, mode)
    os.replace(tmp, path)
