"""pirctl: writer/reader command line for the PIR peer."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import requests

from ..bgv import BgvParams, ParamsError
from ..codec import PirError
from ..peer.state import DEFAULT_CHANNELS
from .bench import DEFAULT_CHANNELS as BENCH_CHANNELS
from .bench import run_bench
from .keystore import Keystore, KeystoreError
from .query import QueryIndexError, layout_from_metadata, private_get
from .transport import PeerClient, PeerError

DEFAULT_PEER = "http://127.0.0.1:7051"
EXIT_OK, EXIT_PEER, EXIT_CLIENT = 0, 1, 2


def _print_meta(meta: dict) -> None:
    p = meta["bgv_params"]
    print(f"n={meta['n']} record_s={meta['record_s']} logN={p['log_n']} N={p['n']} "
          f"logQ={p['log_q']} logP={p['log_p']} T={p['t']}")


def cmd_init(args) -> int:
    client = PeerClient(args.peer)
    records = Path(args.records).read_text() if args.records else ""
    meta = client.init_ledger(args.channel, args.n, args.record_bytes, hint=args.hint or "", records=records)
    _print_meta(meta)
    return EXIT_OK


def cmd_meta(args) -> int:
    meta = PeerClient(args.peer).metadata(args.channel)
    if args.json:
        print(json.dumps(meta))
    else:
        _print_meta(meta)
    return EXIT_OK


def cmd_get(args) -> int:
    client = PeerClient(args.peer)
    keystore = Keystore(args.keys)
    try:
        report = private_get(client, args.channel, args.index, keystore=keystore)
    except QueryIndexError as exc:
        print(f"pirctl: {exc}; no query sent", file=sys.stderr)
        return EXIT_CLIENT
    if args.json:
        print(json.dumps({**report.as_dict(), "record": report.record}))
    else:
        print(report.record)
        print(report.render(), file=sys.stderr)
    return EXIT_OK


def _params_for(args) -> BgvParams:
    if args.peer:
        params, _ = layout_from_metadata(PeerClient(args.peer).metadata(args.channel))
        return params
    for config in DEFAULT_CHANNELS:
        if config.name == args.channel:
            return config.params
    raise KeystoreError(f"channel {args.channel!r} has no local preset; pass --peer to read its parameters")


def cmd_keys(args) -> int:
    keystore = Keystore(args.keys)
    params = _params_for(args)
    if args.action == "generate":
        keystore.generate(params, np.random.default_rng(), force=args.force)
    info = keystore.describe(params)
    if args.action == "show" and not info["present"]:
        print(f"pirctl: no keys for fingerprint {params.fingerprint} in {keystore.root}", file=sys.stderr)
        return EXIT_CLIENT
    for key, value in info.items():
        print(f"{key}: {value}")
    return EXIT_OK


def cmd_bench(args) -> int:
    client = PeerClient(args.peer)
    channels = [c for c in args.channels.split(",") if c]
    tables = run_bench(client, channels, reps=args.reps, out_dir=args.out, parallel=args.parallel, seed=args.seed)
    for row in tables["correctness"]:
        print(f"{row['channel']:<6} {row['N']:<5} {row['successes']}/{row['n']} correct")
    print(f"tables written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pirctl", description="Private reads against a PIR ledger peer.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def peer_arg(p, required=True):
        p.add_argument("--peer", default=DEFAULT_PEER if required else None, help=f"peer URL (default {DEFAULT_PEER})")

    p = sub.add_parser("init", help="submit InitLedger")
    peer_arg(p)
    p.add_argument("--channel", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--record-bytes", type=int, required=True)
    p.add_argument("--records", help="JSON array of records to ingest instead of synthetic ones")
    p.add_argument("--hint", help='parameter hint, e.g. \'{"log_n": 15}\'')
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("get", help="privately retrieve one record")
    peer_arg(p)
    p.add_argument("--channel", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--keys", help="keystore directory (else $PIRCTL_KEYS, else ~/.pirctl/keys)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("meta", help="print channel metadata")
    peer_arg(p)
    p.add_argument("--channel", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_meta)

    p = sub.add_parser("keys", help="manage the local keystore")
    p.add_argument("action", choices=("generate", "show"))
    p.add_argument("--channel", required=True)
    p.add_argument("--keys")
    p.add_argument("--force", action="store_true", help="replace existing keys")
    peer_arg(p, required=False)
    p.set_defaults(func=cmd_keys)

    p = sub.add_parser("bench", help="run the benchmark and write its tables")
    peer_arg(p)
    p.add_argument("--channels", default=",".join(BENCH_CHANNELS))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--out", default="bench-out")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PeerError as exc:
        print(f"pirctl: peer rejected {exc.function}: {exc.detail}", file=sys.stderr)
        return EXIT_PEER
    except requests.RequestException as exc:
        print(f"pirctl: cannot reach peer: {exc}", file=sys.stderr)
        return EXIT_PEER
    except (KeystoreError, PirError, ParamsError, OSError) as exc:
        print(f"pirctl: {exc}", file=sys.stderr)
        return EXIT_CLIENT


if __name__ == "__main__":
    sys.exit(main())
