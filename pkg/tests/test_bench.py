import csv

import numpy as np

import pytest

from pirledger.client import PeerClient
from pirledger.client.bench import TABLES, crypto_times, render_markdown, run_bench
from pirledger.bgv import BgvParams


@pytest.fixture
def tables(live_peer, tmp_path):
    client = PeerClient(live_peer[1])
    return run_bench(client, ["mini", "giant"], reps=2, out_dir=tmp_path / "out", seed=7, linearity=(1, 10)), tmp_path / "out"


def test_bench_structure(tables):
    result, out = tables
    assert set(result) == set(TABLES)
    for name, columns in TABLES.items():
        with open(out / f"{name}.csv") as fh:
            assert tuple(csv.DictReader(fh).fieldnames) == columns
    assert (out / "summary.md").read_text() == render_markdown(result)
    # unknown channels are skipped, not fatal
    assert [r["channel"] for r in result["correctness"]] == ["mini"]


def test_bench_values(tables):
    result, _ = tables
    assert result["correctness"] == [{"channel": "mini", "N": "2^13", "n": 64, "successes": 64, "failures": 0}]
    sizes = result["artifact_sizes"][0]
    assert sizes["ct_q_bytes"] == sizes["ct_r_bytes"] == 131104
    assert [r["variant"] for r in result["crypto_ops"]] == ["cold", "warm"]
    assert [r["variant"] for r in result["chaincode"]] == ["cold", "warm"]
    assert [r["transactions"] for r in result["projection"]] == [100, 1000, 10000]
    assert [r["workflow"] for r in result["end_to_end"]] == ["DW upload", "DR query", "DR query"]
    for row in result["linearity"]:
        assert abs(row["ratio"] - 1) < 0.01


def test_crypto_times_are_positive():
    times = crypto_times(BgvParams.preset(13), 1, cold=True, rng=np.random.default_rng(0))
    assert set(times) == {"KeyGen", "Enc", "Eval", "Dec"} and all(v > 0 for v in times.values())
