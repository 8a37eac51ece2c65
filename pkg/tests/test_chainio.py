import json

import numpy as np
import pytest

from panelqr.chainio import (MAGIC, chain_to_bytes, read_chain, read_chain_header, read_csv_block,
                             safe_name, write_chain, write_traces)
from panelqr.errors import ChainFormatError
from panelqr.gibbs import RunConfig, run_quantile_gibbs
from panelqr.panel import PanelDataset, PriorSpec


@pytest.fixture(scope="module")
def chain():
    rng = np.random.default_rng(0)
    n, T = 6, 3
    X = np.concatenate([np.ones((n, T, 1)), rng.normal(size=(n, T, 1))], axis=2)
    data = PanelDataset(tuple(f"u{i}" for i in range(n)), rng.normal(size=(n, T)), X, X,
                        ("intercept", "x"), ("intercept", "x"))
    ch = run_quantile_gibbs(data, PriorSpec.default(2, 2), 0.25,
                            RunConfig(iterations=150, burn_in=50, seed=9), store_nu=True)
    from dataclasses import replace
    return replace(ch, provenance={"manifest_sha256": "abc", "label": "p0.25"})


def test_round_trip_is_bitwise(tmp_path, chain):
    path = tmp_path / "chain.bin"
    write_chain(path, chain)
    back = read_chain(path)
    assert back.n_draws == 100
    for key, arr in chain.draws.items():
        assert back.draws[key].tobytes() == np.ascontiguousarray(arr).tobytes()
    assert back.p == 0.25 and back.model == "quantile"
    assert back.config == chain.config
    assert back.ids == chain.ids
    np.testing.assert_array_equal(back.priors.B0, chain.priors.B0)
    assert back.provenance == {"manifest_sha256": "abc", "label": "p0.25"}
    assert chain_to_bytes(back) == path.read_bytes()


def test_header_defaults_and_versions(tmp_path):
    header_cfg = RunConfig().to_dict()
    assert (header_cfg["iterations"], header_cfg["burn_in"]) == (12000, 3000)


def test_header_contents(tmp_path, chain):
    path = tmp_path / "c.bin"
    write_chain(path, chain)
    header = read_chain_header(path)
    assert header["format_version"] == 1
    assert header["provenance"]["config"]["seed"] == 9
    assert "thread_count" not in header["provenance"]["config"]
    assert [c["name"] for c in header["columns"]] == ["beta", "alpha", "Sigma", "h", "nu"]


def test_truncation_and_corruption(tmp_path, chain):
    blob = chain_to_bytes(chain)
    cut = tmp_path / "cut.bin"
    cut.write_bytes(blob[:-8])
    with pytest.raises(ChainFormatError, match="truncated"):
        read_chain(cut)
    cut.write_bytes(blob[: len(MAGIC) + 20])
    with pytest.raises(ChainFormatError, match="truncated header"):
        read_chain(cut)
    flipped = bytearray(blob)
    flipped[-1] ^= 1
    cut.write_bytes(bytes(flipped))
    with pytest.raises(ChainFormatError, match="checksum"):
        read_chain(cut)
    cut.write_bytes(b"not a chain")
    with pytest.raises(ChainFormatError):
        read_chain(cut)


def test_version_mismatch(tmp_path, chain):
    blob = chain_to_bytes(chain)
    start = len(MAGIC)
    end = blob.index(b"\n", start)
    header = json.loads(blob[start:end])
    header["format_version"] = 99
    path = tmp_path / "v.bin"
    path.write_bytes(MAGIC + json.dumps(header).encode() + blob[end:])
    with pytest.raises(ChainFormatError, match="version"):
        read_chain(path)


def test_traces(tmp_path, chain):
    paths = write_traces(tmp_path, chain, "abc")
    names = sorted(p.name for p in paths)
    assert "trace_intercept.csv" in names and "trace_rho_12.csv" in names
    meta, rows = read_csv_block(tmp_path / "trace_x.csv")
    assert meta == {"manifest_sha256": "abc"}
    assert rows[0] == ["iteration", "value"]
    assert len(rows) - 1 == chain.n_draws
    assert rows[1][0] == "51" and rows[-1][0] == "150"
    assert float(rows[1][1]) == chain.draws["beta"][0, 1]
    text = (tmp_path / "trace_x.csv").read_bytes()
    assert b"\r\n" not in text


def test_safe_name():
    assert safe_name("log(age):ihs(income)") == "log_age_ihs_income"
    assert safe_name("region[NE]") == "region_NE"
