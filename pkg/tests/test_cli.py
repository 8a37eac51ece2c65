import json
import shutil
from pathlib import Path

import pytest

from panelqr.chainio import read_chain, read_csv_block
from panelqr.cli import main

SAMPLE = Path(__file__).resolve().parents[1] / "data" / "sample"
SHORT = ["--iterations", "400", "--burn-in", "100"]


@pytest.fixture
def sample(tmp_path):
    for name in ("panel.csv", "run.toml"):
        shutil.copy(SAMPLE / name, tmp_path / name)
    return tmp_path / "run.toml"


def test_fit_quantile_smoke(sample, tmp_path):
    out = tmp_path / "o"
    assert main(["fit", "--model", "quantile", "--p", "0.5", "--config", str(sample), "--out", str(out)] + SHORT) == 0
    meta, rows = read_csv_block(out / "p0.5" / "summary.csv")
    # k = 3 fixed effects, then h and the three Sigma rows (l = 2)
    assert [r[0] for r in rows[1:]] == ["intercept", "x1", "x2", "h", "sqrt_sigma_11", "sqrt_sigma_22", "rho_12"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert meta["manifest_sha256"] == manifest["manifest_sha256"]
    assert manifest["quantiles"] == [0.5]
    chain = read_chain(out / "p0.5" / "chain.bin")
    assert chain.provenance["manifest_sha256"] == manifest["manifest_sha256"]
    _, trace = read_csv_block(out / "p0.5" / "trace_x1.csv")
    assert len(trace) - 1 == chain.n_draws == 300
    _, fit_rows = read_csv_block(out / "p0.5" / "fit.csv")
    assert [r[0] for r in fit_rows[1:4]] == ["log_l", "caic", "cbic"]


def test_fit_same_seed_is_byte_identical(sample, tmp_path):
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["fit", "--config", str(sample), "--p", "0.2", "--seed", "7", "--out", str(out)] + SHORT) == 0
        blobs.append((out / "p0.2" / "chain.bin").read_bytes())
    assert blobs[0] == blobs[1]


def test_summarize_and_manifest_check(sample, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["fit", "--config", str(sample), "--model", "mean", "--out", str(out)] + SHORT) == 0
    first = (out / "mean" / "summary.csv").read_text()
    (out / "mean" / "summary.csv").unlink()
    assert main(["summarize", str(out / "mean" / "chain.bin")]) == 0
    assert (out / "mean" / "summary.csv").read_text() == first
    other = tmp_path / "other"
    assert main(["fit", "--config", str(sample), "--model", "mean", "--seed", "1", "--out", str(other)] + SHORT) == 0
    capsys.readouterr()
    code = main(["summarize", str(out / "mean" / "chain.bin"), "--manifest", str(other / "manifest.json")])
    assert code == 2
    assert capsys.readouterr().err.startswith("ERROR:ManifestMismatchError:")


def test_compare_with_and_without_random_effects(sample, tmp_path):
    w, wo = tmp_path / "w", tmp_path / "wo"
    args = ["fit", "--config", str(sample), "--p", "0.2", "--p", "0.8"] + SHORT
    assert main(args + ["--out", str(w)]) == 0
    assert main(args + ["--no-random-effects", "--out", str(wo)]) == 0
    target = tmp_path / "compare.csv"
    assert main(["compare", str(w), str(wo), "--out", str(target)]) == 0
    meta, rows = read_csv_block(target)
    assert set(meta) == {"with_re_manifest_sha256", "without_re_manifest_sha256"}
    assert rows[0] == ["statistic", "p0.2:with_re", "p0.2:without_re", "p0.8:with_re", "p0.8:without_re"]
    table = {r[0]: [float(v) for v in r[1:]] for r in rows[1:]}
    assert set(table) == {"log_l", "caic", "cbic", "df"}
    assert table["log_l"][0] > table["log_l"][1] and table["log_l"][2] > table["log_l"][3]
    # swapped arguments are rejected
    assert main(["compare", str(wo), str(w), "--out", str(target)]) == 2


def test_simulate_round_trip(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--out", str(out), "--n", "20", "--T", "3", "--model", "quantile", "--p", "0.3"]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert truth["p"] == 0.3 and len(truth["alpha"]) == 20
    assert main(["fit", "--config", str(out / "run.toml"), "--out", str(out / "fit")] + SHORT) == 0
    assert (out / "fit" / "p0.3" / "chain.bin").is_file()


@pytest.mark.parametrize("argv,code,cls", [
    ([], 1, "UsageError"),
    (["fit"], 1, "UsageError"),
    (["fit", "--config", "missing.toml"], 1, "ConfigError"),
    (["summarize", "missing.bin"], 2, "ChainFormatError"),
    (["simulate", "--out", "x", "--l", "9"], 1, "ConfigError"),
])
def test_exit_codes(argv, code, cls, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code
    assert capsys.readouterr().err.startswith(f"ERROR:{cls}:")


def test_data_error_exit_code(sample, capsys):
    panel = sample.parent / "panel.csv"
    lines = panel.read_text().splitlines()
    panel.write_text("\n".join(lines[:-1]) + "\n")
    assert main(["fit", "--config", str(sample)] + SHORT) == 2
    err = capsys.readouterr().err
    assert err.startswith("ERROR:IngestionError:") and "unbalanced" in err


def test_numerical_error_exit_code(sample, capsys, monkeypatch):
    from panelqr import cli
    from panelqr.errors import SingularMatrixError

    def boom(*args, **kwargs):
        raise SingularMatrixError("Omega_i for block 3 is not positive definite", index=3, sweep=5)

    monkeypatch.setattr(cli, "run_quantile_gibbs", boom)
    assert main(["fit", "--config", str(sample), "--p", "0.5"] + SHORT) == 3
    assert capsys.readouterr().err.startswith("ERROR:SingularMatrixError:")
