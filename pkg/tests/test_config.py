import shutil
from pathlib import Path

import numpy as np
import pytest

from panelqr.config import THREADS_ENV, load_manifest
from panelqr.errors import ConfigError

SAMPLE = Path(__file__).resolve().parents[1] / "data" / "sample"


@pytest.fixture
def workdir(tmp_path):
    shutil.copy(SAMPLE / "panel.csv", tmp_path / "panel.csv")
    return tmp_path


def _write(dirpath, body):
    path = dirpath / "run.toml"
    path.write_text(body)
    return path


BASE = """input = "panel.csv"
model = "quantile"
quantiles = [0.2, 0.8]
[recipe]
response = "y"
fixed = ["x1", "x2"]
random = ["intercept"]
"""


def test_sample_manifest_loads():
    m = load_manifest(SAMPLE / "run.toml")
    assert m.model == "quantile" and m.quantiles == (0.2, 0.5, 0.8)
    assert m.run.iterations == 12000 and m.run.burn_in == 3000
    assert [lab for lab, _ in m.labels()] == ["p0.2", "p0.5", "p0.8"]
    assert m.input_path.is_absolute()


def test_hash_ignores_threads_and_output(workdir, monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    m = load_manifest(_write(workdir, BASE))
    other = m.with_overrides(threads=8, output_dir=workdir / "elsewhere")
    assert other.sha256() == m.sha256()
    assert m.with_overrides(seed=3).sha256() != m.sha256()
    assert m.with_overrides(include_random_effects=False).sha256() != m.sha256()


def test_hash_tracks_input_bytes(workdir):
    m = load_manifest(_write(workdir, BASE))
    before = m.sha256()
    with open(workdir / "panel.csv", "a") as fh:
        fh.write("\n")
    assert m.sha256() != before


def test_thread_precedence(workdir, monkeypatch):
    path = _write(workdir, BASE + "[run]\nthreads = 2\n")
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert load_manifest(path).run.thread_count == 2
    monkeypatch.setenv(THREADS_ENV, "3")
    m = load_manifest(path)
    assert m.run.thread_count == 3
    assert m.with_overrides(threads=5).run.thread_count == 5
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        load_manifest(path)


def test_priors_from_config(workdir):
    m = load_manifest(_write(workdir, BASE + "[prior]\nbeta0 = [1.0, 2.0, 3.0]\nbeta_var = 4.0\nc0 = 2.0\n"))
    pr = m.priors_for(3, 1)
    np.testing.assert_array_equal(pr.beta0, [1, 2, 3])
    np.testing.assert_array_equal(pr.B0, 4 * np.eye(3))
    assert pr.c0 == 2.0 and pr.d0 == 9.0
    with pytest.raises(ConfigError):
        m.priors_for(2, 1)
    bad = load_manifest(_write(workdir, BASE + "[prior]\nnu0 = 0.1\n"))
    with pytest.raises(ConfigError):
        bad.priors_for(3, 2)


@pytest.mark.parametrize("body,match", [
    ("colour = 1\n" + BASE, "unknown keys"),
    (BASE + "colour = 1\n", "unknown recipe keys"),
    (BASE + "[run]\nsweeps = 3\n", "unknown keys"),
    (BASE + "[prior]\nscale = 3\n", "unknown keys"),
    (BASE + "[run]\niterations = 10\nburn_in = 20\n", "burn_in"),
    (BASE + "[run]\niterations = 1.5\n", "integer"),
    (BASE.replace("[0.2, 0.8]", "[0.2, 1.2]"), "outside"),
    (BASE.replace("[0.2, 0.8]", "[]"), "at least one"),
    (BASE.replace('model = "quantile"', 'model = "mean"'), "only allowed"),
    (BASE.replace("panel.csv", "missing.csv"), "does not exist"),
    ("input = \n", "run.toml"),
])
def test_config_errors(workdir, body, match):
    with pytest.raises(ConfigError, match=match):
        load_manifest(_write(workdir, body))
