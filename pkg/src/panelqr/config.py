"""Run configuration files.

A run configuration is a TOML file with these keys (all tables optional
except ``recipe``)::

    input = "panel.csv"          # relative paths resolve against the file
    output = "out"
    model = "quantile"           # "mean" | "quantile"
    quantiles = [0.2, 0.5, 0.8]  # required iff model = "quantile"

    [recipe]
    response = "scale(tf, 0.001)"
    fixed = ["log(age)", "ihs(income)", "region"]
    random = ["intercept", "ihs(income)"]
    interactions = ["log(age):ihs(income)"]
    categorical = { region = "MW" }

    [prior]                      # defaults shown
    beta0 = 0.0                  # scalar or length-k list
    beta_var = 100.0             # B0 = beta_var * I
    nu0 = 5.0
    D_scale = 10.0               # D0 = D_scale * I
    c0 = 10.0
    d0 = 9.0

    [run]
    iterations = 12000
    burn_in = 3000
    thin = 1
    seed = 0
    include_random_effects = true
    threads = 1

Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, DomainError
from .gibbs import RunConfig
from .panel import CovariateRecipe, PriorSpec

THREADS_ENV = "PANELQR_THREADS"
_TOP = {"input", "output", "model", "quantiles", "recipe", "prior", "run"}
_PRIOR = {"beta0", "beta_var", "nu0", "D_scale", "c0", "d0"}
_RUN = {"iterations", "burn_in", "thin", "seed", "include_random_effects", "threads"}


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    input_path: Path
    recipe: CovariateRecipe
    model: str = "mean"
    quantiles: tuple[float, ...] = ()
    prior: dict = field(default_factory=dict)
    run: RunConfig = field(default_factory=RunConfig)
    output_dir: Path = Path("out")

    def __post_init__(self):
        if self.model not in ("mean", "quantile"):
            raise ConfigError(f"model must be 'mean' or 'quantile', got {self.model!r}")
        if self.model == "quantile" and not self.quantiles:
            raise ConfigError("quantile model needs at least one quantile")
        if self.model == "mean" and self.quantiles:
            raise ConfigError("quantiles are only allowed with model = 'quantile'")
        for p in self.quantiles:
            if not 0 < p < 1:
                raise ConfigError(f"quantile {p} outside (0, 1)")
        if len(set(self.quantiles)) != len(self.quantiles):
            raise ConfigError("duplicate quantiles")
        unknown = set(self.prior) - _PRIOR
        if unknown:
            raise ConfigError(f"unknown prior keys: {sorted(unknown)}")

    def labels(self) -> list[tuple[str, float | None]]:
        if self.model == "mean":
            return [("mean", None)]
        return [(f"p{p:g}", p) for p in self.quantiles]

    def identity(self) -> dict:
        """Everything that determines the draws (no paths, no thread count)."""
        return {
            "input_sha256": file_sha256(self.input_path),
            "recipe": self.recipe.to_dict(),
            "model": self.model,
            "quantiles": list(self.quantiles),
            "prior": dict(sorted(self.prior.items())),
            "run": self.run.to_dict(),
        }

    def sha256(self) -> str:
        text = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        out = self.identity()
        out["input"] = str(self.input_path)
        out["output"] = str(self.output_dir)
        out["run"] = self.run.to_dict(runtime=True)
        out["manifest_sha256"] = self.sha256()
        return out

    def priors_for(self, k: int, l: int) -> PriorSpec:
        pr = self.prior
        beta0 = np.broadcast_to(np.asarray(pr.get("beta0", 0.0), dtype=float), (k,)) \
            if np.ndim(pr.get("beta0", 0.0)) == 0 else np.asarray(pr["beta0"], dtype=float)
        if beta0.shape != (k,):
            raise ConfigError(f"prior beta0 must be a scalar or have length k={k}")
        try:
            return PriorSpec(
                beta0=beta0,
                B0=float(pr.get("beta_var", 100.0)) * np.eye(k),
                nu0=float(pr.get("nu0", 5.0)),
                D0=float(pr.get("D_scale", 10.0)) * np.eye(l),
                c0=float(pr.get("c0", 10.0)),
                d0=float(pr.get("d0", 9.0)),
            )
        except DomainError as exc:
            raise ConfigError(f"invalid prior: {exc}") from exc

    def with_overrides(self, *, model=None, quantiles=None, seed=None, threads=None,
                       include_random_effects=None, output_dir=None, iterations=None,
                       burn_in=None) -> "RunManifest":
        run_kw = {}
        if seed is not None:
            run_kw["seed"] = seed
        if threads is not None:
            run_kw["thread_count"] = threads
        if include_random_effects is not None:
            run_kw["include_random_effects"] = include_random_effects
        if iterations is not None:
            run_kw["iterations"] = iterations
        if burn_in is not None:
            run_kw["burn_in"] = burn_in
        try:
            run = replace(self.run, **run_kw)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        kw = {"run": run}
        if model is not None:
            kw["model"] = model
            if model == "mean" and quantiles is None:
                kw["quantiles"] = ()
        if quantiles is not None:
            kw["quantiles"] = tuple(quantiles)
        if output_dir is not None:
            kw["output_dir"] = Path(output_dir)
        return replace(self, **kw)


def _check_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _typed(table, key, kind, default):
    value = table.get(key, default)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{key} must be an integer")
    if kind is bool and not isinstance(value, bool):
        raise ConfigError(f"{key} must be true or false")
    return value


def load_manifest(path) -> RunManifest:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _check_keys(doc, _TOP, "config")
    if "recipe" not in doc or "input" not in doc:
        raise ConfigError(f"{path}: 'input' and [recipe] are required")
    base = path.parent
    input_path = (base / doc["input"]).resolve()
    if not input_path.is_file():
        raise ConfigError(f"input file {input_path} does not exist")
    run_tbl = doc.get("run", {})
    _check_keys(run_tbl, _RUN, "[run]")
    prior_tbl = doc.get("prior", {})
    _check_keys(prior_tbl, _PRIOR, "[prior]")
    env_threads = os.environ.get(THREADS_ENV)
    threads = _typed(run_tbl, "threads", int, 1)
    if env_threads:
        try:
            threads = int(env_threads)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    try:
        run = RunConfig(
            iterations=_typed(run_tbl, "iterations", int, 12000),
            burn_in=_typed(run_tbl, "burn_in", int, 3000),
            seed=_typed(run_tbl, "seed", int, 0),
            thin=_typed(run_tbl, "thin", int, 1),
            include_random_effects=_typed(run_tbl, "include_random_effects", bool, True),
            thread_count=threads,
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    quantiles = doc.get("quantiles", [])
    if not isinstance(quantiles, list) or not all(isinstance(q, (int, float)) for q in quantiles):
        raise ConfigError("quantiles must be a list of numbers")
    return RunManifest(
        input_path=input_path,
        recipe=CovariateRecipe.from_dict(doc["recipe"]),
        model=doc.get("model", "mean"),
        quantiles=tuple(float(q) for q in quantiles),
        prior=dict(prior_tbl),
        run=run,
        output_dir=(base / doc.get("output", "out")).resolve(),
    )


def render_manifest_toml(input_name: str, recipe: CovariateRecipe, model: str,
                         quantiles=(), run: RunConfig | None = None) -> str:
    """A config file for a generated panel (used by ``simulate``)."""
    run = run or RunConfig()

    def arr(xs):
        return "[" + ", ".join(json.dumps(x) for x in xs) + "]"

    lines = [
        f"input = {json.dumps(input_name)}",
        'output = "out"',
        f"model = {json.dumps(model)}",
    ]
    if model == "quantile":
        lines.append(f"quantiles = {arr(list(quantiles))}")
    lines += [
        "",
        "[recipe]",
        f"response = {json.dumps(recipe.response)}",
        f"fixed = {arr(list(recipe.fixed))}",
        f"random = {arr(list(recipe.random))}",
        "",
        "[run]",
        f"iterations = {run.iterations}",
        f"burn_in = {run.burn_in}",
        f"thin = {run.thin}",
        f"seed = {run.seed}",
        f"include_random_effects = {'true' if run.include_random_effects else 'false'}",
        "",
    ]
    return "\n".join(lines)
