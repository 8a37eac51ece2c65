"""Command-line front end: ``panelqr {fit,simulate,summarize,compare}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data, chain or
manifest error, 3 numerical failure.  Errors go to stderr as
``ERROR:<class>:<message>``.

Output of ``fit`` (one subdirectory per chain, ``mean`` or ``p<level>``)::

    OUT/manifest.json
    OUT/<label>/chain.bin
    OUT/<label>/summary.csv    parameter,mean,std
    OUT/<label>/fit.csv        statistic,value
    OUT/<label>/trace_<param>.csv   iteration,value
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .chainio import (atomic_write, fit_csv, read_chain, read_csv_block, summary_csv,
                      write_chain, write_traces)
from .config import load_manifest, render_manifest_toml
from .errors import (ConfigError, DomainError, IngestionError,
                     ManifestMismatchError, PanelQRError, SingularMatrixError)
from .fit import fit_report, summarize
from .gibbs import RunConfig, run_mean_gibbs, run_quantile_gibbs
from .panel import INTERCEPT, CovariateRecipe, build_design, read_panel_csv
from .synthetic import TruthSpec, gen_mean_panel, gen_quant_panel

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="panelqr", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"panelqr {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="run the sampler(s) described by a config file")
    f.add_argument("--config", required=True, type=Path)
    f.add_argument("--model", choices=("mean", "quantile"))
    f.add_argument("--p", type=float, action="append", help="quantile level (repeatable)")
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=int)
    f.add_argument("--no-random-effects", action="store_true")
    f.add_argument("--out", type=Path)
    f.add_argument("--iterations", type=int)
    f.add_argument("--burn-in", type=int)

    s = sub.add_parser("simulate", help="write a synthetic panel with known truth")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--model", choices=("mean", "quantile"), default="mean",
                   help="error law: Gaussian (mean) or asymmetric Laplace (quantile)")
    s.add_argument("--p", type=float, default=0.5, help="AL quantile level for --model quantile")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--T", type=int, default=6)
    s.add_argument("--beta", type=float, nargs="+", default=[1.0, 0.5, -0.5])
    s.add_argument("--l", type=int, default=2, help="random effects on the first l columns")
    s.add_argument("--sigma", type=float, default=0.5, help="random-effect standard deviation")
    s.add_argument("--h", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)

    m = sub.add_parser("summarize", help="recompute summary.csv from a stored chain")
    m.add_argument("chain", type=Path)
    m.add_argument("--manifest", type=Path,
                   help="manifest.json written by fit (default: next to the chain's directory)")
    m.add_argument("--out", type=Path, help="output directory (default: the chain's directory)")

    c = sub.add_parser("compare", help="tabulate fit statistics of a with-RE and a no-RE run")
    c.add_argument("with_re", type=Path)
    c.add_argument("without_re", type=Path)
    c.add_argument("--out", type=Path, default=Path("compare.csv"))
    return ap


# ---------------------------------------------------------------------------
# fit


def _fit_one(label, p, data, priors, run: RunConfig, manifest_hash, out: Path):
    if p is None:
        chain = run_mean_gibbs(data, priors, run)
    else:
        chain = run_quantile_gibbs(data, priors, p, run)
    chain = replace(chain, provenance={"manifest_sha256": manifest_hash, "label": label})
    target = out / label
    write_chain(target / "chain.bin", chain)
    atomic_write(target / "summary.csv", summary_csv(summarize(chain), manifest_hash))
    atomic_write(target / "fit.csv", fit_csv(fit_report(chain, data), manifest_hash))
    write_traces(target, chain, manifest_hash)
    return label


def cmd_fit(args) -> int:
    manifest = load_manifest(args.config)
    if args.p and args.model is None:
        args.model = "quantile"
    manifest = manifest.with_overrides(
        model=args.model, quantiles=args.p, seed=args.seed, threads=args.threads,
        include_random_effects=False if args.no_random_effects else None,
        output_dir=args.out, iterations=args.iterations, burn_in=args.burn_in,
    )
    data = build_design(read_panel_csv(manifest.input_path), manifest.recipe)
    priors = manifest.priors_for(data.k, data.l)
    digest = manifest.sha256()
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "manifest.json", json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    labels = manifest.labels()
    workers = max(1, min(manifest.run.thread_count, len(labels)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_fit_one, label, p, data, priors, manifest.run, digest, out)
                   for label, p in labels]
        for fut in futures:
            print(f"wrote {out / fut.result()}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    beta = np.asarray(args.beta, dtype=float)
    k = beta.size
    if not 0 <= args.l <= k:
        raise ConfigError(f"--l must lie in [0, {k}]")
    if args.sigma <= 0:
        raise ConfigError("--sigma must be positive")
    truth = TruthSpec(beta=beta, Sigma=args.sigma**2 * np.eye(args.l), h=args.h, n=args.n, T=args.T,
                      p=args.p if args.model == "quantile" else None)
    rng = np.random.default_rng(args.seed)
    data, echo = (gen_quant_panel if args.model == "quantile" else gen_mean_panel)(truth, rng)
    frame = data.to_frame().rename(columns={INTERCEPT: "_drop"}).drop(columns="_drop")
    out = args.out
    atomic_write(out / "panel.csv", frame.to_csv(index=False, lineterminator="\n", float_format="%.17g"))
    truth_doc = {**echo["truth"], "seed": args.seed, "alpha": echo["alpha"].tolist(),
                 "fixed_names": list(data.fixed_names), "random_names": list(data.random_names)}
    atomic_write(out / "truth.json", json.dumps(truth_doc, indent=2) + "\n")
    recipe = CovariateRecipe(response="y", fixed=tuple(data.fixed_names[1:]),
                             random=tuple(data.random_names))
    toml = render_manifest_toml("panel.csv", recipe, "quantile" if args.model == "quantile" else "mean",
                                quantiles=[args.p] if args.model == "quantile" else ())
    atomic_write(out / "run.toml", toml)
    print(f"wrote {out / 'panel.csv'}, {out / 'truth.json'}, {out / 'run.toml'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# summarize


def _manifest_hash_of(path: Path) -> tuple[str, dict | None]:
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        if "manifest_sha256" not in doc:
            raise ConfigError(f"{path} has no manifest_sha256")
        return doc["manifest_sha256"], doc
    manifest = load_manifest(path)
    return manifest.sha256(), manifest.to_dict()


def cmd_summarize(args) -> int:
    chain = read_chain(args.chain)
    stored = chain.provenance.get("manifest_sha256")
    manifest_path = args.manifest or args.chain.resolve().parent.parent / "manifest.json"
    if args.manifest is not None or manifest_path.is_file():
        expected, _ = _manifest_hash_of(manifest_path)
        if stored != expected:
            raise ManifestMismatchError(
                f"chain {args.chain} was produced under manifest {stored}, "
                f"but {manifest_path} has hash {expected}"
            )
    out = args.out or args.chain.resolve().parent
    atomic_write(out / "summary.csv", summary_csv(summarize(chain), stored))
    write_traces(out, chain, stored)
    print(f"wrote {out / 'summary.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def _run_dir(path: Path):
    manifest_file = path / "manifest.json"
    if not manifest_file.is_file():
        raise IngestionError(f"{path} is not a fit output directory (no manifest.json)")
    doc = json.loads(manifest_file.read_text(encoding="utf-8"))
    fits = {}
    for sub in sorted(p for p in path.iterdir() if (p / "fit.csv").is_file()):
        meta, rows = read_csv_block(sub / "fit.csv")
        if meta.get("manifest_sha256") != doc["manifest_sha256"]:
            raise ManifestMismatchError(f"{sub / 'fit.csv'} does not belong to {manifest_file}")
        fits[sub.name] = {r[0]: r[1] for r in rows[1:]}
    if not fits:
        raise IngestionError(f"{path} holds no fitted chains")
    return doc, fits


def cmd_compare(args) -> int:
    doc_with, fits_with = _run_dir(args.with_re)
    doc_without, fits_without = _run_dir(args.without_re)
    if doc_with["input_sha256"] != doc_without["input_sha256"]:
        raise IngestionError("the two runs were fitted to different input files")
    if not doc_with["run"]["include_random_effects"]:
        raise IngestionError(f"{args.with_re} was fitted without random effects")
    if doc_without["run"]["include_random_effects"]:
        raise IngestionError(f"{args.without_re} was fitted with random effects")
    labels = [lab for lab in fits_with if lab in fits_without]
    if not labels:
        raise IngestionError("the two runs share no model labels")
    header = ["statistic"]
    for lab in labels:
        header += [f"{lab}:with_re", f"{lab}:without_re"]
    lines = [
        f"# with_re_manifest_sha256={doc_with['manifest_sha256']}",
        f"# without_re_manifest_sha256={doc_without['manifest_sha256']}",
        ",".join(header),
    ]
    for stat in ("log_l", "caic", "cbic", "df"):
        row = [stat]
        for lab in labels:
            row += [fits_with[lab][stat], fits_without[lab][stat]]
        lines.append(",".join(row))
    atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


_COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "summarize": cmd_summarize, "compare": cmd_compare}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (SingularMatrixError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (UsageError, ConfigError, DomainError)):
        return EXIT_USAGE
    return EXIT_DATA


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except (UsageError, PanelQRError, OSError, ArithmeticError, ValueError, KeyError) as exc:
        # ChainFormatError and IngestionError land on EXIT_DATA
        name = type(exc).__name__
        msg = str(exc).replace("\n", " ")
        print(f"ERROR:{name}:{msg}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
