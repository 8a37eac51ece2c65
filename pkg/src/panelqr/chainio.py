"""Chain files and CSV emitters.

Chain file layout (``chain.bin``)::

    PANELQR-CHAIN\\n
    <header: one line of UTF-8 JSON, keys sorted>\\n
    <payload: the columns listed in the header, little-endian float64,
     C order, concatenated at the listed byte offsets>

The header carries ``format_version``, ``columns`` (``name``, ``shape``,
``offset``, ``nbytes``), ``payload_bytes``, ``payload_sha256`` and
``provenance`` (model, quantile, run settings, priors, design labels,
acceptance rates, code version and the run-manifest hash).  Thread count
and wall-clock times are deliberately absent so that equal inputs give
byte-identical files.

CSV files use ``,`` separators, ``.`` decimals, ``\\n`` line endings and
start with ``# manifest_sha256=<hash>`` comment lines.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ChainFormatError
from .fit import FitReport, SummaryTable, chain_columns
from .gibbs import ChainResult, RunConfig
from .panel import PriorSpec

MAGIC = b"PANELQR-CHAIN\n"
FORMAT_VERSION = 1
_COLUMNS = ("beta", "alpha", "Sigma", "h", "nu")


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable_ids(ids):
    return [i.item() if isinstance(i, np.generic) else i for i in ids]


def chain_to_bytes(chain: ChainResult) -> bytes:
    columns, blobs, offset = [], [], 0
    for name in _COLUMNS:
        if name not in chain.draws:
            continue
        arr = np.ascontiguousarray(chain.draws[name], dtype="<f8")
        blob = arr.tobytes(order="C")
        columns.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    header = {
        "format_version": FORMAT_VERSION,
        "dtype": "<f8",
        "columns": columns,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "provenance": {
            "model": chain.model,
            "p": chain.p,
            "config": chain.config.to_dict(),
            "priors": chain.priors.to_dict(),
            "fixed_names": list(chain.fixed_names),
            "random_names": list(chain.random_names),
            "ids": _jsonable_ids(chain.ids),
            "acceptance": dict(sorted(chain.acceptance.items())),
            "code_version": __version__,
            **{k: v for k, v in sorted(chain.provenance.items())},
        },
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return MAGIC + text.encode("utf-8") + b"\n" + payload


def write_chain(path, chain: ChainResult) -> None:
    atomic_write(path, chain_to_bytes(chain))


def read_chain_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ChainFormatError(f"{path}: not a chain file")
        line = fh.readline()
    if not line.endswith(b"\n"):
        raise ChainFormatError(f"{path}: truncated header")
    try:
        header = json.loads(line)
    except ValueError as exc:
        raise ChainFormatError(f"{path}: corrupt header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ChainFormatError(
            f"{path}: chain format version {header.get('format_version')!r}, "
            f"this build reads version {FORMAT_VERSION}"
        )
    return header


def read_chain(path) -> ChainResult:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ChainFormatError(f"cannot read {path}: {exc}") from exc
    header = read_chain_header(path)
    start = raw.index(b"\n", len(MAGIC)) + 1
    payload = raw[start:]
    if len(payload) != header["payload_bytes"]:
        raise ChainFormatError(
            f"{path}: payload has {len(payload)} bytes, header promises {header['payload_bytes']} (truncated?)"
        )
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ChainFormatError(f"{path}: payload checksum mismatch")
    draws = {}
    for col in header["columns"]:
        buf = payload[col["offset"]: col["offset"] + col["nbytes"]]
        arr = np.frombuffer(buf, dtype="<f8").reshape(col["shape"]).astype(np.float64)
        arr.setflags(write=False)
        draws[col["name"]] = arr
    prov = dict(header["provenance"])
    known = {"model", "p", "config", "priors", "fixed_names", "random_names", "ids", "acceptance", "code_version"}
    return ChainResult(
        model=prov["model"],
        p=prov["p"],
        draws=draws,
        config=RunConfig(**prov["config"]),
        priors=PriorSpec.from_dict(prov["priors"]),
        fixed_names=tuple(prov["fixed_names"]),
        random_names=tuple(prov["random_names"]),
        ids=tuple(prov["ids"]),
        acceptance=prov["acceptance"],
        provenance={k: v for k, v in prov.items() if k not in known},
    )


def _csv_head(manifest_hash: str | None) -> str:
    return f"# manifest_sha256={manifest_hash}\n" if manifest_hash else ""


def summary_csv(table: SummaryTable, manifest_hash: str | None = None) -> str:
    return _csv_head(manifest_hash) + table.to_csv()


def fit_csv(report: FitReport, manifest_hash: str | None = None) -> str:
    return _csv_head(manifest_hash) + report.to_csv()


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "param"


def write_traces(directory, chain: ChainResult, manifest_hash: str | None = None) -> list[Path]:
    """One ``trace_<param>.csv`` (``iteration,value``) per reported parameter."""
    directory = Path(directory)
    cfg = chain.config
    iterations = cfg.burn_in + cfg.thin * np.arange(chain.n_draws) + 1
    paths = []
    for name, values in chain_columns(chain).items():
        lines = [_csv_head(manifest_hash), "iteration,value\n"]
        lines += [f"{int(it)},{float(v)!r}\n" for it, v in zip(iterations, values)]
        path = directory / f"trace_{safe_name(name)}.csv"
        atomic_write(path, "".join(lines))
        paths.append(path)
    return paths


def read_csv_block(path) -> tuple[dict, list[list[str]]]:
    """Comment metadata and data rows (header included) of an emitted CSV."""
    meta, rows = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line:
            rows.append(line.split(","))
    return meta, rows
