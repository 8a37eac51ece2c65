"""Balanced panel datasets, covariate recipes and priors."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DomainError, IngestionError
from .rng import label_key
from .stats import is_spd

INTERCEPT = "intercept"


def ihs(x):
    """Inverse hyperbolic sine, ``log(x + sqrt(x**2 + 1))``."""
    return np.arcsinh(x)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """A balanced panel in stacked form.

    ``y`` has shape ``(n, T)``, ``X`` ``(n, T, k)`` and ``S`` ``(n, T, l)``;
    individual ``i`` occupies ``[i]`` along the first axis and periods are
    sorted ascending along the second.  Arrays are read-only.
    """

    ids: tuple
    y: np.ndarray
    X: np.ndarray
    S: np.ndarray
    fixed_names: tuple[str, ...]
    random_names: tuple[str, ...]
    periods: tuple = ()
    id_keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        S = np.asarray(self.S, dtype=float)
        if y.ndim != 2 or X.ndim != 3 or S.ndim != 3:
            raise IngestionError("expected y (n, T), X (n, T, k), S (n, T, l)")
        n, T = y.shape
        if X.shape[:2] != (n, T) or S.shape[:2] != (n, T):
            raise IngestionError("y, X and S disagree on (n, T)")
        if X.shape[2] < 1:
            raise IngestionError("need at least one fixed-effect column")
        if len(self.ids) != n or len(set(self.ids)) != n:
            raise IngestionError("ids must be unique, one per individual")
        if len(self.fixed_names) != X.shape[2] or len(self.random_names) != S.shape[2]:
            raise IngestionError("column names do not match design widths")
        for arr in (y, X, S):
            if not np.all(np.isfinite(arr)):
                raise IngestionError("design contains missing or non-finite values")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "S", _readonly(S))
        object.__setattr__(self, "fixed_names", tuple(self.fixed_names))
        object.__setattr__(self, "random_names", tuple(self.random_names))
        periods = tuple(self.periods) if self.periods else tuple(range(1, T + 1))
        object.__setattr__(self, "periods", periods)
        keys = np.array([label_key(i) for i in self.ids], dtype=np.uint64)
        object.__setattr__(self, "id_keys", _readonly(keys))

    n = property(lambda self: self.y.shape[0])
    T = property(lambda self: self.y.shape[1])
    k = property(lambda self: self.X.shape[2])
    l = property(lambda self: self.S.shape[2])
    n_obs = property(lambda self: self.y.size)

    def stack(self, i: int):
        """``(y_i, X_i, S_i)`` for the individual at 0-based position ``i``."""
        if not 0 <= i < self.n:
            raise IndexError(f"individual index {i} out of range for n={self.n}")
        return self.y[i], self.X[i], self.S[i]

    def without_random_effects(self) -> "PanelDataset":
        return PanelDataset(self.ids, self.y, self.X, self.S[:, :, :0],
                            self.fixed_names, (), self.periods)

    def to_frame(self) -> pd.DataFrame:
        """Long format, one row per (id, period), fixed columns only."""
        n, T = self.y.shape
        frame = pd.DataFrame({
            "id": np.repeat(np.array(self.ids, dtype=object), T),
            "period": np.tile(np.array(self.periods), n),
            "y": self.y.ravel(),
        })
        for j, name in enumerate(self.fixed_names):
            frame[name] = self.X[:, :, j].ravel()
        return frame


_TERM = re.compile(r"^\s*(?:(log|ihs|scale)\(\s*([^,()]+?)\s*(?:,\s*([^()]+?)\s*)?\)|([^(),:]+?))\s*$")


@dataclass(frozen=True)
class Term:
    column: str
    transform: str = "identity"  # identity | log | ihs | scale
    factor: float = 1.0

    @classmethod
    def parse(cls, text: str) -> "Term":
        m = _TERM.match(text)
        if not m:
            raise ConfigError(f"cannot parse term {text!r}")
        tag, col, arg, bare = m.groups()
        if bare is not None:
            return cls(bare.strip())
        if tag == "scale":
            if arg is None:
                raise ConfigError(f"scale term {text!r} needs a factor, e.g. scale(tf, 0.001)")
            try:
                return cls(col, "scale", float(arg))
            except ValueError:
                raise ConfigError(f"bad scale factor in {text!r}") from None
        if arg is not None:
            raise ConfigError(f"{tag}() takes one argument: {text!r}")
        return cls(col, tag)

    @property
    def name(self) -> str:
        if self.transform == "identity":
            return self.column
        if self.transform == "scale":
            return f"scale({self.column},{self.factor:g})"
        return f"{self.transform}({self.column})"


@dataclass(frozen=True)
class CovariateRecipe:
    """How raw columns become the response and the two designs.

    ``fixed`` and ``response`` are term strings (``age``, ``log(age)``,
    ``ihs(income)``, ``scale(tf, 0.001)``).  A fixed term whose column is
    listed in ``categorical`` expands into indicator columns for every level
    except the omitted one.  ``interactions`` are ``"a:b"`` products of two
    fixed term names, computed after transforms.  ``random`` lists the
    columns of ``S``: ``"intercept"`` or names of fixed terms.
    """

    response: str
    fixed: tuple[str, ...] = ()
    random: tuple[str, ...] = (INTERCEPT,)
    interactions: tuple[str, ...] = ()
    categorical: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, spec: Mapping) -> "CovariateRecipe":
        unknown = set(spec) - {"response", "fixed", "random", "interactions", "categorical"}
        if unknown:
            raise ConfigError(f"unknown recipe keys: {sorted(unknown)}")
        if "response" not in spec:
            raise ConfigError("recipe needs a response")
        return cls(
            response=str(spec["response"]),
            fixed=tuple(spec.get("fixed", ())),
            random=tuple(spec.get("random", (INTERCEPT,))),
            interactions=tuple(spec.get("interactions", ())),
            categorical={str(k): str(v) for k, v in dict(spec.get("categorical", {})).items()},
        )

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "fixed": list(self.fixed),
            "random": list(self.random),
            "interactions": list(self.interactions),
            "categorical": dict(sorted(self.categorical.items())),
        }

    def columns(self) -> set[str]:
        terms = [Term.parse(self.response)] + [Term.parse(t) for t in self.fixed]
        return {t.column for t in terms}


def _apply(term: Term, values: pd.Series, frame: pd.DataFrame) -> np.ndarray:
    x = pd.to_numeric(values, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(x)
    if bad.any():
        row = frame.iloc[int(np.argmax(bad))]
        raise IngestionError(
            f"column {term.column!r} is missing or non-numeric at id={row['id']}, period={row['period']}"
        )
    if term.transform == "log":
        nonpos = x <= 0
        if nonpos.any():
            row = frame.iloc[int(np.argmax(nonpos))]
            raise IngestionError(
                f"log of nonpositive value {x[nonpos][0]:g} in column {term.column!r} "
                f"at id={row['id']}, period={row['period']}"
            )
        return np.log(x)
    if term.transform == "ihs":
        return ihs(x)
    if term.transform == "scale":
        return x * term.factor
    return x


def _check_balanced(frame: pd.DataFrame) -> list:
    if frame[["id", "period"]].isna().any().any():
        raise IngestionError("id and period must not be missing")
    dup = frame.duplicated(["id", "period"])
    if dup.any():
        ids = sorted(map(str, frame.loc[dup, "id"].unique()))
        raise IngestionError(f"duplicate (id, period) rows for ids: {', '.join(ids)}")
    periods = sorted(frame["period"].unique())
    counts = frame.groupby("id", sort=True)["period"].nunique()
    short = counts[counts != len(periods)]
    if len(short):
        raise IngestionError(
            f"unbalanced panel: {len(periods)} periods expected; offending ids: "
            + ", ".join(map(str, short.index[:20]))
        )
    return periods


def build_design(records, recipe: CovariateRecipe) -> PanelDataset:
    """Apply ``recipe`` to raw long-format records.

    ``records`` is a DataFrame (or anything ``pandas.DataFrame`` accepts)
    with ``id`` and ``period`` columns and one row per (id, period).
    """
    frame = pd.DataFrame(records).copy()
    for col in ("id", "period"):
        if col not in frame.columns:
            raise IngestionError(f"required column {col!r} missing")
    missing = sorted(recipe.columns() - set(frame.columns))
    if missing:
        raise ConfigError(f"recipe refers to unknown columns: {missing}")
    for col in recipe.categorical:
        if col not in frame.columns:
            raise ConfigError(f"categorical column {col!r} not in data")
    periods = _check_balanced(frame)
    frame = frame.sort_values(["id", "period"], kind="mergesort").reset_index(drop=True)
    n = frame["id"].nunique()
    T = len(periods)
    if frame.isna().any().any():
        row = frame[frame.isna().any(axis=1)].iloc[0]
        raise IngestionError(f"missing cell at id={row['id']}, period={row['period']}")

    y = _apply(Term.parse(recipe.response), frame[Term.parse(recipe.response).column], frame)

    columns: dict[str, np.ndarray] = {INTERCEPT: np.ones(len(frame))}
    for text in recipe.fixed:
        term = Term.parse(text)
        if term.column in recipe.categorical:
            if term.transform != "identity":
                raise ConfigError(f"categorical column {term.column!r} cannot be transformed")
            omitted = recipe.categorical[term.column]
            values = frame[term.column].astype(str)
            levels = sorted(values.unique())
            if omitted not in levels:
                raise ConfigError(f"omitted category {omitted!r} not present in column {term.column!r}")
            for level in levels:
                if level != omitted:
                    columns[f"{term.column}[{level}]"] = (values == level).to_numpy(dtype=float)
            continue
        if term.name in columns:
            raise ConfigError(f"duplicate fixed term {term.name!r}")
        columns[term.name] = _apply(term, frame[term.column], frame)
    for text in recipe.interactions:
        parts = [p.strip() for p in text.split(":")]
        if len(parts) != 2:
            raise ConfigError(f"interaction {text!r} must be 'a:b'")
        for part in parts:
            if part not in columns or part == INTERCEPT:
                raise ConfigError(f"interaction operand {part!r} is not a fixed term")
        columns[f"{parts[0]}:{parts[1]}"] = columns[parts[0]] * columns[parts[1]]

    for name in recipe.random:
        if name not in columns:
            raise ConfigError(f"random-effect column {name!r} is not declared among the fixed terms")
    if len(set(recipe.random)) != len(recipe.random):
        raise ConfigError("duplicate random-effect columns")

    fixed_names = list(columns)
    X = np.column_stack([columns[c] for c in fixed_names]).reshape(n, T, -1)
    S = np.column_stack([columns[c] for c in recipe.random]).reshape(n, T, -1) if recipe.random \
        else np.zeros((n, T, 0))
    ids = frame["id"].to_numpy()[::T]
    return PanelDataset(
        ids=tuple(ids.tolist()),
        y=y.reshape(n, T),
        X=X,
        S=S,
        fixed_names=tuple(fixed_names),
        random_names=tuple(recipe.random),
        periods=tuple(np.asarray(periods).tolist()),
    )


def read_panel_csv(path) -> pd.DataFrame:
    """Read an ingestion CSV (header row, ``id`` and ``period`` required)."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep=",", decimal=".", encoding="utf-8", keep_default_na=True)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    for col in ("id", "period"):
        if col not in frame.columns:
            raise IngestionError(f"{path}: required column {col!r} missing")
    if frame.isna().any().any():
        row = frame[frame.isna().any(axis=1)].iloc[0]
        raise IngestionError(f"{path}: missing cell at id={row['id']}, period={row['period']}")
    return frame


def panel_from_arrays(X, y, groups, periods=None, *, fit_intercept=True,
                      random_columns: Sequence[int] = (), random_intercept=True,
                      names: Sequence[str] | None = None) -> PanelDataset:
    """Build a panel from flat arrays (one row per observation).

    ``random_columns`` index columns of ``X`` (before the intercept is
    prepended) that carry individual-specific coefficients.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    groups = np.asarray(groups)
    if X.ndim != 2 or len(X) != len(y) or len(groups) != len(y):
        raise IngestionError("X, y and groups must have matching lengths")
    if periods is None:
        # order of appearance within each group
        periods = pd.Series(np.zeros(len(y))).groupby(groups).cumcount().to_numpy() + 1
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    frame = pd.DataFrame(X, columns=names)
    frame["id"] = groups
    frame["period"] = np.asarray(periods)
    frame["__y"] = y
    recipe = CovariateRecipe(
        response="__y",
        fixed=tuple(names),
        random=((INTERCEPT,) if random_intercept else ()) + tuple(names[j] for j in random_columns),
    )
    ds = build_design(frame, recipe)
    if not fit_intercept:
        if random_intercept:
            raise ConfigError("a random intercept requires fit_intercept=True")
        ds = PanelDataset(ds.ids, ds.y, ds.X[:, :, 1:], ds.S, ds.fixed_names[1:],
                          ds.random_names, ds.periods)
    return ds


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Hyperparameters: ``beta ~ N(beta0, B0)``, ``Sigma^-1 ~ W(nu0, D0)``,
    ``h ~ Ga(c0/2, d0/2)``."""

    beta0: np.ndarray
    B0: np.ndarray
    nu0: float
    D0: np.ndarray
    c0: float
    d0: float

    def __post_init__(self):
        beta0 = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        B0 = np.atleast_2d(np.asarray(self.B0, dtype=float))
        D0 = np.asarray(self.D0, dtype=float)
        D0 = np.atleast_2d(D0) if D0.size else np.zeros((0, 0))
        k, l = beta0.size, D0.shape[0]
        if B0.shape != (k, k):
            raise DomainError(f"B0 must be {k}x{k}")
        if not is_spd(B0):
            raise DomainError("B0 must be symmetric positive definite")
        if l and not is_spd(D0):
            raise DomainError("D0 must be symmetric positive definite")
        if l and not self.nu0 > l - 1:
            raise DomainError(f"nu0 must exceed l - 1 = {l - 1}")
        if not (self.c0 > 0 and self.d0 > 0):
            raise DomainError("c0 and d0 must be positive")
        for name, arr in (("beta0", beta0), ("B0", B0), ("D0", D0)):
            object.__setattr__(self, name, _readonly(arr))
        object.__setattr__(self, "nu0", float(self.nu0))
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "d0", float(self.d0))
        object.__setattr__(self, "B0_inv", _readonly(np.linalg.inv(B0)))
        object.__setattr__(self, "D0_inv", _readonly(np.linalg.inv(D0) if l else D0))

    @classmethod
    def default(cls, k: int, l: int, *, beta_var=100.0, nu0=5.0, D_scale=10.0,
                c0=10.0, d0=9.0) -> "PriorSpec":
        return cls(np.zeros(k), beta_var * np.eye(k), nu0, D_scale * np.eye(l), c0, d0)

    @property
    def k(self) -> int:
        return self.beta0.size

    @property
    def l(self) -> int:
        return self.D0.shape[0]

    def restrict(self, l: int) -> "PriorSpec":
        """Same prior with the random-effect block truncated to ``l``."""
        return PriorSpec(self.beta0, self.B0, self.nu0, self.D0[:l, :l], self.c0, self.d0)

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0.tolist(),
            "B0": self.B0.tolist(),
            "nu0": self.nu0,
            "D0": self.D0.tolist(),
            "c0": self.c0,
            "d0": self.d0,
        }

    @classmethod
    def from_dict(cls, spec: Mapping) -> "PriorSpec":
        return cls(spec["beta0"], spec["B0"], spec["nu0"], spec["D0"], spec["c0"], spec["d0"])
