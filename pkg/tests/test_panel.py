import numpy as np
import pandas as pd
import pytest

from panelqr.errors import ConfigError, DomainError, IngestionError
from panelqr.panel import (CovariateRecipe, PanelDataset, PriorSpec, Term, build_design, ihs,
                           panel_from_arrays, read_panel_csv)


@pytest.fixture
def records():
    rows = []
    for i, region in ((10, "NE"), (11, "MW"), (12, "S")):
        for t in (2001, 2002, 2003):
            rows.append({"id": i, "period": t, "tf": 1000.0 * i + t % 10, "age": 20 + i + t % 10,
                         "income": (t % 10) * 100.0 - 150.0, "region": region})
    return pd.DataFrame(rows)


def test_term_parsing():
    assert Term.parse("age").name == "age"
    assert Term.parse("log( age )").name == "log(age)"
    t = Term.parse("scale(tf, 0.001)")
    assert (t.transform, t.column, t.factor) == ("scale", "tf", 0.001)
    with pytest.raises(ConfigError):
        Term.parse("exp(age)")


def test_build_design_transforms_and_categories(records):
    recipe = CovariateRecipe(
        response="scale(tf, 0.001)", fixed=("log(age)", "ihs(income)", "region"),
        random=("intercept", "ihs(income)"), interactions=("log(age):ihs(income)",),
        categorical={"region": "MW"})
    ds = build_design(records.sample(frac=1, random_state=0), recipe)
    assert ds.fixed_names == ("intercept", "log(age)", "ihs(income)", "region[NE]", "region[S]",
                              "log(age):ihs(income)")
    assert (ds.n, ds.T, ds.k, ds.l) == (3, 3, 6, 2)
    assert ds.ids == (10, 11, 12) and ds.periods == (2001, 2002, 2003)
    y0, X0, S0 = ds.stack(0)
    np.testing.assert_allclose(y0, [10.001, 10.002, 10.003])
    np.testing.assert_allclose(X0[:, 1], np.log([31, 32, 33]))
    np.testing.assert_allclose(X0[:, 2], ihs(np.array([-50.0, 50.0, 150.0])))
    np.testing.assert_allclose(X0[:, 3], 1.0)
    np.testing.assert_allclose(X0[:, 5], X0[:, 1] * X0[:, 2])
    np.testing.assert_array_equal(S0[:, 1], X0[:, 2])
    with pytest.raises(IndexError):
        ds.stack(3)
    assert not ds.y.flags.writeable


def test_unbalanced_panel_names_ids(records):
    with pytest.raises(IngestionError, match="11"):
        build_design(records.drop(index=4), CovariateRecipe(response="tf", fixed=("age",)))


def test_log_of_nonpositive_reports_cell(records):
    records.loc[5, "age"] = 0.0
    with pytest.raises(IngestionError, match=r"id=11, period=2003"):
        build_design(records, CovariateRecipe(response="tf", fixed=("log(age)",)))


def test_recipe_errors(records):
    with pytest.raises(ConfigError, match="unknown columns"):
        build_design(records, CovariateRecipe(response="tf", fixed=("height",)))
    with pytest.raises(ConfigError, match="not declared"):
        build_design(records, CovariateRecipe(response="tf", fixed=("age",), random=("income",)))
    with pytest.raises(ConfigError, match="omitted category"):
        build_design(records, CovariateRecipe(response="tf", fixed=("region",), categorical={"region": "W"}))
    with pytest.raises(ConfigError):
        CovariateRecipe.from_dict({"response": "tf", "weights": "w"})


def test_duplicate_and_missing_cells(records):
    dup = pd.concat([records, records.iloc[[0]]])
    with pytest.raises(IngestionError, match="duplicate"):
        build_design(dup, CovariateRecipe(response="tf"))
    records.loc[2, "income"] = np.nan
    with pytest.raises(IngestionError, match="missing"):
        build_design(records, CovariateRecipe(response="tf", fixed=("income",)))


def test_read_panel_csv(tmp_path, records):
    path = tmp_path / "p.csv"
    records.to_csv(path, index=False)
    frame = read_panel_csv(path)
    assert len(frame) == 9
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(IngestionError, match="id"):
        read_panel_csv(tmp_path / "bad.csv")


def test_panel_from_arrays_round_trip():
    rng = np.random.default_rng(0)
    groups = np.repeat(["b", "a", "c"], 4)
    X = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    ds = panel_from_arrays(X, y, groups, random_columns=(1,))
    assert ds.ids == ("a", "b", "c")
    assert ds.fixed_names == ("intercept", "x0", "x1") and ds.random_names == ("intercept", "x1")
    np.testing.assert_allclose(ds.y[1], y[:4])
    frame = ds.to_frame()
    assert list(frame.columns[:3]) == ["id", "period", "y"]
    with pytest.raises(ConfigError):
        panel_from_arrays(X, y, groups, fit_intercept=False)


def test_dataset_validation():
    with pytest.raises(IngestionError):
        PanelDataset((1, 1), np.zeros((2, 2)), np.ones((2, 2, 1)), np.ones((2, 2, 0)), ("x",), ())
    with pytest.raises(IngestionError):
        PanelDataset((1, 2), np.full((2, 2), np.nan), np.ones((2, 2, 1)), np.ones((2, 2, 0)), ("x",), ())
    ds = PanelDataset((1, 2), np.zeros((2, 2)), np.ones((2, 2, 1)), np.ones((2, 2, 1)), ("x",), ("x",))
    assert ds.without_random_effects().l == 0


def test_prior_spec():
    pr = PriorSpec.default(3, 2)
    assert pr.k == 3 and pr.l == 2
    np.testing.assert_allclose(pr.B0_inv, np.eye(3) / 100)
    np.testing.assert_allclose(pr.D0_inv, np.eye(2) / 10)
    assert (pr.nu0, pr.c0, pr.d0) == (5.0, 10.0, 9.0)
    assert pr.restrict(0).l == 0
    again = PriorSpec.from_dict(pr.to_dict())
    np.testing.assert_array_equal(again.B0, pr.B0)
    with pytest.raises(DomainError):
        PriorSpec(np.zeros(2), -np.eye(2), 5, np.eye(1), 1, 1)
    with pytest.raises(DomainError):
        PriorSpec(np.zeros(2), np.eye(2), 0.5, np.eye(3), 1, 1)
    with pytest.raises(DomainError):
        PriorSpec(np.zeros(2), np.eye(2), 5, np.eye(1), 0, 1)
