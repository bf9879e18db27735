import json

import numpy as np
import pytest

from lgp.dataset import DataError, load_csv, make_dataset, normalize_continuous, write_csv

SCHEMA = {"columns": {"id": {"kind": "categorical"}, "age": {"kind": "continuous"}}, "response": "y"}


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_small_file(tmp_path):
    p = _write(tmp_path, "id,age,y\n1,10,0.5\n1,20,0.7\n2,10,-0.1\n")
    ds = load_csv(p, SCHEMA)
    assert ds.num_rows == 3
    assert ds.num_covariates == 2
    assert ds.num_individuals == 2
    np.testing.assert_allclose(ds.response, [0.5, 0.7, -0.1])


def test_missing_disease_age_is_masked(tmp_path):
    schema = {"columns": {"id": "categorical", "age": "continuous",
                          "diseaseAge": {"kind": "continuous", "maskable": True}}, "response": "y"}
    p = _write(tmp_path, "id,age,diseaseAge,y\n1,10,-5,0.1\n2,10,,0.2\n2,20,NaN,0.3\n")
    ds = load_csv(p, schema)
    np.testing.assert_array_equal(ds.column("diseaseAge").missing_mask, [False, True, True])


def test_missing_not_allowed_without_maskable(tmp_path):
    p = _write(tmp_path, "id,age,y\n1,,0.5\n2,3,0.1\n")
    with pytest.raises(DataError):
        load_csv(p, SCHEMA)


def test_malformed_response_names_row_and_column(tmp_path):
    p = _write(tmp_path, "id,age,y\n1,10,0.5\n2,20,abc\n")
    with pytest.raises(DataError) as err:
        load_csv(p, SCHEMA)
    msg = str(err.value)
    assert "row 2" in msg and "'y'" in msg


def test_missing_response_is_an_error(tmp_path):
    p = _write(tmp_path, "id,age,y\n1,10,\n2,3,0.1\n")
    with pytest.raises(DataError, match="missing value"):
        load_csv(p, SCHEMA)


def test_unknown_column_and_undeclared_level(tmp_path):
    p = _write(tmp_path, "id,age,y\n1,10,0.5\n2,3,0.1\n")
    with pytest.raises(DataError, match="weight"):
        load_csv(p, {"columns": {"id": "categorical", "weight": "continuous"}, "response": "y"})
    schema = {"columns": {"id": {"kind": "categorical", "levels": ["a", "b"]}, "age": "continuous"},
              "response": "y"}
    p = _write(tmp_path, "id,age,y\nc,10,0.5\na,3,0.1\n")
    with pytest.raises(DataError):
        load_csv(p, schema)


def test_binomial_requires_trials(tmp_path):
    p = _write(tmp_path, "id,age,y\n1,10,3\n2,3,1\n")
    with pytest.raises(DataError, match="trials"):
        load_csv(p, SCHEMA, likelihood="binomial")


def test_levels_follow_first_appearance(tmp_path):
    p = _write(tmp_path, "id,age,y\nb,1,0\na,2,0\nb,3,0\n")
    ds = load_csv(p, SCHEMA)
    col = ds.column("id")
    assert col.levels == ("b", "a")
    np.testing.assert_array_equal(col.values, [1, 2, 1])


def test_csv_round_trip(tmp_path):
    schema = {"columns": {"id": "categorical", "age": "continuous", "sex": "categorical",
                          "diseaseAge": {"kind": "continuous", "maskable": True}}, "response": "y"}
    p = _write(tmp_path, "id,age,sex,diseaseAge,y\n1,10.25,F,-3,0.5\n1,20,F,7,1e-3\n2,10,M,,2\n")
    ds = load_csv(p, schema)
    out = tmp_path / "out.csv"
    write_csv(ds, out)
    again = load_csv(out, schema)
    assert ds.equals(again)


def test_normalize_values():
    ds = make_dataset({"id": [1, 1, 2], "age": [0.0, 10.0, 20.0], "y": [0, 0, 0]}, categorical=["id"])
    nd = normalize_continuous(ds, "age")
    np.testing.assert_allclose(nd.column("age").values, [-1.2247, 0.0, 1.2247], atol=5e-5)
    # raw values remain recoverable
    np.testing.assert_allclose(nd.column("age").inverse(nd.column("age").values), [0, 10, 20])
    again = normalize_continuous(nd, "age")
    np.testing.assert_allclose(again.column("age").values, nd.column("age").values, atol=1e-12)


def test_normalize_constant_column_fails():
    ds = make_dataset({"id": [1, 2], "age": [3.0, 3.0], "y": [0, 0]}, categorical=["id"])
    with pytest.raises(DataError):
        normalize_continuous(ds, "age")


def test_dataset_is_immutable():
    ds = make_dataset({"id": [1, 2], "age": [1.0, 2.0], "y": [0.0, 1.0]}, categorical=["id"])
    with pytest.raises(ValueError):
        ds.response[0] = 5.0
    with pytest.raises(ValueError):
        ds.column("age").values[0] = 5.0


def test_to_dict_round_trip():
    from lgp.dataset import dataset_from_dict

    ds = make_dataset({"id": [1, 2], "age": [1.0, 2.0], "d": [np.nan, 1.0], "y": [0.0, 1.0]},
                      categorical=["id"], maskable=["d"])
    d = json.loads(json.dumps(ds.to_dict()))
    assert dataset_from_dict(d).equals(ds)
