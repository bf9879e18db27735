"""Longitudinal data containers and CSV/JSON-schema ingestion.

A dataset is a set of typed covariate columns plus a response vector.  Every
array held by a dataset is read-only; transformations return new objects.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
MISSING_TOKENS = ("", "NaN")


class DataError(ValueError):
    """Raised for malformed data files, schemas or inconsistent columns."""


def _frozen(arr, dtype=None) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class CovariateColumn:
    """One covariate of a longitudinal dataset.

    Continuous values are stored as floats with ``nan`` at missing entries.
    Categorical values are integer codes ``1..M``; ``levels[m - 1]`` is the
    label of code ``m``.
    """

    name: str
    kind: str
    values: np.ndarray
    missing_mask: np.ndarray
    num_categories: int = 0
    levels: tuple = ()
    maskable: bool = False
    transform: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise DataError(f"column '{self.name}': unknown kind '{self.kind}'")
        dtype = float if self.kind == CONTINUOUS else int
        vals = np.asarray(self.values, dtype=dtype)
        miss = np.asarray(self.missing_mask, dtype=bool)
        if vals.ndim != 1 or miss.shape != vals.shape:
            raise DataError(f"column '{self.name}': values and mask must be 1-d of equal length")
        if self.kind == CONTINUOUS:
            if not np.all(np.isfinite(vals[~miss])):
                raise DataError(f"column '{self.name}': non-finite observed values")
            if miss.any() and not self.maskable:
                raise DataError(
                    f"column '{self.name}': missing values are only allowed in maskable columns"
                )
            vals = np.where(miss, np.nan, vals)
        else:
            if self.num_categories < 2:
                raise DataError(f"column '{self.name}': categorical needs at least 2 categories")
            if miss.any():
                raise DataError(f"column '{self.name}': categorical columns cannot have missing values")
            if vals.size and (vals.min() < 1 or vals.max() > self.num_categories):
                raise DataError(f"column '{self.name}': category codes outside 1..{self.num_categories}")
            if not self.levels:
                object.__setattr__(self, "levels", tuple(str(m) for m in range(1, self.num_categories + 1)))
            elif len(self.levels) != self.num_categories:
                raise DataError(f"column '{self.name}': levels do not match num_categories")
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "missing_mask", _frozen(miss))
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "transform", tuple(float(t) for t in self.transform))

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS

    def inverse(self, values):
        """Map values from the stored (normalized) scale back to raw units."""
        loc, scale = self.transform
        return np.asarray(values, dtype=float) * scale + loc

    def equals(self, other: "CovariateColumn") -> bool:
        return (
            self.name == other.name
            and self.kind == other.kind
            and self.num_categories == other.num_categories
            and self.levels == other.levels
            and self.maskable == other.maskable
            and np.array_equal(self.missing_mask, other.missing_mask)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    """Covariates, response and per-observation metadata.

    Parameters
    ----------
    columns : sequence of CovariateColumn
        Covariates, all of length ``N``.
    response : array of shape (N,)
        Response values ``y``.
    id_column : str
        Name of the categorical column identifying individuals.
    trials : array of shape (N,), optional
        Number of trials for binomial-type likelihoods.
    scaling_factors : array of shape (N,), optional
        Offsets added to the latent signal on the link scale.  Zero by default.
    response_name : str
        Header name of the response column.
    """

    columns: tuple
    response: np.ndarray
    id_column: str = "id"
    trials: np.ndarray | None = None
    scaling_factors: np.ndarray | None = None
    response_name: str = "y"
    scaling_name: str | None = None
    trials_name: str | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        cols = tuple(self.columns)
        if not cols:
            raise DataError("dataset needs at least one covariate column")
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        n = len(cols[0].values)
        if n < 1:
            raise DataError("dataset needs at least one row")
        for c in cols:
            if len(c.values) != n:
                raise DataError(f"column '{c.name}' has length {len(c.values)}, expected {n}")
        y = np.asarray(self.response, dtype=float)
        if y.shape != (n,):
            raise DataError("response length does not match covariates")
        if not np.all(np.isfinite(y)):
            raise DataError("response has missing or non-finite values")
        index = {c.name: c for c in cols}
        if self.id_column not in index:
            raise DataError(f"id column '{self.id_column}' not found")
        if index[self.id_column].kind != CATEGORICAL:
            raise DataError(f"id column '{self.id_column}' must be categorical")
        trials = None
        if self.trials is not None:
            trials = np.asarray(self.trials, dtype=float)
            if trials.shape != (n,) or np.any(trials < 1) or np.any(trials != np.round(trials)):
                raise DataError("trials must be positive integers, one per row")
            if np.any(y > trials):
                raise DataError("response exceeds number of trials")
            trials = _frozen(trials.astype(int))
        c = np.zeros(n) if self.scaling_factors is None else np.asarray(self.scaling_factors, dtype=float)
        if c.shape != (n,) or not np.all(np.isfinite(c)):
            raise DataError("scaling factors must be finite, one per row")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "response", _frozen(y))
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "scaling_factors", _frozen(c))
        object.__setattr__(self, "_index", index)

    @property
    def num_rows(self) -> int:
        return len(self.response)

    N = num_rows

    @property
    def num_covariates(self) -> int:
        return len(self.columns)

    D = num_covariates

    @property
    def num_individuals(self) -> int:
        return self._index[self.id_column].num_categories

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> CovariateColumn:
        try:
            return self._index[name]
        except KeyError:
            raise DataError(f"unknown column '{name}'") from None

    def __contains__(self, name) -> bool:
        return name in self._index

    @property
    def ids(self) -> np.ndarray:
        return self._index[self.id_column].values

    def with_column(self, col: CovariateColumn) -> "LongitudinalDataset":
        cols = tuple(col if c.name == col.name else c for c in self.columns)
        return replace(self, columns=cols, _index={})

    def with_response(self, response) -> "LongitudinalDataset":
        return replace(self, response=response, _index={})

    def equals(self, other: "LongitudinalDataset") -> bool:
        """Field-by-field equality, treating nan == nan."""
        if self.names != other.names or self.id_column != other.id_column:
            return False
        if not all(a.equals(b) for a, b in zip(self.columns, other.columns)):
            return False
        if (self.trials is None) != (other.trials is None):
            return False
        if self.trials is not None and not np.array_equal(self.trials, other.trials):
            return False
        return (
            np.array_equal(self.response, other.response)
            and np.array_equal(self.scaling_factors, other.scaling_factors)
            and self.response_name == other.response_name
        )

    def to_dict(self) -> dict:
        """JSON-friendly representation, inverse of :func:`dataset_from_dict`."""
        cols = []
        for c in self.columns:
            if c.is_continuous:
                vals = [None if m else float(v) for v, m in zip(c.values, c.missing_mask)]
            else:
                vals = [int(v) for v in c.values]
            cols.append(
                {
                    "name": c.name,
                    "kind": c.kind,
                    "values": vals,
                    "levels": list(c.levels),
                    "maskable": c.maskable,
                    "transform": list(c.transform),
                }
            )
        return {
            "columns": cols,
            "response": self.response.tolist(),
            "response_name": self.response_name,
            "id_column": self.id_column,
            "trials": None if self.trials is None else self.trials.tolist(),
            "trials_name": self.trials_name,
            "scaling_factors": self.scaling_factors.tolist(),
            "scaling_name": self.scaling_name,
        }


def dataset_from_dict(d: Mapping) -> LongitudinalDataset:
    cols = []
    for c in d["columns"]:
        if c["kind"] == CONTINUOUS:
            vals = np.array([np.nan if v is None else v for v in c["values"]], dtype=float)
            cols.append(
                CovariateColumn(c["name"], CONTINUOUS, vals, np.isnan(vals),
                                maskable=c.get("maskable", False),
                                transform=tuple(c.get("transform", (0.0, 1.0))))
            )
        else:
            levels = tuple(c["levels"])
            cols.append(
                CovariateColumn(c["name"], CATEGORICAL, np.array(c["values"], dtype=int),
                                np.zeros(len(c["values"]), bool), num_categories=len(levels),
                                levels=levels)
            )
    return LongitudinalDataset(
        tuple(cols),
        np.array(d["response"], dtype=float),
        id_column=d["id_column"],
        trials=d.get("trials"),
        scaling_factors=d.get("scaling_factors"),
        response_name=d.get("response_name", "y"),
        scaling_name=d.get("scaling_name"),
        trials_name=d.get("trials_name"),
    )


def make_dataset(
    data: Mapping[str, Sequence],
    categorical: Iterable[str] = (),
    response: str = "y",
    id_column: str = "id",
    maskable: Iterable[str] = (),
    trials: str | None = None,
    scaling: str | None = None,
) -> LongitudinalDataset:
    """Build a dataset from a mapping of column name to values.

    Columns listed in ``categorical`` become categorical (levels ordered by
    first appearance); remaining non-special columns are continuous, with
    ``nan``/``None`` marking missing values in ``maskable`` columns.
    """
    categorical = set(categorical)
    maskable = set(maskable)
    special = {response, trials, scaling}
    cols = []
    for name, raw in data.items():
        if name in special:
            continue
        if name in categorical:
            codes, levels = _encode_levels([str(v) for v in raw], None, name)
            cols.append(CovariateColumn(name, CATEGORICAL, codes, np.zeros(len(codes), bool),
                                        num_categories=len(levels), levels=levels))
        else:
            vals = np.array([np.nan if v is None else v for v in raw], dtype=float)
            cols.append(CovariateColumn(name, CONTINUOUS, vals, np.isnan(vals),
                                        maskable=name in maskable))
    return LongitudinalDataset(
        tuple(cols),
        np.asarray(data[response], dtype=float),
        id_column=id_column,
        trials=None if trials is None else data[trials],
        scaling_factors=None if scaling is None else data[scaling],
        response_name=response,
        scaling_name=scaling,
        trials_name=trials,
    )


def _encode_levels(labels, declared, name):
    if declared is not None:
        levels = tuple(str(v) for v in declared)
        lookup = {lv: i + 1 for i, lv in enumerate(levels)}
        codes = []
        for row, lab in enumerate(labels):
            if lab not in lookup:
                raise DataError(f"row {row + 1}, column '{name}': value '{lab}' not among declared levels")
            codes.append(lookup[lab])
        return np.array(codes, dtype=int), levels
    lookup = {}
    codes = []
    for lab in labels:
        if lab not in lookup:
            lookup[lab] = len(lookup) + 1
        codes.append(lookup[lab])
    return np.array(codes, dtype=int), tuple(lookup)


def parse_schema(schema) -> dict:
    """Normalize a schema given as a dict, JSON text, or path to a JSON file."""
    if isinstance(schema, (str, Path)):
        text = str(schema)
        if text.lstrip().startswith("{"):
            schema = json.loads(text)
        else:
            schema = json.loads(Path(schema).read_text(encoding="utf-8"))
    if "columns" not in schema or "response" not in schema:
        raise DataError("schema must define 'columns' and 'response'")
    out = dict(schema)
    cols = {}
    for name, decl in schema["columns"].items():
        if isinstance(decl, str):
            decl = {"kind": decl}
        decl = dict(decl)
        kind = decl.get("kind")
        if kind not in (CONTINUOUS, CATEGORICAL):
            raise DataError(f"schema: column '{name}' has unknown kind '{kind}'")
        cols[name] = decl
    out["columns"] = cols
    out.setdefault("id", "id")
    out.setdefault("trials", None)
    out.setdefault("scaling", None)
    return out


def load_csv(path, schema, likelihood: str | None = None) -> LongitudinalDataset:
    """Read a longitudinal dataset from CSV.

    Parameters
    ----------
    path : path-like
        Comma-separated file with a header row.
    schema : dict, JSON string or path
        ``{"columns": {name: {"kind": ..., ...}}, "response": ..., "id": ...,
        "trials": ..., "scaling": ...}``.  Categorical declarations may carry
        ``levels`` (explicit label order) or ``num_categories``; continuous
        declarations may set ``maskable``.
    likelihood : str, optional
        When binomial-type, a trials column is required.

    Empty cells and the token ``NaN`` are missing values.
    """
    schema = parse_schema(schema)
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty data file") from None
        rows = [r for r in reader if r]
    if len(set(header)) != len(header):
        raise DataError("duplicate header names")
    for r_i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"row {r_i + 1}: expected {len(header)} fields, found {len(r)}")
    raw = {h: [r[k].strip() for r in rows] for k, h in enumerate(header)}

    response = schema["response"]
    trials = schema["trials"]
    scaling = schema["scaling"]
    special = [response] + [s for s in (trials, scaling) if s]
    for name in list(schema["columns"]) + special:
        if name not in raw:
            raise DataError(f"unknown column '{name}': not present in file header")
    for h in header:
        if h not in schema["columns"] and h not in special:
            raise DataError(f"unknown column '{h}': not declared in schema")
    if likelihood in ("binomial", "betabinomial") and not trials:
        raise DataError(f"likelihood '{likelihood}' requires a trials column")

    def numeric(name, allow_missing):
        out = np.empty(len(rows))
        for r_i, tok in enumerate(raw[name]):
            if tok in MISSING_TOKENS:
                if not allow_missing:
                    raise DataError(f"row {r_i + 1}, column '{name}': missing value")
                out[r_i] = np.nan
                continue
            try:
                out[r_i] = float(tok)
            except ValueError:
                raise DataError(f"row {r_i + 1}, column '{name}': cannot parse '{tok}' as a number") from None
            if not math.isfinite(out[r_i]):
                raise DataError(f"row {r_i + 1}, column '{name}': non-finite value '{tok}'")
        return out

    cols = []
    for name, decl in schema["columns"].items():
        if name in special:
            continue
        if decl["kind"] == CONTINUOUS:
            maskable = bool(decl.get("maskable", False))
            vals = numeric(name, maskable)
            cols.append(CovariateColumn(name, CONTINUOUS, vals, np.isnan(vals), maskable=maskable))
        else:
            labels = raw[name]
            for r_i, lab in enumerate(labels):
                if lab in MISSING_TOKENS:
                    raise DataError(f"row {r_i + 1}, column '{name}': missing categorical value")
            codes, levels = _encode_levels(labels, decl.get("levels"), name)
            m = decl.get("num_categories")
            if m is not None and len(levels) > int(m):
                raise DataError(
                    f"column '{name}': {len(levels)} distinct values exceed declared {m} categories"
                )
            m = max(int(m or 0), len(levels))
            if len(levels) < m:
                levels = levels + tuple(f"_unused{k}" for k in range(len(levels) + 1, m + 1))
            cols.append(CovariateColumn(name, CATEGORICAL, codes, np.zeros(len(codes), bool),
                                        num_categories=m, levels=levels))
    return LongitudinalDataset(
        tuple(cols),
        numeric(response, False),
        id_column=schema["id"],
        trials=None if not trials else numeric(trials, False),
        scaling_factors=None if not scaling else numeric(scaling, False),
        response_name=response,
        scaling_name=scaling or None,
        trials_name=trials or None,
    )


def schema_of(ds: LongitudinalDataset) -> dict:
    """Schema that reproduces ``ds`` when its CSV is loaded again."""
    cols = {}
    for c in ds.columns:
        if c.is_continuous:
            cols[c.name] = {"kind": CONTINUOUS, "maskable": c.maskable}
        else:
            cols[c.name] = {"kind": CATEGORICAL, "levels": list(c.levels)}
    return {
        "columns": cols,
        "response": ds.response_name,
        "id": ds.id_column,
        "trials": ds.trials_name if ds.trials is not None else None,
        "scaling": ds.scaling_name,
    }


def write_csv(ds: LongitudinalDataset, path) -> None:
    """Write ``ds`` in the format read by :func:`load_csv` (raw units)."""
    header = ds.names + [ds.response_name]
    extra = []
    if ds.trials is not None:
        extra.append((ds.trials_name or "trials", ds.trials))
    if ds.scaling_name:
        extra.append((ds.scaling_name, ds.scaling_factors))
    header += [name for name, _ in extra]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.num_rows):
            row = []
            for c in ds.columns:
                if c.is_continuous:
                    row.append("" if c.missing_mask[i] else repr(float(c.inverse(c.values[i]))))
                else:
                    row.append(c.levels[c.values[i] - 1])
            row.append(repr(float(ds.response[i])))
            for _, arr in extra:
                row.append(repr(arr[i].item()))
            w.writerow(row)


def standardize(values, missing=None, center: bool = True) -> tuple[float, float]:
    """Location and population standard deviation of the observed values."""
    values = np.asarray(values, dtype=float)
    obs = values if missing is None else values[~np.asarray(missing)]
    if obs.size == 0:
        raise DataError("cannot normalize a column without observed values")
    loc = float(obs.mean()) if center else 0.0
    scale = float(np.sqrt(np.mean((obs - obs.mean()) ** 2)))
    if not scale > 0:
        raise DataError("cannot normalize a zero-variance column")
    return loc, scale


def normalize_continuous(ds: LongitudinalDataset, column: str, center: bool = True) -> LongitudinalDataset:
    """Return a copy of ``ds`` with ``column`` mapped to zero mean, unit variance.

    The transform composes with any earlier one, so ``column.inverse`` keeps
    returning raw units.  With ``center=False`` values are only divided by the
    standard deviation, which keeps ``0`` fixed (useful for event-relative
    times such as disease age).
    """
    col = ds.column(column)
    if not col.is_continuous:
        raise DataError(f"column '{column}' is not continuous")
    loc, scale = standardize(col.values, col.missing_mask, center)
    new_vals = (col.values - loc) / scale
    old_loc, old_scale = col.transform
    new = replace(
        col,
        values=new_vals,
        transform=(old_loc + old_scale * loc, old_scale * scale),
    )
    return ds.with_column(new)
