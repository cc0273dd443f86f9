"""CSV cohort files and JSON data dictionaries."""
from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from ..exceptions import CohortParseError, DegenerateTableError, SchemaError
from .schema import FEATURE_CATALOG, LABEL_SOURCES, PHENOTYPES, CohortTable, FeatureSchema

FIXED_COLUMNS = ("id", "age", "sex", "race")
_LABEL_RE = re.compile(r"^label_(.+)_(heuristic|dx)$")

PathLike = Union[str, Path]


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def save_cohort(table: CohortTable, path: PathLike) -> Path:
    path = Path(path)
    label_keys = [(ph, src) for ph in PHENOTYPES for src in LABEL_SOURCES if (ph, src) in table.labels]
    label_keys += sorted(k for k in table.labels if k not in label_keys)
    header = list(FIXED_COLUMNS) + list(table.schema.names)
    header += [f"label_{ph}_{src}" for ph, src in label_keys]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(table.n_rows):
            row = [table.ids[i], _fmt(table.age[i]), table.sex[i], table.race[i]]
            row += [_fmt(v) for v in table.values[i]]
            row += ["1" if table.labels[k][i] else "0" for k in label_keys]
            w.writerow(row)
    return path


def _parse_float(text: str, line: int, column: str) -> float:
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise CohortParseError(f"column {column!r}: {text!r} is not a number", line) from None


_BOOL = {"1": True, "0": False, "true": True, "false": False}


def load_cohort(path: PathLike, dictionary: Optional[Mapping[str, str]] = None) -> CohortTable:
    """Read a cohort CSV written by :func:`save_cohort`.

    Feature columns must be known to ``dictionary`` (name -> description),
    or to the built-in feature catalog when no dictionary is given.
    """
    path = Path(path)
    if dictionary is None:
        known = {e.name: e for e in FEATURE_CATALOG}
        describe = lambda name: known[name]  # noqa: E731
    else:
        schema_all = FeatureSchema.from_dictionary(dictionary)
        known = {e.name: e for e in schema_all.entries}
        describe = lambda name: known[name]  # noqa: E731

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortParseError("file is empty", 1) from None
        except csv.Error as exc:
            raise CohortParseError(str(exc), 1) from None
        for col in FIXED_COLUMNS:
            if col not in header:
                raise CohortParseError(f"missing required column {col!r}", 1)
        if len(set(header)) != len(header):
            raise CohortParseError("duplicate column names in header", 1)
        features, labels = [], []
        for col in header:
            if col in FIXED_COLUMNS:
                continue
            m = _LABEL_RE.match(col)
            if m and m.group(1) in PHENOTYPES:
                labels.append((col, (m.group(1), m.group(2))))
            elif col in known:
                features.append(col)
            else:
                raise CohortParseError(f"unknown column {col!r} (not in the data dictionary)", 1)
        pos = {c: i for i, c in enumerate(header)}
        ids, age, sex, race, rows = [], [], [], [], []
        label_vals: Dict[tuple, list] = {key: [] for _, key in labels}
        try:
            for row in reader:
                line = reader.line_num
                if not row:
                    continue
                if len(row) != len(header):
                    raise CohortParseError(f"expected {len(header)} fields, found {len(row)}", line)
                ids.append(row[pos["id"]])
                age.append(_parse_float(row[pos["age"]], line, "age"))
                sex.append(row[pos["sex"]])
                race.append(row[pos["race"]])
                rows.append([_parse_float(row[pos[c]], line, c) for c in features])
                for col, key in labels:
                    text = row[pos[col]].strip().lower()
                    if text not in _BOOL:
                        raise CohortParseError(f"column {col!r}: {row[pos[col]]!r} is not a 0/1 label", line)
                    label_vals[key].append(_BOOL[text])
        except csv.Error as exc:
            raise CohortParseError(str(exc), reader.line_num) from None

    if not ids:
        raise DegenerateTableError(f"{path}: file has a header but no data rows")
    schema = FeatureSchema(tuple(describe(c) for c in features))
    values = np.array(rows, dtype=float).reshape(len(ids), len(features))
    try:
        return CohortTable(
            schema, ids, values, np.array(age), np.array(sex, dtype=object),
            np.array(race, dtype=object), label_vals, {"source_file": str(path)},
        )
    except SchemaError as exc:
        row = getattr(exc, "row", None)
        raise CohortParseError(str(exc), None if row is None else row + 2) from None


def save_dictionary(schema_or_dict, path: PathLike) -> Path:
    mapping = schema_or_dict.dictionary() if isinstance(schema_or_dict, FeatureSchema) else dict(schema_or_dict)
    path = Path(path)
    path.write_text(json.dumps(mapping, indent=2) + "\n", encoding="utf-8")
    return path


def load_dictionary(path: PathLike) -> Dict[str, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise CohortParseError(f"{path}: data dictionary must map feature names to descriptions")
    return data
