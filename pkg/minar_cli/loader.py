# minar-cli/minar_cli/loader.py
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .errors import DataFormatError, DomainError
from .estimation import FittedModel
from .evaluation import ExperimentSpec
from .model import MinarModel, MultiCountSeries


def load_json(filepath: Path) -> Dict[str, Any]:
    """Load a JSON document, mapping parse failures to DataFormatError"""
    try:
        with open(filepath, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{filepath}: invalid JSON ({e})")
    if not isinstance(data, dict):
        raise DataFormatError(f"{filepath}: expected a JSON object")
    return data


def count_columns(columns: List[str]) -> List[str]:
    """x1..xn in numeric order"""
    names = [c for c in columns if c.startswith("x") and c[1:].isdigit()]
    return sorted(names, key=lambda c: int(c[1:]))


def load_series(filepath: Path, covariates: Optional[List[str]] = None) -> MultiCountSeries:
    """Load a t,x1..xn[,covariates] CSV.

    Every column besides t and x1..xn is read as a covariate unless
    ``covariates`` narrows the selection.
    """
    try:
        frame = pd.read_csv(filepath)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"{filepath}: cannot parse CSV ({e})")

    frame.columns = [str(c).strip() for c in frame.columns]
    if "t" not in frame.columns:
        raise DataFormatError(f"{filepath}: missing time column 't'")
    series_columns = count_columns(list(frame.columns))
    if not series_columns:
        raise DataFormatError(f"{filepath}: no count columns x1..xn")
    expected = [f"x{i + 1}" for i in range(len(series_columns))]
    if series_columns != expected:
        raise DataFormatError(f"{filepath}: count columns must be {', '.join(expected)}")
    if frame.empty:
        raise DataFormatError(f"{filepath}: no data rows")

    extra = [c for c in frame.columns if c != "t" and c not in series_columns]
    if covariates is not None:
        missing = [c for c in covariates if c not in frame.columns]
        if missing:
            raise DataFormatError(f"{filepath}: missing covariate columns {', '.join(missing)}")
        extra = list(covariates)

    numeric = frame[["t"] + series_columns + extra].apply(pd.to_numeric, errors="coerce")
    bad_rows = numeric.index[numeric.isna().any(axis=1)]
    if len(bad_rows):
        raise DataFormatError(f"{filepath}: non-numeric or missing value in row {int(bad_rows[0]) + 2}")

    times = numeric["t"].to_numpy()
    if np.any(times != np.round(times)):
        raise DataFormatError(f"{filepath}: time labels must be integers")
    if np.any(np.diff(times) != 1):
        raise DataFormatError(f"{filepath}: time labels must be consecutive")

    try:
        return MultiCountSeries(
            numeric[series_columns].to_numpy(),
            numeric[extra].to_numpy(dtype=float) if extra else None,
            tuple(extra),
            int(times[0]),
        )
    except DomainError as e:
        raise DataFormatError(f"{filepath}: {e}")


def load_model(filepath: Path) -> MinarModel:
    try:
        return MinarModel.from_dict(load_json(filepath))
    except DomainError as e:
        raise DataFormatError(f"{filepath}: {e}")


def load_fit(filepath: Path) -> FittedModel:
    try:
        return FittedModel.from_dict(load_json(filepath))
    except DataFormatError as e:
        raise DataFormatError(f"{filepath}: {e}")


def load_experiment(filepath: Path) -> ExperimentSpec:
    """Validate the whole experiment document before any computation"""
    data = load_json(filepath)
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'experiment'}: {err['msg']}" for err in e.errors())
        raise DataFormatError(f"{filepath}: invalid experiment ({problems})")


def load_covariates(filepath: Path, names: List[str]) -> np.ndarray:
    """Covariate columns of a CSV in the requested order"""
    try:
        frame = pd.read_csv(filepath)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"{filepath}: cannot parse CSV ({e})")
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in names if c not in frame.columns]
    if missing:
        raise DataFormatError(f"{filepath}: missing covariate columns {', '.join(missing)}")
    values = frame[list(names)].apply(pd.to_numeric, errors="coerce")
    if values.isna().any().any():
        raise DataFormatError(f"{filepath}: covariates must be numeric and complete")
    return values.to_numpy(dtype=float)
