# minar-cli/minar_cli/exporter.py
import json
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from .evaluation import ExperimentResult
from .model import MultiCountSeries
from .surveillance import SurveillanceReport
from .utils import atomic_write


def series_frame(series: MultiCountSeries) -> pd.DataFrame:
    """t, x1..xn and covariate columns"""
    frame = pd.DataFrame(series.counts, columns=[f"x{i + 1}" for i in range(series.n)])
    frame.insert(0, "t", series.times)
    if series.covariates is not None:
        for k, name in enumerate(series.covariate_names):
            frame[name] = series.covariates[:, k]
    return frame


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    with atomic_write(path) as f:
        frame.to_csv(f, index=False, lineterminator="\n")
    return path


def write_series(series: MultiCountSeries, path: Path) -> Path:
    return write_frame(series_frame(series), path)


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_json(data: Dict[str, Any], path: Path) -> Path:
    with atomic_write(path) as f:
        json.dump(data, f, indent=2, default=_plain)
        f.write("\n")
    return path


def write_report_csv(report: SurveillanceReport, path: Path) -> Path:
    return write_frame(report.to_frame(), path)


def write_tables(tables: Tuple[pd.DataFrame, pd.DataFrame], output_dir: Path, prefix: str = "") -> Tuple[Path, Path]:
    """Write the run-length and rate tables as <prefix>arl.csv and <prefix>rates.csv"""
    arl, rates = tables
    return (
        write_frame(arl, output_dir / f"{prefix}arl.csv"),
        write_frame(rates, output_dir / f"{prefix}rates.csv"),
    )


def write_alarm_log(result: ExperimentResult, output_dir: Path) -> Path:
    """Raw per-replicate alarms, plus failures.csv when any fit failed"""
    path = write_frame(result.alarm_log(), output_dir / "alarms.csv")
    failures = output_dir / "failures.csv"
    if result.failures():
        write_frame(result.failure_log(), failures)
    elif failures.exists():
        failures.unlink()
    return path
