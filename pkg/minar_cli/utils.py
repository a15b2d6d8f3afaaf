# minar-cli/minar_cli/utils.py
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Union

import numpy as np

SeedLike = Union[None, int, np.random.Generator]

def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Return a Generator, passing existing generators through"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)

def replicate_rng(base_seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one Monte-Carlo replicate"""
    sequence = np.random.SeedSequence(base_seed, spawn_key=(replicate,))
    return np.random.default_rng(sequence)

def parse_floats(text: Optional[str]) -> Optional[List[float]]:
    """Parse '5,8,10' into [5.0, 8.0, 10.0]"""
    if text is None or not text.strip():
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"Expected comma separated numbers, got {text!r}")

def broadcast_sizes(values: Sequence[float], n: int) -> np.ndarray:
    """Expand a single value to n entries, otherwise require length n"""
    array = np.asarray(values, dtype=float).ravel()
    if array.size == 1:
        return np.full(n, float(array[0]))
    if array.size != n:
        raise ValueError(f"Expected 1 or {n} values, got {array.size}")
    return array

@contextmanager
def atomic_write(path: Path, mode: str = "w") -> Iterator:
    """Write to a temporary sibling file and rename it over path on success"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding=None if "b" in mode else "utf-8", newline="" if "b" not in mode else None) as f:
            yield f
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise
