"""Score lookup from a precomputed table keyed by the six factors."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Tuple

from ..arch import FACTOR_NAMES, ExpansionFactors

KEY_DECIMALS = 6
COLUMNS = FACTOR_NAMES + ("score",)


class ReplayTableError(ValueError):
    pass


class MissingReplayKey(KeyError):
    pass


def canonical_key(factors: ExpansionFactors) -> Tuple[str, ...]:
    return tuple(f"{v:.{KEY_DECIMALS}f}" for v in factors.as_tuple())


def load_table(path) -> Dict[Tuple[str, ...], float]:
    table: Dict[Tuple[str, ...], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ReplayTableError(f"{path}: missing columns {missing}")
        for line, row in enumerate(reader, start=2):
            key = tuple(f"{float(row[name]):.{KEY_DECIMALS}f}" for name in FACTOR_NAMES)
            if key in table:
                raise ReplayTableError(f"{path}:{line}: duplicate key {key}")
            table[key] = float(row["score"])
    return table


def write_table(path, rows) -> None:
    """rows: iterable of (ExpansionFactors, score)."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for factors, score in rows:
            writer.writerow(list(canonical_key(factors)) + [repr(float(score))])


def replay(table: Dict[Tuple[str, ...], float], factors: ExpansionFactors) -> float:
    key = canonical_key(factors)
    try:
        return table[key]
    except KeyError:
        raise MissingReplayKey(f"no replay entry for factors {key}") from None
