"""
CSV tables and JSON run metadata.
"""
import csv
import logging
import math
import os
from typing import Dict, Iterable, List, Sequence, Tuple

import orjson

logger = logging.getLogger(__name__)


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    return "%.12e" % (value + 0.0)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    logger.info(f"Wrote {os.path.basename(str(path))}")
    return str(path)


def write_residual_history(history: Sequence[Tuple[float, float]], path) -> str:
    return write_csv(
        path,
        ["iteration", "residual_player1", "residual_player2"],
        ([n, r1, r2] for n, (r1, r2) in enumerate(history)),
    )


def write_error_report(report, path) -> str:
    """One "mesh" row per level with an "EOC" row between consecutive levels"""
    from Components.Verification import ERROR_COLUMNS

    header = ["row", *ERROR_COLUMNS, "stability"]
    rows: List[list] = []
    for j, level in enumerate(report.rows):
        rows.append(["mesh", *level.values(), level.stability])
        if j < len(report.eoc):
            rates = report.eoc[j]
            rows.append(["EOC", ""] + [rates[c] for c in ERROR_COLUMNS[1:]] + [""])
    return write_csv(path, header, rows)


def write_gap_report(gaps: Dict[Tuple[str, str], Tuple[float, float]], path) -> str:
    """Pairwise relative L2 control gaps between methods"""
    rows = []
    for (a, b), (g1, g2) in sorted(gaps.items()):
        rows.append([a, b, g1, g2, max(g1, g2)])
    return write_csv(path, ["method_a", "method_b", "u1_rel_gap", "u2_rel_gap", "max_rel_gap"], rows)


def write_metadata(metadata: dict, path) -> str:
    data = orjson.dumps(metadata, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)
    with open(path, "wb") as handle:
        handle.write(data + b"\n")
    logger.info(f"Wrote {os.path.basename(str(path))}")
    return str(path)


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))
