"""Text artifacts: metrics CSV, loss-trace logs and JSON metadata.

Floats are written with ``repr`` (shortest round-tripping decimal), so a
value of one always prints as ``1.0`` and parsing the file back yields
the exact doubles that were written.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import astuple, fields
from typing import Iterable, Sequence

from .errors import IoFailure
from .metrics import PhaseEvaluation
from .nifti import PathLike, atomic_write_bytes
from .registration import RegistrationResult

METRICS_HEADER = [f.name for f in fields(PhaseEvaluation)]


def _fmt(x) -> str:
    return str(x) if isinstance(x, int) else repr(float(x))


def metrics_csv_text(evals: Sequence[PhaseEvaluation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for e in evals:
        w.writerow([_fmt(x) for x in astuple(e)])
    return buf.getvalue()


def write_metrics_csv(evals: Sequence[PhaseEvaluation], path: PathLike) -> None:
    if not evals:
        raise ValueError("no evaluations to write")
    atomic_write_bytes(path, metrics_csv_text(evals).encode("ascii"))


def read_metrics_csv(path: PathLike) -> list[PhaseEvaluation]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != METRICS_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    return [PhaseEvaluation(int(r[0]), *(float(x) for x in r[1:])) for r in rows[1:]]


# -- loss traces ------------------------------------------------------------------------

def trace_records(phase: int, result: RegistrationResult, levels: Sequence[int]) -> Iterable[dict]:
    """One JSON-lines record per iteration plus a per-level summary."""
    for f, init, trace in zip(levels, result.initial_loss, result.level_traces()):
        for it, loss in enumerate(trace, start=1):
            yield {"phase": phase, "level": f, "iter": it, "total": loss.total,
                   "similarity": loss.similarity, "bending": loss.bending}
        yield {"phase": phase, "level": f, "summary": True, "iterations": len(trace),
               "initial_total": init.total, "final_total": trace[-1].total if trace else init.total}


def trace_log_text(results: Sequence[RegistrationResult], levels: Sequence[int]) -> str:
    lines = []
    for t, res in enumerate(results):
        lines.extend(json.dumps(r, sort_keys=True) for r in trace_records(t, res, levels))
    return "\n".join(lines) + "\n"


def read_trace_log(path: PathLike) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- metadata -----------------------------------------------------------------------------

def write_json(obj, path: PathLike) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def read_json(path: PathLike):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
