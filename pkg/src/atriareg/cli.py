"""Command-line driver: phantom -> preprocess -> track -> evaluate.

Directory layout (zero-padded phase index, two digits minimum)::

    phase_00.nii  phase_00_mask.nii  truth_00.nii  field_00.nii  metadata.json

Failures exit nonzero after printing a single line
``atriareg: error: <Category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from .errors import AtriaRegError, ConfigInvalid, IoFailure, MissingMasks
from .metrics import evaluate_tracking
from .nifti import atomic_write_bytes, read_nifti, write_nifti
from .phantom import PhantomConfig, generate_phantom
from .pipeline import DEFAULT_CROP, preprocess_field, preprocess_series
from .registration import RegistrationConfig, track_cycle
from .reports import read_json, trace_log_text, write_json, write_metrics_csv
from .transform import DisplacementField, jacobian_det_map
from .volume import CineSeries, Mask3, Volume3

log = logging.getLogger("atriareg")

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_IO = 3
METADATA = "metadata.json"
TRACE_LOG = "loss_trace.jsonl"

_PHASE_RE = re.compile(r"^phase_(\d+)\.nii(\.gz)?$")


def _width(n: int) -> int:
    return max(2, len(str(n - 1)))


def phase_name(prefix: str, t: int, n: int, suffix: str = "") -> str:
    return f"{prefix}_{t:0{_width(n)}d}{suffix}.nii"


# -- directory I/O ------------------------------------------------------------------

def list_phases(d: Path) -> list[Path]:
    found = sorted((int(m.group(1)), p) for p in d.iterdir() if (m := _PHASE_RE.match(p.name)))
    if not found:
        raise IoFailure(f"no phase_XX.nii files in {d}")
    idx = [i for i, _ in found]
    if idx != list(range(len(idx))):
        raise IoFailure(f"phase files in {d} are not numbered 0..{len(idx) - 1}: {idx}")
    return [p for _, p in found]


def _typed(path: Path, kind):
    obj = read_nifti(path)
    if kind is Volume3 and isinstance(obj, Mask3):
        obj = Volume3(obj.data.astype(float), obj.spacing, obj.origin)
    if not isinstance(obj, kind):
        raise IoFailure(f"{path} holds a {type(obj).__name__}, expected {kind.__name__}")
    return obj


def load_series(d: Path) -> CineSeries:
    paths = list_phases(d)
    phases = [_typed(p, Volume3) for p in paths]
    mask_paths = [p.with_name(p.name.replace(".nii", "_mask.nii", 1)) for p in paths]
    masks = None
    if all(p.exists() for p in mask_paths):
        masks = tuple(_typed(p, Mask3) for p in mask_paths)
    elif any(p.exists() for p in mask_paths):
        raise MissingMasks(f"only some phases in {d} have masks")
    meta = read_json(d / METADATA) if (d / METADATA).exists() else {}
    return CineSeries(tuple(phases), masks, 0, meta)


def save_series(series: CineSeries, d: Path) -> None:
    n = len(series)
    for t, v in enumerate(series.phases):
        write_nifti(v, d / phase_name("phase", t, n))
    if series.masks is not None:
        for t, m in enumerate(series.masks):
            write_nifti(m, d / phase_name("phase", t, n, "_mask"))
    write_json(series.metadata, d / METADATA)


def load_fields(d: Path, prefix: str, n: int) -> list[DisplacementField]:
    return [_typed(d / phase_name(prefix, t, n), DisplacementField) for t in range(n)]


def save_fields(fields: Sequence[DisplacementField], d: Path, prefix: str) -> None:
    for t, f in enumerate(fields):
        write_nifti(f, d / phase_name(prefix, t, len(fields)))


# -- argument parsing ------------------------------------------------------------------

def _int_triple(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if len(vals) != 3 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive integers, got {text!r}")
    return vals


def _levels(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    try:
        RegistrationConfig(levels=vals)
    except ConfigInvalid as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return vals


def _non_negative(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not val >= 0 or val == float("inf"):
        raise argparse.ArgumentTypeError(f"must be a finite value >= 0, got {text}")
    return val


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atriareg", description="Cardiac cine volume tracking by direct field registration.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    sub = p.add_subparsers(dest="command", required=True)

    d = PhantomConfig()
    ph = sub.add_parser("phantom", help="write a synthetic cine series with analytic ground truth")
    ph.add_argument("--out", required=True, type=Path)
    ph.add_argument("--seed", type=int, default=d.seed)
    ph.add_argument("--phases", type=_positive_int, default=d.phases)
    ph.add_argument("--dims", type=_int_triple, default=d.dims)
    ph.add_argument("--peak-scale", type=float, default=d.peak_scale)
    ph.add_argument("--peak-phase", type=int, default=d.peak_phase)
    ph.add_argument("--noise-sigma", type=_non_negative, default=d.noise_sigma)

    pp = sub.add_parser("preprocess", help="crop, stabilize, normalize and band-mask a series")
    pp.add_argument("--in", dest="inp", required=True, type=Path)
    pp.add_argument("--out", required=True, type=Path)
    pp.add_argument("--crop", type=_int_triple, default=DEFAULT_CROP)

    r = RegistrationConfig()
    tr = sub.add_parser("track", help="register phase 0 to every phase")
    tr.add_argument("--in", dest="inp", required=True, type=Path)
    tr.add_argument("--out", required=True, type=Path)
    tr.add_argument("--lambda", dest="lam", type=_non_negative, default=r.lam)
    tr.add_argument("--levels", type=_levels, default=r.levels)
    tr.add_argument("--max-iters", type=_positive_int, default=r.max_iters_per_level)
    tr.add_argument("--step-size", type=float, default=r.step_size)
    tr.add_argument("--similarity", choices=("mse", "ncc"), default=r.similarity)
    tr.add_argument("--no-warm-start", dest="warm_start", action="store_false")
    tr.add_argument("--seed", type=int, default=r.seed)

    ev = sub.add_parser("evaluate", help="Dice / Hausdorff / volume table for tracked fields")
    ev.add_argument("--in", dest="inp", required=True, type=Path)
    ev.add_argument("--fields", required=True, type=Path)
    ev.add_argument("--out", required=True, type=Path)
    ev.add_argument("--percentile", type=float, default=100.0)

    jb = sub.add_parser("jacobian", help="write the Jacobian determinant map of a field")
    jb.add_argument("--field", required=True, type=Path)
    jb.add_argument("--out", required=True, type=Path)
    return p


# -- commands --------------------------------------------------------------------------

def cmd_phantom(a) -> None:
    cfg = PhantomConfig(dims=a.dims, phases=a.phases, peak_scale=a.peak_scale, peak_phase=a.peak_phase,
                        noise_sigma=a.noise_sigma, seed=a.seed)
    series, truth = generate_phantom(cfg)
    save_series(series, a.out)
    save_fields(truth, a.out, "truth")
    log.info("wrote %d phases to %s", len(series), a.out)


def cmd_preprocess(a) -> None:
    series = load_series(a.inp)
    out = preprocess_series(series, crop=a.crop)
    save_series(out, a.out)
    n = len(series)
    if (a.inp / phase_name("truth", 0, n)).exists():
        truth = load_fields(a.inp, "truth", n)
        save_fields([preprocess_field(f, out.metadata, t) for t, f in enumerate(truth)], a.out, "truth")
    log.info("preprocessed %d phases into %s", n, a.out)


def cmd_track(a) -> None:
    series = load_series(a.inp)
    cfg = RegistrationConfig(lam=a.lam, levels=a.levels, max_iters_per_level=a.max_iters, step_size=a.step_size,
                             similarity=a.similarity, warm_start=a.warm_start, seed=a.seed)
    a.out.mkdir(parents=True, exist_ok=True)
    n = len(series)
    start = time.perf_counter()

    def on_phase(t, res):
        write_nifti(res.field, a.out / phase_name("field", t, n))
        log.info("phase %d/%d done (%.1fs)", t + 1, n, time.perf_counter() - start)

    results = track_cycle(series, cfg, on_phase)
    atomic_write_bytes(a.out / TRACE_LOG, trace_log_text(results, cfg.levels).encode("utf-8"))
    write_json({
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "iterations_used": [r.iterations_used for r in results],
        "converged": [r.converged for r in results],
        "field_units": "voxel",
    }, a.out / METADATA)


def cmd_evaluate(a) -> None:
    series = load_series(a.inp)
    fields = load_fields(a.fields, "field", len(series))
    rows = evaluate_tracking(series, fields, percentile=a.percentile)
    write_metrics_csv(rows, a.out)
    for r in rows:
        log.info("phase %02d dice %.4f hd %.2f mm", r.phase, r.dice, r.hausdorff_mm)


def cmd_jacobian(a) -> None:
    field = _typed(a.field, DisplacementField)
    write_nifti(jacobian_det_map(field), a.out)


COMMANDS = {
    "phantom": cmd_phantom,
    "preprocess": cmd_preprocess,
    "track": cmd_track,
    "evaluate": cmd_evaluate,
    "jacobian": cmd_jacobian,
}


def _fail(category: str, message: str, code: int) -> int:
    one_line = " ".join(str(message).split())
    print(f"atriareg: error: {category}: {one_line}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; add the machine-parsable line
        if exc.code not in (0, None):
            return _fail("UsageError", "invalid command line", EXIT_USAGE)
        return 0
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args)
    except IoFailure as exc:
        return _fail(exc.category, exc, EXIT_IO)
    except AtriaRegError as exc:
        return _fail(exc.category, exc, EXIT_ERROR)
    except OSError as exc:
        return _fail("IoFailure", exc, EXIT_IO)
    return 0


if __name__ == "__main__":
    sys.exit(main())
