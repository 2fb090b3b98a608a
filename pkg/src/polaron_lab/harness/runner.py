"""Run an experiment and persist its record, tables, arrays and plot scripts."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..crystal import InsulatorViolation, SCFDiverged
from ..grid import GridFunction, save_grid_function
from ..pekar import ChoquardDiverged
from ..polaron import PolaronDiverged
from ..response import ResponseDiverged
from .config import ConfigError, ExperimentConfig
from .experiments import EXPERIMENT_FUNCS, Context, Outcome

log = logging.getLogger(__name__)

RECORD_NAME = "record.json"
RECORD_FORMAT = 1

EXIT_PASS, EXIT_ASSERTION, EXIT_DIVERGED, EXIT_CONFIG = 0, 2, 3, 4
DIVERGENCE = (SCFDiverged, ResponseDiverged, PolaronDiverged, ChoquardDiverged)


@dataclass
class ExperimentRecord:
    experiment: str
    config_hash: str
    version: str
    preset: str | None
    seed: int
    status: str
    exit_code: int
    wall_time: float
    results: dict = field(default_factory=dict)
    properties: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    cache_hits: list = field(default_factory=list)
    error: dict | None = None
    artifacts: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_PASS

    def to_dict(self) -> dict:
        return {"format": RECORD_FORMAT, **{k: getattr(self, k) for k in self.__dataclass_fields__}}


def _jsonable(x):
    """Recursively convert numpy scalars/arrays; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def table_csv(rows: list[dict]) -> str:
    """CSV with columns in first-seen order and floats at full precision."""
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([_fmt(r[c]) if c in r else "" for c in cols])
    return buf.getvalue()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- plots -----------------------------------------------------------------------

def _plot_spec(name: str, cols: list[str]) -> tuple[str, str, list[str], bool] | None:
    """(x column, title, y columns, log-log) for tables that have a natural plot."""
    known = {
        "bands": ("j0", "band structure", [c for c in cols if c.startswith("band")], False),
        "decoupling": ("s", "decoupling defect", ["delta"], True),
        "decoupling_yukawa": ("s", "decoupling defect, Yukawa kernel", ["delta"], True),
        "localization": ("R", "localization errors", ["e_rho", "e_kin", "q_approx"], True),
        "trial_scaling": ("lam", "trial energies", ["lam_excess"], False),
        "macrolimit": ("lam", "response energy of dilated densities", ["F", "lam_F"], False),
        "e1_trace": ("step", "alternating minimization", ["E"], False),
        "choquard": ("eps", "Pekar energy", ["E"], False),
        "binding": ("k", "binding table", ["split", "E_N"], False),
    }
    spec = known.get(name)
    if spec is None or spec[0] not in cols:
        return None
    return spec[0], spec[1], [c for c in spec[2] if c in cols], spec[3]


def emit_plots(tables: dict, out_dir: Path) -> list[str]:
    """Write one gnuplot script per plottable table; returns their relative paths."""
    written = []
    for name, rows in sorted(tables.items()):
        if not rows:
            continue
        cols: list[str] = []
        for r in rows:
            cols.extend(k for k in r if k not in cols)
        spec = _plot_spec(name, cols)
        if spec is None or not spec[2]:
            continue
        x, title, ys, loglog = spec
        lines = ["set datafile separator ','", "set key autotitle columnhead",
                 f"set title '{title}'", f"set xlabel '{x}'", "set terminal pngcairo size 800,600",
                 f"set output '{name}.png'"]
        if loglog:
            lines.append("set logscale xy")
        plots = [f"'../{name}.csv' using (column('{x}')):(abs(column('{y}'))) with linespoints title '{y}'"
                 if loglog else f"'../{name}.csv' using (column('{x}')):(column('{y}')) with linespoints title '{y}'"
                 for y in ys]
        lines.append("plot " + ", \\\n     ".join(plots))
        path = out_dir / "plots" / f"{name}.gp"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
        written.append(str(path.relative_to(out_dir)))
    return written


# --- run -------------------------------------------------------------------------

def _classify(err: BaseException) -> tuple[str, int]:
    if isinstance(err, ConfigError):
        return "config_error", EXIT_CONFIG
    if isinstance(err, InsulatorViolation):
        return "assertion_failed", EXIT_ASSERTION
    if isinstance(err, DIVERGENCE):
        return "diverged", EXIT_DIVERGED
    if isinstance(err, ValueError):
        return "config_error", EXIT_CONFIG
    return "error", EXIT_ASSERTION


def _write_outputs(outcome: Outcome, config: ExperimentConfig, out_dir: Path) -> tuple[dict, list]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out_dir / "config.toml"
    p.write_text(config.to_toml())
    paths.append(p)
    for name, rows in sorted(outcome.tables.items()):
        p = out_dir / f"{name}.csv"
        p.write_text(table_csv(rows))
        paths.append(p)
    for name, f in sorted(outcome.arrays.items()):
        if isinstance(f, GridFunction):
            p = out_dir / "arrays" / f"{name}.bin"
            p.parent.mkdir(exist_ok=True)
            save_grid_function(f, p)
            paths += [p, Path(str(p) + ".json")]
    plots = emit_plots(outcome.tables, out_dir)
    paths += [out_dir / q for q in plots]
    artifacts = {str(q.relative_to(out_dir)): sha256_file(q) for q in paths}
    return artifacts, plots


def run(config: ExperimentConfig, out_dir: str | Path | None = None, jobs: int = 1,
        use_cache: bool = True) -> ExperimentRecord:
    """Run ``config`` and, when ``out_dir`` is given, write the record and its artifacts."""
    t0 = time.perf_counter()
    outcome = Outcome()
    error = None
    try:
        outcome = EXPERIMENT_FUNCS[config.experiment](Context(config, use_cache, max(1, jobs)))
        failed = [p for p in outcome.properties if not p.passed]
        status, code = ("passed", EXIT_PASS) if not failed else ("assertion_failed", EXIT_ASSERTION)
    except Exception as err:  # every module error is recorded and fails the run
        status, code = _classify(err)
        error = {"type": type(err).__name__, "message": str(err),
                 "traceback": traceback.format_exc(limit=6)}
        trace = getattr(err, "trace", None) or getattr(err, "gap_trace", None)
        if trace:
            error["trace"] = list(trace)[-50:]
        log.error("%s failed: %s", config.experiment, err)
    rec = ExperimentRecord(
        experiment=config.experiment, config_hash=config.config_hash, version=__version__,
        preset=config.preset, seed=config.seed, status=status, exit_code=code,
        wall_time=time.perf_counter() - t0, results=_jsonable(outcome.results),
        properties=[_jsonable(p.to_dict()) for p in outcome.properties], notes=list(outcome.notes),
        cache_hits=list(outcome.cache_hits), error=_jsonable(error))
    if out_dir is not None:
        out_dir = Path(out_dir)
        rec.artifacts, rec.plots = _write_outputs(outcome, config, out_dir)
        (out_dir / RECORD_NAME).write_text(json.dumps(rec.to_dict(), indent=2, sort_keys=True))
    return rec


def verify(record_path: str | Path) -> dict:
    """Recompute artifact hashes of a written record; returns {path: status}."""
    record_path = Path(record_path)
    data = json.loads(record_path.read_text())
    root = record_path.parent
    report = {}
    for rel, digest in sorted(data.get("artifacts", {}).items()):
        p = root / rel
        if not p.exists():
            report[rel] = "missing"
        else:
            report[rel] = "ok" if sha256_file(p) == digest else "mismatch"
    return report
