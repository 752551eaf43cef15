"""CSV and SVG artifacts of an experiment.

Floats are written with ``repr`` (shortest round-trip form), so the same
traces always produce the same bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .runner import ExperimentResult, RegretSummary, dynamics_metrics

REGRET_HEADER = ("t", "mean_cum_regret", "stderr", "seeds")
TRACE_HEADER = ("t", "regret", "cum_regret", "explored", "selected", "action", "reward")
DYNAMICS_HEADER = ("t", "visited", "visited_fraction", "q_star", "q_max", "q_star_rank")
DIAG_HEADER = ("algorithm", "seed", "t", "s", "kappa_hat", "lambda_min_empirical", "method",
               "cmin_uniform")


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_rows(path: Path, header, rows) -> Path:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _num(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def write_regret(summary: RegretSummary, out: Path) -> Path:
    k = len(summary.seeds)
    rows = ((t + 1, m, e, k) for t, (m, e) in enumerate(zip(summary.mean, summary.stderr)))
    return _write_rows(out / f"regret_{summary.algorithm}.csv", REGRET_HEADER, rows)


def write_trace(trace, out: Path) -> Path:
    cum = trace.cumulative
    rows = ((t + 1, trace.instant[t], cum[t], trace.explored[t], trace.selected[t],
             trace.actions[t], trace.rewards[t]) for t in range(trace.n))
    return _write_rows(out / f"trace_{trace.algorithm}_{trace.seed}.csv", TRACE_HEADER, rows)


def write_dynamics(trace, out: Path) -> Path | None:
    if trace.q_history is None or trace.oracle_index is None:
        return None
    dm = dynamics_metrics(trace)
    rows = ((t, dm.visited[t - 1], dm.visited_fraction(t), dm.q_star[t - 1], dm.q[t - 1].max(),
             dm.oracle_rank(t)) for t in range(1, len(dm.q) + 1))
    return _write_rows(out / f"dynamics_{trace.algorithm}_{trace.seed}.csv", DYNAMICS_HEADER, rows)


def write_diagnostics(rows, out: Path) -> Path:
    """``rows`` are ``(algorithm, seed, EigenReport, cmin)`` tuples."""
    flat = ((alg, seed, r.t, r.s, r.kappa_hat, r.lambda_min_empirical, r.method, cmin)
            for alg, seed, r, cmin in rows)
    return _write_rows(out / "diagnostics.csv", DIAG_HEADER, flat)


def read_regret(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in REGRET_HEADER}


def read_trace(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in TRACE_HEADER}


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def render_svg(curves: dict[str, tuple[np.ndarray, np.ndarray]], title: str = "") -> str:
    """Mean curves with a +-1 standard-error band, one colour per algorithm."""
    W, H, pad = 640, 400, 50
    n = max((len(m) for m, _ in curves.values()), default=1)
    top = max((float(np.max(m + e)) for m, e in curves.values()), default=1.0)
    top = top if top > 0 else 1.0

    def xy(t, v):
        x = pad + (W - 2 * pad) * (t - 1) / max(n - 1, 1)
        y = H - pad - (H - 2 * pad) * v / top
        return f"{x:.2f},{y:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
             f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">t</text>',
             f'<text x="{pad - 6}" y="{pad}" text-anchor="end" font-size="11">{top:.3g}</text>',
             f'<text x="{pad - 6}" y="{H - pad}" text-anchor="end" font-size="11">0</text>',
             f'<text x="{W - pad}" y="{H - pad + 16}" text-anchor="end" font-size="11">{n}</text>']
    if title:
        parts.append(f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>')
    for i, (name, (mean, err)) in enumerate(curves.items()):
        colour = _PALETTE[i % len(_PALETTE)]
        ts = range(1, len(mean) + 1)
        upper = [xy(t, m + e) for t, m, e in zip(ts, mean, err)]
        lower = [xy(t, max(m - e, 0.0)) for t, m, e in zip(ts, mean, err)]
        parts.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{colour}" '
                     f'fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<polyline points="{" ".join(xy(t, m) for t, m in zip(ts, mean))}" '
                     f'fill="none" stroke="{colour}" stroke-width="1.5"/>')
        parts.append(f'<text x="{W - pad + 4}" y="{pad + 14 * i}" font-size="11" '
                     f'fill="{colour}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(curves, out: Path, title: str = "") -> Path:
    path = out / "summary.svg"
    try:
        path.write_text(render_svg(curves, title))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def plot_directory(out) -> Path:
    """Rebuild ``summary.svg`` from the ``regret_*.csv`` files in ``out``."""
    out = Path(out)
    files = sorted(out.glob("regret_*.csv"))
    if not files:
        raise FileNotFoundError(f"no regret_*.csv files in {out}")
    curves = {}
    for f in files:
        data = read_regret(f)
        curves[f.stem[len("regret_"):]] = (data["mean_cum_regret"], data["stderr"])
    return write_svg(curves, out, "cumulative regret")


def emit_outputs(result: ExperimentResult, out=None, diagnostics=None, svg: bool = True) -> list[Path]:
    """Write every CSV (and the SVG) for ``result``; returns the paths written."""
    out = Path(result.config.output_dir if out is None else out)
    if not result.traces:
        return []
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    written = []
    summaries = result.summaries()
    for summary in summaries.values():
        written.append(write_regret(summary, out))
    for key in sorted(result.traces, key=lambda k: (result.config.algorithm_names.index(k[0]), k[1])):
        trace = result.traces[key]
        written.append(write_trace(trace, out))
        dyn = write_dynamics(trace, out)
        if dyn is not None:
            written.append(dyn)
    if diagnostics:
        written.append(write_diagnostics(diagnostics, out))
    if svg:
        curves = {name: (s.mean, s.stderr) for name, s in summaries.items()}
        written.append(write_svg(curves, out, "cumulative regret"))
    return written


def check_prefix_sums(path, atol: float = 1e-9) -> bool:
    """Re-read a trace CSV and confirm cum_regret is the running sum of regret."""
    data = read_trace(path)
    return bool(np.allclose(np.cumsum(data["regret"]), data["cum_regret"], rtol=0, atol=atol)
                and math.isclose(data["t"][-1], len(data["t"])))
