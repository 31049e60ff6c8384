"""Report files for a sweep: ``trials.csv``, ``summary.json`` and ``curves.svg``.

All three are pure functions of the :class:`SweepResult`, so re-emitting the
same result produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

from .runner import SweepResult

TRIAL_COLUMNS = ("method", "n", "beta", "seed", "forward_kl", "reverse_kl", "train_objective", "wall_time")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class ReportError(OSError):
    pass


def _num(x: float) -> str:
    return format(x, ".17g")


def write_trials_csv(sweep: SweepResult, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        for t in sweep.trials:
            writer.writerow([t.method, t.n, _num(t.beta), t.seed, _num(t.forward_kl),
                             _num(t.reverse_kl), _num(t.train_objective), _num(t.wall_time)])


def summary_dict(sweep: SweepResult) -> dict:
    config = sweep.config.to_dict()
    # Where the files went is not part of the experiment.
    config.pop("output_dir", None)
    best = [
        {"method": m, "n": n, "beta": sweep.best_beta_per_cell[(m, n)],
         "mean_forward_kl": s.mean, "std_forward_kl": s.std, "count": s.count}
        for (m, n), s in sorted(sweep.best_stats.items())
    ]
    return {
        "config": config,
        "num_trials": len(sweep.trials),
        "best_beta": best,
        "rate_fits": {m: f.to_dict() for m, f in sorted(sweep.rate_fits.items())},
        "check_reports": [r.to_dict() for r in sweep.check_reports],
        "failures": [f.to_dict() for f in sweep.failures],
    }


def write_summary_json(sweep: SweepResult, path: Path) -> None:
    path.write_text(json.dumps(summary_dict(sweep), indent=2, sort_keys=True) + "\n")


def render_curves_svg(sweep: SweepResult, width: int = 640, height: int = 420) -> str:
    """Log-log chart of best-beta mean forward KL against n, one polyline per method."""
    curves = {m: [(n, e) for n, e in sweep.best_curve(m) if n > 0 and e > 0]
              for m in sweep.config.methods}
    curves = {m: c for m, c in curves.items() if c}
    left, right, top, bottom = 70, 150, 30, 55
    pw, ph = width - left - right, height - top - bottom

    pts = [p for c in curves.values() for p in c]
    if pts:
        lx = [math.log10(n) for n, _ in pts]
        ly = [math.log10(e) for _, e in pts]
        x0, x1 = math.floor(min(lx)), math.ceil(max(lx))
        y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    else:
        x0, x1, y0, y1 = 0, 1, 0, 1
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)

    def sx(v):
        return left + pw * (math.log10(v) - x0) / (x1 - x0)

    def sy(v):
        return top + ph * (1 - (math.log10(v) - y0) / (y1 - y0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for k in range(x0, x1 + 1):
        x = sx(10.0 ** k)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle">1e{k}</text>')
    for k in range(y0, y1 + 1):
        y = sy(10.0 ** k)
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">1e{k}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 12}" text-anchor="middle">'
               f'sample size n</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.2f})">forward KL (best beta, seed mean)</text>')
    for i, (method, curve) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(n):.2f},{sy(e):.2f}" for n, e in curve)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = top + 16 + 20 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 36}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 42}" y="{ly + 4}">{escape(method)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(sweep: SweepResult, output_dir) -> dict[str, Path]:
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"trials": out / "trials.csv", "summary": out / "summary.json", "curves": out / "curves.svg"}
        write_trials_csv(sweep, paths["trials"])
        write_summary_json(sweep, paths["summary"])
        paths["curves"].write_text(render_curves_svg(sweep))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return paths
