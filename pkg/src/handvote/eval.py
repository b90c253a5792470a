"""Mean joint error, success-rate curves, hyperparameter sweeps and report files."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .aggregator import AggregatorConfig, estimate_pose
from .geometry import depth_to_pointmap
from .synth import NoiseConfig, corrupt_targets

DEFAULT_THRESHOLDS = tuple(float(t) for t in range(0, 81, 2))
METRICS_FIELDS = ("config", "mean_error_mm", "frames", "failed")


@dataclass
class EvalResult:
    mean_error_mm: float
    per_joint_error_mm: np.ndarray
    success_curve: list[tuple[float, float]]
    frame_count: int
    failed_frames: int


def _as_array(poses) -> np.ndarray:
    return np.stack([np.asarray(getattr(p, "joints", p), dtype=np.float64).reshape(-1, 3) for p in poses]) \
        if len(poses) else np.zeros((0, 0, 3))


def joint_errors(preds, gts) -> np.ndarray:
    """(F, J) Euclidean errors; NaN where a prediction is missing."""
    P, G = _as_array(preds), _as_array(gts)
    if P.shape != G.shape:
        raise ValueError(f"prediction set {P.shape} does not match ground truth {G.shape}")
    return np.linalg.norm(P - G, axis=-1)


def mean_joint_error(preds, gts) -> float:
    """Average Euclidean error over all joints of all frames (mm)."""
    err = joint_errors(preds, gts)
    if err.size == 0:
        raise ValueError("no frames to evaluate")
    if np.any(np.isnan(err)):
        raise ValueError("predictions contain missing joints; use evaluate() to count them as failures")
    return float(err.mean())


def success_rate_curve(preds, gts, thresholds=DEFAULT_THRESHOLDS) -> list[tuple[float, float]]:
    """Fraction of frames whose worst joint error is below each threshold.

    Frames with a missing joint never count as a success.
    """
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    err = joint_errors(preds, gts)
    if len(err) == 0:
        return [(t, 0.0) for t in thresholds]
    worst = np.nan_to_num(err, nan=np.inf).max(axis=1)
    return [(t, float(np.mean(worst < t))) for t in thresholds]


def evaluate(preds, gts, thresholds=DEFAULT_THRESHOLDS) -> EvalResult:
    """Metrics with abstentions: frames with any missing joint are excluded from the
    mean and counted in ``failed_frames``."""
    err = joint_errors(preds, gts)
    failed = np.isnan(err).any(axis=1) if len(err) else np.zeros(0, dtype=bool)
    ok = err[~failed]
    J = err.shape[1] if err.ndim == 2 else 0
    return EvalResult(
        mean_error_mm=float(ok.mean()) if ok.size else float("nan"),
        per_joint_error_mm=ok.mean(axis=0) if len(ok) else np.full(J, np.nan),
        success_curve=success_rate_curve(preds, gts, thresholds),
        frame_count=len(err),
        failed_frames=int(failed.sum()),
    )


# -- sweeps --------------------------------------------------------------------------

GRID_KEYS = {"k": "k_candidates", "sigma_mm": "sigma", "weighting": "weighting"}


def expand_grid(grid: dict) -> list[dict]:
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown sweep keys {sorted(unknown)}; allowed {sorted(GRID_KEYS)}")
    keys = [k for k in GRID_KEYS if k in grid]
    values = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def cell_label(cell: dict) -> str:
    return " ".join(f"{k}={cell[k]}" for k in cell) or "default"


def sweep(samples, grid: dict, base: AggregatorConfig | None = None,
          noise: NoiseConfig | None = None) -> list[tuple[str, EvalResult]]:
    """Decode every sample under each grid cell and tabulate errors.

    samples: iterable of (frame, pose, targets). Targets are corrupted once per
    frame (seeded from ``noise.seed`` and the frame index), so all cells see the
    same noisy evidence.
    """
    base = base or AggregatorConfig()
    data = []
    for i, (frame, pose, targets) in enumerate(samples):
        if noise is not None:
            targets = corrupt_targets(targets, noise, np.random.default_rng([noise.seed, i]))
        data.append((frame, depth_to_pointmap(frame), pose, targets))
    rows = []
    for cell in expand_grid(grid):
        cfg = replace(base, **{GRID_KEYS[k]: v for k, v in cell.items()})
        preds = [estimate_pose(pm, t, cfg, f.intrinsics).joints for f, pm, _, t in data]
        rows.append((cell_label(cell), evaluate(preds, [p for _, _, p, _ in data])))
    return rows


# -- reports -------------------------------------------------------------------------

def write_metrics_csv(path, results) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRICS_FIELDS)
        for name, r in results:
            w.writerow([name, f"{r.mean_error_mm:.6f}", r.frame_count, r.failed_frames])


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def success_curve_svg(results, width: int = 480, height: int = 360) -> str:
    """Plot of fraction of frames vs threshold, one polyline per result."""
    left, right, top, bottom = 60, 20, 20, 50
    pw, ph = width - left - right, height - top - bottom
    xs = [t for _, r in results for t, _ in r.success_curve]
    xmax = max(xs) if xs and max(xs) > 0 else 1.0

    def px(t, frac):
        return left + pw * t / xmax, top + ph * (1.0 - frac)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(5):
        t = xmax * i / 4
        x, y = px(t, 0)
        out.append(f'<text x="{x:.1f}" y="{y + 16:.1f}" font-size="11" text-anchor="middle">{t:g}</text>')
        frac = i / 4
        x, y = px(0, frac)
        out.append(f'<text x="{x - 6:.1f}" y="{y + 4:.1f}" font-size="11" text-anchor="end">{frac:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" font-size="12" '
               f'text-anchor="middle">threshold (mm)</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.1f})">fraction of frames</text>')
    for i, (name, r) in enumerate(results):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join("{:.2f},{:.2f}".format(*px(t, f)) for t, f in r.success_curve)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 150}" y1="{ly - 4}" x2="{left + pw - 130}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        label = _escape(f"{name} ({r.mean_error_mm:.2f} mm)")
        out.append(f'<text x="{left + pw - 125}" y="{ly}" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_report(results, out_dir) -> list[Path]:
    """Write metrics.csv and success_curve.svg; results is a list of (name, EvalResult)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = list(results)
    csv_path, svg_path = out / "metrics.csv", out / "success_curve.svg"
    write_metrics_csv(csv_path, results)
    svg_path.write_text(success_curve_svg(results))
    return [csv_path, svg_path]
