"""Error statistics between path-loss predictors, comparison tables, and
plot-data emission (CSV plus a two-panel SVG: terrain above, path loss
below, with an optional mean +/- 2 sigma uncertainty band)."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .mom import DB_FLOOR


@dataclass(frozen=True)
class ErrorStats:
    mean_error_db: float   # mean of (prediction - reference); positive = over-prediction
    std_error_db: float    # population standard deviation
    n_points: int
    excluded: int


def _values(profile_like) -> np.ndarray:
    vals = getattr(profile_like, "values_db", profile_like)
    return np.asarray(vals, dtype=np.float64)


def error_stats(pred, ref, mask: Optional[np.ndarray] = None) -> ErrorStats:
    """Mean and population standard deviation of prediction minus reference.

    `mask` selects points to keep (True = include).  Non-finite and
    floor-clamped values on either side are always excluded.
    """
    p = _values(pred)
    r = _values(ref)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {r.shape}")
    keep = np.isfinite(p) & np.isfinite(r) & (p > DB_FLOOR) & (r > DB_FLOOR)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != p.shape:
            raise ValueError("mask shape must match the profiles")
        keep &= mask
    if not np.any(keep):
        raise ValueError("no points left after masking")
    err = p[keep] - r[keep]
    return ErrorStats(mean_error_db=float(np.mean(err)),
                      std_error_db=float(np.std(err)),
                      n_points=int(err.size),
                      excluded=int(p.size - err.size))


def pooled_error_stats(preds: Sequence, refs: Sequence,
                       mask_first: bool = False) -> ErrorStats:
    """Error statistics pooled across a collection of profile pairs.
    With `mask_first` the transmitter-adjacent point of every pair is
    dropped (its level is dominated by the incident field)."""
    if len(preds) != len(refs):
        raise ValueError("prediction and reference collections differ in length")
    errs = []
    excluded = 0
    for p, r in zip(preds, refs):
        pv, rv = _values(p), _values(r)
        keep = np.isfinite(pv) & np.isfinite(rv) & (pv > DB_FLOOR) & (rv > DB_FLOOR)
        if mask_first:
            keep[0] = False
        errs.append(pv[keep] - rv[keep])
        excluded += int(pv.size - keep.sum())
    err = np.concatenate(errs)
    if err.size == 0:
        raise ValueError("no points left after masking")
    return ErrorStats(float(np.mean(err)), float(np.std(err)),
                      int(err.size), excluded)


@dataclass(frozen=True)
class ComparisonReport:
    rows: Tuple[dict, ...]

    def to_text(self) -> str:
        header = f"{'model':<16}{'reference':<16}{'mean dB':>10}{'std dB':>10}{'points':>9}{'excl':>7}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(f"{row['model']:<16}{row['reference']:<16}"
                         f"{row['mean_error_db']:>10.2f}{row['std_error_db']:>10.2f}"
                         f"{row['n_points']:>9d}{row['excluded']:>7d}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"rows": list(self.rows)}, indent=2, sort_keys=True)


def compare_table(models: Sequence[Tuple[str, Sequence]],
                  refs: Dict[str, Sequence],
                  mask_first: bool = False) -> ComparisonReport:
    """Per-model error statistics against every named reference, in the
    deterministic order models x sorted(reference names)."""
    if not refs:
        raise ValueError("at least one reference is required")
    rows = []
    for model_name, preds in models:
        for ref_name in sorted(refs):
            stats = pooled_error_stats(preds, refs[ref_name], mask_first)
            rows.append({"model": model_name, "reference": ref_name,
                         **asdict(stats)})
    return ComparisonReport(rows=tuple(rows))


def emit_plot_data(profile, predictions: Dict[str, np.ndarray], out_csv,
                   out_svg=None, sigma_for: Optional[str] = None,
                   sigma: Optional[np.ndarray] = None) -> None:
    """Write per-receiver plot data as CSV and, optionally, an SVG figure.

    Columns: range_m, terrain_m, one column per predictor, then
    band_low_db / band_high_db (mean +/- 2 sigma around `sigma_for`) when a
    sigma vector is supplied.
    """
    ranges = profile.ranges_m
    n = profile.n_points
    names = list(predictions)
    for name in names:
        if _values(predictions[name]).size != n:
            raise ValueError(f"prediction {name!r} length mismatch")
    band = None
    if sigma is not None:
        if sigma_for is None or sigma_for not in predictions:
            raise ValueError("sigma requires sigma_for naming one predictor")
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.size != n:
            raise ValueError("sigma length mismatch")
        mu = _values(predictions[sigma_for])
        band = (mu - 2.0 * sigma, mu + 2.0 * sigma)

    with open(out_csv, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["range_m", "terrain_m"] + names
        if band is not None:
            header += ["band_low_db", "band_high_db"]
        writer.writerow(header)
        cols = [ranges, profile.heights_m] + [_values(predictions[n_]) for n_ in names]
        if band is not None:
            cols += [band[0], band[1]]
        for row in zip(*cols):
            writer.writerow([f"{v:.6g}" for v in row])

    if out_svg is not None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (ax_top, ax_bot) = plt.subplots(
            2, 1, sharex=True, figsize=(8, 6),
            gridspec_kw={"height_ratios": [1, 2]})
        ax_top.plot(ranges / 1000.0, profile.heights_m, color="firebrick")
        ax_top.set_ylabel("terrain (m)")
        if band is not None:
            ax_bot.fill_between(ranges / 1000.0, band[0], band[1],
                                color="0.8", label="+/- 2 sigma")
        for name in names:
            ax_bot.plot(ranges / 1000.0, _values(predictions[name]), label=name)
        ax_bot.set_xlabel("range (km)")
        ax_bot.set_ylabel("path gain (dB)")
        ax_bot.legend(loc="upper right", fontsize="small")
        fig.tight_layout()
        fig.savefig(out_svg, format="svg")
        plt.close(fig)
