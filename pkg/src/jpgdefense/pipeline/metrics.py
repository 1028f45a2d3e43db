from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class BoxStats:
    mean: float
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outlier_count: int

    def as_dict(self):
        return asdict(self)


def boxplot_stats(values) -> BoxStats:
    """Tukey box summary: type-7 quartiles, whiskers at the furthest points within 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("boxplot_stats needs at least one value")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return BoxStats(
        mean=float(v.mean()),
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(min(inside.min(), q1)),
        whisker_high=float(max(inside.max(), q3)),
        outlier_count=int(v.size - inside.size),
    )
