"""Two-channel photon correlation (HBT) and emitter-number inference.

Timestamps are in nanoseconds.  The histogram is a full cross-correlation:
every (a, b) pair with ``|t_b - t_a|`` inside the window is counted, so the
estimator does not suffer the start-stop bias at high count rates.
Detector dead time and afterpulsing are not corrected.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass
class TimestampSeries:
    arrival_times: np.ndarray
    span: Optional[Tuple[float, float]] = None
    channel_id: int = 0

    def __post_init__(self):
        t = np.asarray(self.arrival_times, dtype=float)
        if t.ndim != 1:
            raise ValueError("arrival times must be 1-D")
        if not np.all(np.isfinite(t)):
            raise ValueError("arrival times must be finite")
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("arrival times must be non-decreasing")
        self.arrival_times = t
        if self.span is None:
            self.span = (float(t[0]), float(t[-1])) if len(t) else (0.0, 0.0)
        t0, t1 = (float(v) for v in self.span)
        if t1 < t0:
            raise ValueError("acquisition span end precedes start")
        if len(t) and (t[0] < t0 or t[-1] > t1):
            raise ValueError("arrival times fall outside the acquisition span")
        self.span = (t0, t1)

    def __len__(self):
        return len(self.arrival_times)

    @property
    def duration(self) -> float:
        return self.span[1] - self.span[0]


@dataclass
class CorrelationHistogram:
    bin_centers: np.ndarray
    raw_counts: np.ndarray
    g2: np.ndarray
    bin_width: float
    normalization_factor: float

    @property
    def center_index(self) -> int:
        return len(self.bin_centers) // 2

    def wing_mean(self, min_abs_tau: float) -> float:
        """Mean g2 over bins with ``|tau| > min_abs_tau``."""
        sel = np.abs(self.bin_centers) > min_abs_tau
        if not np.any(sel):
            raise ValueError("no bins beyond the requested delay")
        return float(self.g2[sel].mean())


@dataclass(frozen=True)
class EmitterEstimate:
    g2_zero: float
    n_emitters: float
    is_single: bool


def bin_count(window: float, bin_width: float) -> int:
    """Number of bins covering ``[-window, window]``; must be an odd integer."""
    if not (window > 0 and bin_width > 0):
        raise ValueError("window and bin width must be positive")
    ratio = 2.0 * window / bin_width
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(ratio, 1.0):
        raise ValueError(f"2*window/bin_width = {ratio:g} is not an integer bin count")
    if n % 2 == 0:
        raise ValueError(
            f"2*window/bin_width = {n} bins is even; no bin would be centred on tau=0 "
            f"(try window={window + bin_width / 2:g})"
        )
    return n


def odd_window(window: float, bin_width: float) -> float:
    """Smallest window >= ``window`` that yields an odd bin count."""
    n = math.ceil(2.0 * window / bin_width - 1e-9)
    if n % 2 == 0:
        n += 1
    # trim binary noise such as 150.20000000000002 so reports read cleanly
    return float(f"{n * bin_width / 2.0:.12g}")


def _count_pairs(a: np.ndarray, b: np.ndarray, bin_width: float, half: int) -> np.ndarray:
    """Histogram of ``rint((t_b - t_a)/bin_width)`` over ``[-half, half]``.

    Rounding to the nearest bin centre with round-half-even is odd-symmetric,
    which makes ``counts(a, b)`` the exact mirror of ``counts(b, a)``.
    """
    counts = np.zeros(2 * half + 1, dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        return counts
    reach = (half + 1) * bin_width
    lo = np.searchsorted(b, a - reach, side="left")
    hi = np.searchsorted(b, a + reach, side="right")
    n_in = hi - lo
    active = np.nonzero(n_in > 0)[0]
    j = 0
    while len(active):
        idx = lo[active] + j
        k = np.rint((b[idx] - a[active]) / bin_width)
        ok = np.abs(k) <= half
        counts += np.bincount((k[ok] + half).astype(np.int64), minlength=2 * half + 1)
        j += 1
        active = active[n_in[active] > j]
    return counts


def correlate(
    a: TimestampSeries,
    b: TimestampSeries,
    window: float,
    bin_width: float,
    *,
    workers: int = 1,
) -> CorrelationHistogram:
    """Cross-correlation histogram of ``tau = t_b - t_a`` and its g2 normalisation.

    Bins are centred on ``k * bin_width`` for ``|k| <= (n-1)/2`` where
    ``n = 2*window/bin_width`` must be odd.  Only events inside the overlap
    of the two acquisition spans are used, and
    ``g2 = counts / (rate_a * rate_b * bin_width * T_overlap)``.

    ``workers > 1`` splits channel A across threads; integer histograms
    are summed so the result is identical to the serial one.
    """
    n_bins = bin_count(window, bin_width)
    half = n_bins // 2
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty timestamp series")
    t0 = max(a.span[0], b.span[0])
    t1 = min(a.span[1], b.span[1])
    overlap = t1 - t0
    if overlap <= 0:
        raise ValueError("timestamp series do not overlap in time")
    ta = a.arrival_times
    tb = b.arrival_times
    ta = ta[(ta >= t0) & (ta <= t1)]
    tb = tb[(tb >= t0) & (tb <= t1)]
    if len(ta) == 0 or len(tb) == 0:
        raise ValueError("no events inside the overlapping span")

    if workers > 1 and len(ta) > 1:
        chunks = np.array_split(ta, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _count_pairs(c, tb, bin_width, half), chunks))
        counts = np.sum(parts, axis=0, dtype=np.int64)
    else:
        counts = _count_pairs(ta, tb, bin_width, half)

    rate_a = len(ta) / overlap
    rate_b = len(tb) / overlap
    norm = rate_a * rate_b * bin_width * overlap
    centers = np.arange(-half, half + 1) * bin_width
    return CorrelationHistogram(centers, counts, counts / norm, float(bin_width), float(norm))


def g2_zero(hist: CorrelationHistogram, smoothing_bins: int = 3) -> float:
    """Mean of g2 over ``smoothing_bins`` bins centred on tau = 0."""
    n = len(hist.g2)
    if (
        not isinstance(smoothing_bins, (int, np.integer))
        or smoothing_bins < 1
        or smoothing_bins % 2 == 0
        or smoothing_bins > n / 4
    ):
        raise ValueError(f"smoothing_bins must be an odd integer in [1, {n // 4}], got {smoothing_bins!r}")
    c = hist.center_index
    h = smoothing_bins // 2
    return float(np.mean(hist.g2[c - h: c + h + 1]))


def emitter_count(g2_0: float) -> EmitterEstimate:
    """Invert ``g2(0) = 1 - 1/n``; single-emitter character requires ``g2(0) < 0.5``."""
    if not (g2_0 >= 0):
        raise ValueError(f"g2(0) must be non-negative, got {g2_0!r}")
    n = 1.0 / (1.0 - g2_0) if g2_0 < 1.0 else math.inf
    return EmitterEstimate(float(g2_0), n, bool(g2_0 < 0.5))
