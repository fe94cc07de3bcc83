"""Empirical regularity of simulated fields.

Hoelder exponents are read off log-log fits of increment sizes against the
lag.  For each lag, increments are averaged over replicas and the worst
position along the pooled axis is kept, so the fit tracks the Hoelder
(supremum) behaviour rather than the typical one: sqrt(t) sampled from t = 0
reports 1/2, not the 1 its mean increment would suggest.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import SpaceTimeField, pad_boundary
from .spectral import eigenvalues, sine_transform


# --- parabolic Hoelder norm ----------------------------------------------

def parabolic_distance(t1, x1, t2, x2):
    return np.maximum(np.sqrt(np.abs(t1 - t2)), np.abs(x1 - x2))


def _exhaustive_seminorm(values, t, x, beta, chunk=4096):
    tt, xx = np.meshgrid(t, x, indexing="ij")
    pts_t, pts_x, pts_v = tt.ravel(), xx.ravel(), values.ravel()
    best = 0.0
    n = pts_v.size
    for start in range(0, n, chunk):
        i = np.arange(start, min(start + chunk, n))
        # pairs (i, j) with j > i
        dv = np.abs(pts_v[i, None] - pts_v[None, :])
        d = parabolic_distance(pts_t[i, None], pts_x[i, None], pts_t[None, :], pts_x[None, :])
        mask = np.arange(n)[None, :] > i[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(mask & (d > 0), dv / d**beta, 0.0)
        best = max(best, float(q.max(initial=0.0)))
    return best


def _sampled_seminorm(values, t, x, beta, samples_per_decade, rng):
    nt, nx = values.shape
    dt = t[1] - t[0] if nt > 1 else 0.0
    dx = x[1] - x[0] if nx > 1 else 0.0
    d_min = min(d for d in (math.sqrt(dt), dx) if d > 0)
    d_max = max(math.sqrt(t[-1] - t[0]), x[-1] - x[0])
    lo = math.floor(math.log10(d_min))
    hi = math.ceil(math.log10(d_max))
    best = 0.0
    for dec in range(lo, hi):
        m = samples_per_decade
        d = 10.0 ** rng.uniform(dec, dec + 1, m)
        by_time = rng.random(m) < 0.5
        dt_off = np.where(by_time, d**2, rng.uniform(0, 1, m) * d**2)
        dx_off = np.where(by_time, rng.uniform(0, 1, m) * d, d)
        it = rng.integers(0, nt, m)
        ix = rng.integers(0, nx, m)
        jt = it + np.round(rng.choice([-1, 1], m) * (dt_off / dt if dt else 0)).astype(int)
        jx = ix + np.round(rng.choice([-1, 1], m) * (dx_off / dx if dx else 0)).astype(int)
        ok = (jt >= 0) & (jt < nt) & (jx >= 0) & (jx < nx) & ((jt != it) | (jx != ix))
        it, ix, jt, jx = it[ok], ix[ok], jt[ok], jx[ok]
        if it.size == 0:
            continue
        dist = parabolic_distance(t[it], x[ix], t[jt], x[jx])
        q = np.abs(values[it, ix] - values[jt, jx]) / dist**beta
        best = max(best, float(q.max()))
    return best


def parabolic_holder_norm(values: np.ndarray, t: np.ndarray, x: np.ndarray, beta: float,
                          max_exhaustive_pairs: int = 2_000_000, samples_per_decade: int = 1000,
                          seed: int = 0, return_parts: bool = False):
    """sup|f| + sup |f(t,x) - f(s,y)| / d((t,x),(s,y))^beta on a (time x space) grid.

    Pairs are enumerated exhaustively up to ``max_exhaustive_pairs``; larger
    grids are sampled with ``samples_per_decade`` pairs per decade of
    parabolic distance.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    values = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if values.shape != (t.size, x.size):
        raise ValueError("values must have shape (len(t), len(x))")
    n = values.size
    sup = float(np.max(np.abs(values)))
    if n * (n - 1) // 2 <= max_exhaustive_pairs:
        semi = _exhaustive_seminorm(values, t, x, beta)
        method = "exhaustive"
    else:
        semi = _sampled_seminorm(values, t, x, beta, samples_per_decade, np.random.default_rng(seed))
        method = "sampled"
    if return_parts:
        return {"norm": sup + semi, "sup": sup, "seminorm": semi, "method": method}
    return sup + semi


def field_holder_norm(field: SpaceTimeField, beta: float, **kw):
    """Hoelder norm of a single-replica field on the closed cylinder (boundary zeros included)."""
    if field.values.ndim != 2:
        raise ValueError("expects a single replica")
    return parabolic_holder_norm(field.with_boundary(), field.times.times, field.grid.nodes_with_boundary,
                                 beta, **kw)


# --- exponent estimation --------------------------------------------------

@dataclass
class ExponentEstimate:
    exponent: float
    stderr: float
    raw_slope: float
    scales: list
    mean_abs_increment: list
    fit_window: tuple
    r_squared: float
    degenerate: bool = False
    per_position: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {"exponent": self.exponent, "stderr": self.stderr, "raw_slope": self.raw_slope,
                "scales": self.scales, "mean_abs_increment": self.mean_abs_increment,
                "fit_window": list(self.fit_window), "r_squared": self.r_squared, "degenerate": self.degenerate}

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "mean_abs_increment", "fit_window"])
        window = f"[{self.fit_window[0]:.6g};{self.fit_window[1]:.6g}]"
        for s, m in zip(self.scales, self.mean_abs_increment):
            w.writerow([f"{s:.17g}", f"{m:.17g}", window])
        return buf.getvalue()


def _fit(log_s, log_m):
    A = np.vstack([log_s, np.ones_like(log_s)]).T
    coef, res, *_ = np.linalg.lstsq(A, log_m, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((log_m - pred) ** 2))
    ss_tot = float(np.sum((log_m - log_m.mean()) ** 2))
    k = log_s.size
    se = math.sqrt(ss_res / (k - 2) / np.sum((log_s - log_s.mean()) ** 2)) if k > 2 else 0.0
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), se, r2


def dyadic_lags(step: float, n_points: int, lo_mult: float, hi: float) -> list[int]:
    """Integer lags 2^j with lo_mult*step <= lag*step <= hi and lag < n_points."""
    lags = []
    m = 1
    while m < n_points:
        if m >= lo_mult - 1e-12 and m * step <= hi * (1 + 1e-12):
            lags.append(m)
        m *= 2
    return lags


class IncrementAccumulator:
    """Replica sums of |f(p + m) - f(p)| along the pooled axis, for chunked input.

    Input blocks have shape ``(replica, pooled, position)``.
    """

    def __init__(self, step: float, lags: list[int], min_lags: int = 4):
        if len(lags) < min_lags:
            raise ValueError(f"only {len(lags)} dyadic lags fit the fit window; need >= {min_lags}")
        self.step = step
        self.lags = list(lags)
        self.sums: list[np.ndarray] | None = None
        self.count = 0

    def add(self, f: np.ndarray) -> None:
        parts = [np.abs(f[:, m:, :] - f[:, :-m, :]).sum(axis=0) for m in self.lags]
        if self.sums is None:
            self.sums = parts
        else:
            for acc, p in zip(self.sums, parts):
                acc += p
        self.count += f.shape[0]

    def merge(self, other: "IncrementAccumulator") -> "IncrementAccumulator":
        if other.lags != self.lags or other.step != self.step:
            raise ValueError("accumulators use different lags")
        if other.sums is not None:
            if self.sums is None:
                self.sums = [s.copy() for s in other.sums]
            else:
                for acc, p in zip(self.sums, other.sums):
                    acc += p
            self.count += other.count
        return self

    def estimate(self) -> ExponentEstimate:
        if self.sums is None:
            raise ValueError("no data accumulated")
        stats = np.array([(s / self.count).max(axis=0) for s in self.sums])  # (lag, position)
        return _exponent_from_stats(stats, np.array(self.lags, dtype=float) * self.step)


def _exponent_from_stats(stats: np.ndarray, scales: np.ndarray) -> ExponentEstimate:
    """Median over positions of the log-log slope of the worst mean increment against scale."""
    log_s = np.log(scales)
    slopes, ses, r2s = [], [], []
    for j in range(stats.shape[1]):
        col = stats[:, j]
        if np.all(col > 0):
            s, se, r2 = _fit(log_s, np.log(col))
            slopes.append(s)
            ses.append(se)
            r2s.append(r2)
    window = (float(scales[0]), float(scales[-1]))
    if not slopes:
        return ExponentEstimate(math.nan, math.nan, math.nan, scales.tolist(), [0.0] * len(scales), window,
                                math.nan, degenerate=True)
    raw = float(np.median(slopes))
    with np.errstate(divide="ignore"):
        pooled = np.exp(np.nanmean(np.log(np.where(stats > 0, stats, np.nan)), axis=1))
    return ExponentEstimate(float(np.clip(raw, 0.0, 1.0)), float(np.median(ses)), raw, scales.tolist(),
                            pooled.tolist(), window, float(np.median(r2s)), per_position=slopes)


def _as_replicas(values):
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim == 2:
        v = v[None]
    if v.ndim != 3:
        raise ValueError("expected (time, node) or (replica, time, node) values")
    return v


def time_accumulator(n_levels: int, dt: float, horizon: float | None = None, min_lag_steps: int = 4,
                     max_lag_fraction: float = 1 / 8, min_lags: int = 4) -> IncrementAccumulator:
    horizon = dt * (n_levels - 1) if horizon is None else horizon
    return IncrementAccumulator(dt, dyadic_lags(dt, n_levels, min_lag_steps, max_lag_fraction * horizon), min_lags)


def space_accumulator(n_interior: int, h: float, include_boundary: bool = True, min_sep_steps: int = 2,
                      max_sep: float = 1 / 8, min_lags: int = 4) -> IncrementAccumulator:
    n_points = n_interior + 2 if include_boundary else n_interior
    return IncrementAccumulator(h, dyadic_lags(h, n_points, min_sep_steps, max_sep), min_lags)


def space_block(values: np.ndarray, include_boundary: bool = True, skip_initial: bool = False) -> np.ndarray:
    """Rearrange ``(replica, time, node)`` so that space is the pooled axis."""
    v = _as_replicas(values)
    if skip_initial and v.shape[1] > 1:
        v = v[:, 1:]
    if include_boundary:
        v = pad_boundary(v)
    return np.swapaxes(v, -1, -2)


def estimate_time_exponent(values: np.ndarray, dt: float, horizon: float | None = None,
                           min_lag_steps: int = 4, max_lag_fraction: float = 1 / 8,
                           min_lags: int = 4) -> ExponentEstimate:
    """Hoelder exponent in time, lags tau in [min_lag_steps*dt, max_lag_fraction*T].

    Mean over replicas, worst time origin, median over nodes.
    """
    v = _as_replicas(values)
    acc = time_accumulator(v.shape[1], dt, horizon, min_lag_steps, max_lag_fraction, min_lags)
    acc.add(v)
    return acc.estimate()


def estimate_space_exponent(values: np.ndarray, h: float, include_boundary: bool = True,
                            min_sep_steps: int = 2, max_sep: float = 1 / 8, min_lags: int = 4,
                            skip_initial: bool = False) -> ExponentEstimate:
    """Hoelder exponent in space, separations in [min_sep_steps*h, max_sep].

    ``values`` are interior node values; the Dirichlet zeros are appended
    unless ``include_boundary`` is False.  Mean over replicas, worst
    position, median over time levels.
    """
    v = _as_replicas(values)
    acc = space_accumulator(v.shape[-1], h, include_boundary, min_sep_steps, max_sep, min_lags)
    acc.add(space_block(v, include_boundary, skip_initial))
    return acc.estimate()


# --- Bessel profile --------------------------------------------------------

@dataclass
class BesselProfile:
    a_list: list
    norms: np.ndarray = field(repr=False)  # (a, time level), replica-RMS
    block_ratio: list
    stable: list
    cutoff: float
    cutoff_interpolated: float
    k_top: int

    def as_dict(self):
        return {"a_list": self.a_list, "block_ratio": self.block_ratio, "stable": self.stable,
                "cutoff": self.cutoff, "cutoff_interpolated": self.cutoff_interpolated, "k_top": self.k_top,
                "norm_time_mean": self.norms.mean(axis=1).tolist()}


class SpectrumAccumulator:
    """Replica sums of squared sine coefficients, shape (time level, mode)."""

    def __init__(self):
        self.total = None
        self.count = 0

    def add(self, values: np.ndarray) -> None:
        v = _as_replicas(values)
        part = np.sum(sine_transform(v).coeffs ** 2, axis=0)
        self.total = part if self.total is None else self.total + part
        self.count += v.shape[0]

    def merge(self, other: "SpectrumAccumulator") -> "SpectrumAccumulator":
        if other.total is not None:
            self.total = other.total.copy() if self.total is None else self.total + other.total
            self.count += other.count
        return self

    def mean(self) -> np.ndarray:
        if self.total is None:
            raise ValueError("no data accumulated")
        return self.total / self.count


def bessel_regularity_profile(values: np.ndarray, a_list, k_top: int | None = None, skip_initial: bool = True,
                              negligible: float = 1e-20) -> BesselProfile:
    """H^{a,2} norms per time level and the largest a whose norm settles as k_max doubles.

    Stability compares the energy added by the last doubling k_top/2 -> k_top
    with the energy added by k_top/4 -> k_top/2: the series converges in the
    power-law sense when the later block is smaller (ratio 2^(1-p) for a
    k^-p tail).  Blocks that carry no energy count as stable.
    """
    acc = SpectrumAccumulator()
    acc.add(values)
    return profile_from_spectrum(acc.mean(), a_list, k_top, skip_initial, negligible)


def profile_from_spectrum(power: np.ndarray, a_list, k_top: int | None = None, skip_initial: bool = True,
                          negligible: float = 1e-20) -> BesselProfile:
    n = power.shape[-1]
    k_top = n if k_top is None else k_top
    if k_top > n or k_top < 4:
        raise ValueError("k_top must lie in [4, n_interior]")
    lam = eigenvalues(n)
    pooled = power[1:].mean(axis=0) if (skip_initial and power.shape[0] > 1) else power.mean(axis=0)
    k = np.arange(1, n + 1)
    b1 = (k > k_top // 4) & (k <= k_top // 2)
    b2 = (k > k_top // 2) & (k <= k_top)
    head = k <= k_top
    norms, ratios, stable = [], [], []
    for a in a_list:
        if a < 0:
            raise ValueError("a must be nonnegative")
        w = (1.0 + lam) ** a
        norms.append(np.sqrt(np.sum(w[:k_top] * power[:, :k_top], axis=-1)))
        e1 = float(np.sum(w[b1] * pooled[b1]))
        e2 = float(np.sum(w[b2] * pooled[b2]))
        total = float(np.sum(w[head] * pooled[head]))
        if e2 <= negligible * max(total, 1e-300) or total == 0.0:
            ratios.append(0.0)
            stable.append(True)
        else:
            r = e2 / e1 if e1 > 0 else math.inf
            ratios.append(r)
            stable.append(bool(r < 1.0))
    a_arr = list(map(float, a_list))
    cutoff = max((a for a, s in zip(a_arr, stable) if s), default=math.nan)
    interp = math.nan
    for i in range(len(a_arr) - 1):
        r0, r1 = ratios[i], ratios[i + 1]
        if stable[i] and not stable[i + 1] and r0 > 0 and math.isfinite(r1):
            l0, l1 = math.log2(r0), math.log2(r1)
            interp = a_arr[i] + (0.0 - l0) * (a_arr[i + 1] - a_arr[i]) / (l1 - l0)
            break
    if math.isnan(interp) and all(stable):
        interp = math.inf
    return BesselProfile(a_arr, np.array(norms), ratios, stable, cutoff, interp, k_top)


# --- report ----------------------------------------------------------------

@dataclass
class RegularityReport:
    name: str
    time_exponent: ExponentEstimate | None
    space_exponent: ExponentEstimate | None
    holder_norm: dict | None
    bessel: BesselProfile | None
    metadata: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "field": self.name,
            "time_exponent": self.time_exponent.as_dict() if self.time_exponent else None,
            "space_exponent": self.space_exponent.as_dict() if self.space_exponent else None,
            "holder_norm": self.holder_norm,
            "bessel": self.bessel.as_dict() if self.bessel else None,
            "metadata": self.metadata,
        }
