"""Centered extremal process of the DGFF and the estimators built on it."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize, special, stats

from dgfflab.constants import ALPHA, SQRT_G
from dgfflab.errors import (
    DomainError,
    InsufficientExceedances,
    InsufficientReplicas,
    WindowEmpty,
)


def centering(N, strict: bool = False) -> float:
    """m_N = 2 sqrt(g) ln N - (3/4) sqrt(g) ln ln N.

    For N = 2 the correction term has the wrong sign (ln ln 2 < 0); the raw value
    is returned with a warning unless ``strict`` asks for an error.
    """
    N = np.asarray(N, dtype=float)
    if np.any(N < 2):
        raise DomainError("centering needs N >= 2")
    if np.any(N < 3):
        if strict:
            raise DomainError("ln ln N is not positive for N = 2")
        warnings.warn("ln ln N < 0 at N = 2; returning the raw formula", RuntimeWarning, stacklevel=2)
    out = 2 * SQRT_G * np.log(N) - 0.75 * SQRT_G * np.log(np.log(N))
    return float(out) if out.ndim == 0 else out


def default_radius(N: int) -> int:
    """r_N = floor(N^{1/4})."""
    return max(1, int(math.floor(N**0.25 + 1e-12)))


@dataclass
class ExtremalPointSet:
    positions: np.ndarray  # (n, 2) scaled positions x / N
    heights: np.ndarray  # centered heights h(x) - m_N
    N: int
    r: float
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))
    seed: int | None = None
    stream: int | None = None
    argmax: tuple | None = None
    max_height: float | None = None
    level_set: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.heights)


def ball_offsets(r: float, norm: str = "euclid") -> np.ndarray:
    """Integer offsets z with |z| <= r (Euclidean) or |z|_inf <= r."""
    R = int(math.floor(r))
    I, J = np.meshgrid(np.arange(-R, R + 1), np.arange(-R, R + 1), indexing="ij")
    if norm == "euclid":
        keep = I**2 + J**2 <= r * r + 1e-9
    elif norm == "inf":
        keep = np.ones_like(I, bool)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return np.column_stack([I[keep], J[keep]])


def _footprint(r: float, norm: str) -> np.ndarray:
    off = ball_offsets(r, norm)
    R = int(math.floor(r))
    fp = np.zeros((2 * R + 1, 2 * R + 1), bool)
    fp[off[:, 0] + R, off[:, 1] + R] = True
    return fp


def _grid_of(h) -> tuple[np.ndarray, tuple, int, int | None, int | None]:
    from dgfflab.fields import FieldSample

    if isinstance(h, FieldSample):
        L = h.domain
        grid = np.full(L.mask.shape, -np.inf)
        grid[L.mask] = h.values
        return grid, L.origin, L.N, h.seed, h.stream
    raise TypeError("expected a FieldSample on a LatticeDomain")


def local_maxima_grid(
    grid: np.ndarray, r: float, floor: float | None = None, norm: str = "euclid"
) -> np.ndarray:
    """Indices (i, j) of r-local maxima of a grid (-inf marks vertices outside the domain).

    With ``floor`` only vertices at or above it are examined (the ball test is
    still exact, since a candidate's ball may contain lower vertices).
    """
    fp = _footprint(r, norm)
    if floor is None:
        mx = ndimage.maximum_filter(grid, footprint=fp, mode="constant", cval=-np.inf)
        return np.argwhere((grid >= mx) & np.isfinite(grid))
    cand = np.argwhere(grid >= floor)
    if len(cand) == 0:
        return cand
    R = int(math.floor(r))
    off = ball_offsets(r, norm)
    pad = np.pad(grid, R, constant_values=-np.inf)
    ci = cand[:, 0:1] + R + off[None, :, 0]
    cj = cand[:, 1:2] + R + off[None, :, 1]
    nb = pad[ci, cj]
    ok = grid[cand[:, 0], cand[:, 1]] >= nb.max(axis=1)
    return cand[ok]


def extract_local_maxima(
    h,
    r: float,
    threshold: float | None = None,
    floor: float | None = None,
    norm: str = "euclid",
    m_N: float | None = None,
) -> ExtremalPointSet:
    """Atoms (x/N, h(x) - m_N) of r-local maxima of h.

    ``floor`` restricts to atoms with centered height >= floor; ``threshold`` t
    additionally records Gamma_N(t) = {x : h(x) >= m_N - t}.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    grid, origin, N, seed, stream = _grid_of(h)
    mN = centering(N) if m_N is None else m_N
    finite = np.isfinite(grid)
    if not finite.any():
        return ExtremalPointSet(np.zeros((0, 2)), np.zeros(0), N, r, seed=seed, stream=stream)
    idx = local_maxima_grid(grid, r, None if floor is None else mN + floor, norm)
    vals = grid[idx[:, 0], idx[:, 1]]
    order = np.argsort(-vals, kind="stable")
    idx, vals = idx[order], vals[order]
    verts = idx + np.array(origin)
    k = int(np.argmax(np.where(finite, grid, -np.inf)))
    am = np.unravel_index(k, grid.shape)
    out = ExtremalPointSet(
        positions=verts / N,
        heights=vals - mN,
        N=N,
        r=r,
        vertices=verts,
        seed=seed,
        stream=stream,
        argmax=(int(am[0] + origin[0]), int(am[1] + origin[1])),
        max_height=float(grid[am] - mN),
    )
    if threshold is not None:
        out.level_set = np.argwhere(grid >= mN - threshold) + np.array(origin)
    return out


# ---------------------------------------------------------------------------


@dataclass
class StatReport:
    estimator: str
    params: dict
    estimate: object
    stderr: object
    tolerance: object
    passed: bool

    def to_dict(self) -> dict:
        d = {
            "estimator": self.estimator,
            "params": self.params,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
        }
        return json.loads(json.dumps(d, default=_jsonable))

    @classmethod
    def from_dict(cls, d: dict) -> "StatReport":
        return cls(d["estimator"], d["params"], d["estimate"], d["stderr"], d["tolerance"], bool(d["pass"]))

    def __str__(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        if isinstance(self.params, dict) and "error" in self.params:
            return f"[{flag}] {self.estimator}: {self.params['error']}"
        return f"[{flag}] {self.estimator}: estimate={_fmt(self.estimate)} stderr={_fmt(self.stderr)} tol={_fmt(self.tolerance)}"


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o)}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


# ---------------------------------------------------------------------------
# estimators


def truncated_exponential_mle(h: np.ndarray, t0: float, t1: float) -> tuple[float, float]:
    """Rate beta of the density proportional to exp(-beta h) on [t0, t1], with its stderr."""
    x = np.asarray(h, float) - t0
    w = t1 - t0
    n = len(x)
    mean = x.mean()

    def mean_of(b):
        if abs(b) < 1e-8:
            return w / 2 - b * w * w / 12
        return 1 / b - w / math.expm1(b * w)

    # mean_of is decreasing in b
    b = optimize.brentq(lambda b: mean_of(b) - mean, -200 / w, 200 / w, xtol=1e-13)
    # Fisher information per observation = Var(X) under the fitted law
    if abs(b) < 1e-8:
        var = w * w / 12
    else:
        e = math.exp(-b * w)
        var = 1 / b**2 - w * w * e / (1 - e) ** 2
    return float(b), float(1 / math.sqrt(n * var))


def _intensity_profile(heights, params):
    t0, t1 = params.get("window", (-1.0, 1.5))
    min_atoms = params.get("min_atoms", 1000)
    h = np.asarray(heights, float)
    h = h[(h >= t0) & (h <= t1)]
    if len(h) == 0:
        raise WindowEmpty(f"no atoms in window [{t0}, {t1}]")
    if len(h) < min_atoms:
        raise InsufficientExceedances(f"{len(h)} atoms in window, need {min_atoms}")
    b, se = truncated_exponential_mle(h, t0, t1)
    rel_tol = params.get("rel_tol", 0.10)
    z_tol = params.get("z_tol")
    target = params.get("target", ALPHA)
    ok = abs(b - target) <= (z_tol * se if z_tol is not None else rel_tol * target)
    return StatReport(
        "intensity_profile",
        {"window": [t0, t1], "atoms": int(len(h)), "target": target, **_extra(params, ("N", "r", "replicas"))},
        b,
        se,
        {"z": z_tol} if z_tol is not None else {"relative": rel_tol},
        ok,
    )


def _extra(params, keys):
    return {k: params[k] for k in keys if k in params}


def tail_ratio_estimates(max_heights, thresholds, alpha: float = ALPHA, min_hits: int = 100):
    m = np.asarray(max_heights, float)
    n = len(m)
    est, se, hits = [], [], []
    for t in thresholds:
        k = int(np.sum(m > t))
        if k < min_hits:
            raise InsufficientExceedances(f"{k} exceedances of t={t}, need {min_hits}")
        p = k / n
        f = math.exp(alpha * t) / t
        est.append(f * p)
        se.append(f * math.sqrt(p * (1 - p) / n))
        hits.append(k)
    return np.array(est), np.array(se), hits


def _tail_ratio(max_heights, params):
    ts = list(params.get("thresholds", (1.5, 2.0, 2.5)))
    est, se, hits = tail_ratio_estimates(max_heights, ts, min_hits=params.get("min_hits", 100))
    planted = params.get("planted")
    spread = float(est.max() / est.min())
    if planted is not None:
        planted = np.broadcast_to(np.asarray(planted, float), est.shape)
        z = (est - planted) / se
        ok = bool(np.all(np.abs(z) < params.get("z_tol", 3.0)))
        tol = {"z": params.get("z_tol", 3.0)}
    else:
        ok = spread < params.get("max_ratio", 1.5)
        tol = {"max_over_min": params.get("max_ratio", 1.5)}
    return StatReport(
        "tail_ratio",
        {"thresholds": ts, "hits": hits, "replicas": len(max_heights), "max_over_min": spread,
         **_extra(params, ("N", "r"))},
        est.tolist(),
        se.tolist(),
        tol,
        ok,
    )


def _cell_index(pos, bbox, cells):
    x0, x1, y0, y1 = bbox
    i = np.clip(((pos[:, 0] - x0) / (x1 - x0) * cells).astype(int), 0, cells - 1)
    j = np.clip(((pos[:, 1] - y0) / (y1 - y0) * cells).astype(int), 0, cells - 1)
    return i, j


def _argmax_density(positions, params):
    """Cell frequencies of argmax positions against the normalized psi-integrals per cell."""
    pos = np.asarray(positions, float).reshape(-1, 2)
    cells = params.get("cells", 4)
    bbox = params.get("bbox", (0.0, 1.0, 0.0, 1.0))
    w = np.asarray(params["psi_cells"], float).reshape(cells, cells)
    w = w / w.sum()
    n = len(pos)
    if n < params.get("min_events", 1):
        raise InsufficientExceedances(f"{n} conditioned events")
    i, j = _cell_index(pos, bbox, cells)
    counts = np.zeros((cells, cells))
    np.add.at(counts, (i, j), 1)
    freq = counts / max(n, 1)
    ratio = np.divide(freq, w, out=np.zeros_like(freq), where=w > 0)
    ratio_se = np.sqrt(freq * (1 - freq) / max(n, 1)) / np.where(w > 0, w, 1)
    groups = params.get("groups")
    est = {"cell_ratio": ratio.tolist()}
    ok = True
    tol = params.get("rel_tol", 0.25)
    if groups:
        ga, gb = groups
        fa = sum(freq[a, b] for a, b in ga)
        fb = sum(freq[a, b] for a, b in gb)
        wa = sum(w[a, b] for a, b in ga)
        wb = sum(w[a, b] for a, b in gb)
        emp = fa / fb if fb > 0 else float("inf")
        theo = wa / wb
        # delta-method stderr of a ratio of multinomial frequencies
        se = emp * math.sqrt(max((1 / max(fa * n, 1) + 1 / max(fb * n, 1)), 0.0))
        est.update({"group_ratio": emp, "psi_ratio": theo})
        ok = abs(emp / theo - 1) < tol
        stderr = {"group_ratio": se, "cell_ratio": ratio_se.tolist()}
    else:
        z = (ratio - 1) / np.where(ratio_se > 0, ratio_se, np.inf)
        ok = bool(np.all(np.abs(z) < params.get("z_tol", 4.0)))
        stderr = {"cell_ratio": ratio_se.tolist()}
    return StatReport(
        "argmax_density",
        {"cells": cells, "events": n, **_extra(params, ("N", "threshold"))},
        est,
        stderr,
        {"relative": tol} if groups else {"z": params.get("z_tol", 4.0)},
        bool(ok),
    )


def _max_law_stability(samples, params):
    """Pairwise mean gaps and the Kolmogorov distance between centered-max samples."""
    Ns = params.get("Ns")
    arrays = [np.asarray(s, float) for s in samples]
    means = [float(a.mean()) for a in arrays]
    ses = [float(a.std(ddof=1) / math.sqrt(len(a))) for a in arrays]
    gap = max(means) - min(means)
    ks = stats.ks_2samp(arrays[-2], arrays[-1])
    ok = gap < params.get("mean_tol", 0.5) and ks.statistic < params.get("ks_tol", 0.05)
    return StatReport(
        "max_law_stability",
        {"Ns": Ns, "replicas": [len(a) for a in arrays]},
        {"means": means, "max_mean_gap": gap, "ks_distance": float(ks.statistic), "ks_pvalue": float(ks.pvalue)},
        {"means": ses},
        {"mean_gap": params.get("mean_tol", 0.5), "ks": params.get("ks_tol", 0.05)},
        bool(ok),
    )


def _separation(level_sets, params):
    """Probability that Gamma(t) contains two points at distance in (r, N/r)."""
    N, r = params["N"], params["r"]
    hits = 0
    for pts in level_sets:
        pts = np.asarray(pts, float)
        if len(pts) < 2:
            continue
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        if np.any((d > r) & (d < N / r)):
            hits += 1
    n = len(level_sets)
    p = hits / max(n, 1)
    return StatReport(
        "separation",
        {"N": N, "r": r, "replicas": n},
        p,
        math.sqrt(max(p * (1 - p), 1e-300) / max(n, 1)),
        params.get("tol", 1.0),
        p <= params.get("tol", 1.0),
    )


def _level_set_size(level_sets, params):
    sizes = np.array([len(s) for s in level_sets], float)
    qs = np.quantile(sizes, [0.5, 0.9, 0.99]).tolist() if len(sizes) else [0, 0, 0]
    return StatReport(
        "level_set_size",
        {"replicas": len(sizes), **_extra(params, ("N", "t"))},
        {"mean": float(sizes.mean()) if len(sizes) else 0.0, "quantiles": qs},
        float(sizes.std(ddof=1) / math.sqrt(len(sizes))) if len(sizes) > 1 else 0.0,
        None,
        True,
    )


_MODES = {
    "intensity_profile": _intensity_profile,
    "tail_ratio": _tail_ratio,
    "argmax_density": _argmax_density,
    "max_law_stability": _max_law_stability,
    "separation": _separation,
    "level_set_size": _level_set_size,
}


def extremal_statistics(data, mode: str, params: dict | None = None) -> StatReport:
    """Dispatch an estimator over pooled extremal data.

    ``data`` per mode: centered heights (intensity_profile), centered maxima
    (tail_ratio), argmax positions (argmax_density), a list of centered-max
    samples (max_law_stability), level sets (separation, level_set_size).
    ExtremalPointSet lists are accepted and pooled accordingly.
    """
    params = dict(params or {})
    if mode not in _MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(data, list) and data and isinstance(data[0], ExtremalPointSet):
        if mode == "intensity_profile":
            data = np.concatenate([p.heights for p in data])
        elif mode == "tail_ratio":
            data = np.array([p.max_height for p in data])
        elif mode == "argmax_density":
            data = np.array([np.array(p.argmax) / p.N for p in data])
        elif mode in ("separation", "level_set_size"):
            data = [p.level_set for p in data]
    return _MODES[mode](data, params)


# ---------------------------------------------------------------------------
# synthetic oracles


def synthetic_ppp_heights(rng: np.random.Generator, n_expected: float, t0: float, t1: float, alpha: float = ALPHA):
    """Heights of a Poisson process with intensity proportional to e^{-alpha h} on [t0, t1]."""
    n = rng.poisson(n_expected)
    u = rng.random(n)
    a, b = math.exp(-alpha * t0), math.exp(-alpha * t1)
    return -np.log(a - u * (a - b)) / alpha


def synthetic_cox_maxima(rng: np.random.Generator, n: int, c: float = 1.0, alpha: float = ALPHA):
    """Maxima with P(max <= t) = E exp(-alpha^{-1} e^{-alpha t} Z), Z = c / U (U uniform)."""
    Z = c / rng.random(n)
    E = rng.exponential(size=n)
    # max <= t  iff  E > alpha^{-1} e^{-alpha t} Z
    return np.log(Z / (alpha * E)) / alpha


def cox_tail_prediction(t, c: float = 1.0, alpha: float = ALPHA):
    """Exact t^{-1} e^{alpha t} P(max > t) for the synthetic Cox model above."""
    t = np.asarray(t, float)
    s = c * np.exp(-alpha * t) / alpha
    p = -np.expm1(-s) + s * special.exp1(s)
    return np.exp(alpha * t) / t * p


# ---------------------------------------------------------------------------
# Gibbs-Markov pipeline consistency


def _functional(pts: ExtremalPointSet, spec: dict) -> float:
    kind = spec.get("kind", "max")
    if kind == "max":
        return float(pts.max_height)
    if kind == "count_above":
        lo, hi = spec.get("window", (0.25, 0.75))
        p = pts.positions
        inside = (p[:, 0] > lo) & (p[:, 0] < hi) & (p[:, 1] > lo) & (p[:, 1] < hi)
        return float(np.sum(inside & (pts.heights >= spec.get("level", -2.0))))
    raise ValueError(f"unknown functional {kind!r}")


def gm_consistency_test(
    D,
    Dt,
    N: int,
    r: float | None = None,
    functionals=({"kind": "max"},),
    replicas: int = 500,
    seed: int = 0,
    significance: float = 0.01,
) -> StatReport:
    """Two-sample comparison of extremal functionals: h^D_N directly vs h^{Dt}_N + phi^{D,Dt}_N."""
    from dgfflab.domain import discretize
    from dgfflab.fields import (
        BoxSampler,
        FieldSample,
        GibbsMarkovSampler,
        RngStream,
        sample_dgff,
    )

    if replicas < 20:
        raise InsufficientReplicas("need at least 20 replicas per arm")
    r = default_radius(N) if r is None else r
    L = discretize(D, N)
    U = discretize(Dt, N)
    floor = min(min(f.get("level", -2.0) for f in functionals), -2.0) - 0.5
    same = U.size == L.size
    gm = None if same else GibbsMarkovSampler(L, U)
    direct_box = BoxSampler(L.mask.shape) if L.is_box else None
    vals = {k: ([], []) for k in range(len(functionals))}
    for rep in range(replicas):
        r1 = RngStream(seed, 2 * rep)
        r2 = RngStream(seed, 2 * rep + 1)
        if direct_box is not None:
            h1 = FieldSample(L, direct_box.sample_grid(r1).ravel(), r1.seed, r1.stream)
        else:
            h1 = sample_dgff(L, "auto", r1)
        if gm is None:
            h2 = FieldSample(L, direct_box.sample_grid(r2).ravel() if direct_box else sample_dgff(L, "auto", r2).values)
        else:
            h2 = FieldSample(L, gm.sample(r2), r2.seed, r2.stream)
        for h, side in ((h1, 0), (h2, 1)):
            pts = extract_local_maxima(h, r, floor=floor)
            for k, f in enumerate(functionals):
                vals[k][side].append(_functional(pts, f))
    pvals, statistics = [], []
    for k, f in enumerate(functionals):
        a, b = (np.array(v) for v in vals[k])
        if f.get("kind") == "max":
            res = stats.ks_2samp(a, b)
            pvals.append(float(res.pvalue))
            statistics.append(float(res.statistic))
        else:
            res = stats.mannwhitneyu(a, b, alternative="two-sided")
            pvals.append(float(res.pvalue))
            statistics.append(float(res.statistic))
    ok = all(p > significance for p in pvals)
    return StatReport(
        "gm_consistency",
        {"N": N, "r": r, "replicas": replicas, "functionals": list(functionals), "seed": seed},
        {"statistic": statistics, "pvalue": pvals},
        None,
        {"significance": significance},
        ok,
    )


# ---------------------------------------------------------------------------
# replica campaigns on lattice boxes


@dataclass
class Campaign:
    """Per-replica extremal summaries of DGFF samples on a box."""

    N: int
    r: float
    floor: float
    max_heights: np.ndarray
    argmax: np.ndarray  # (replicas, 2) scaled positions
    atom_heights: np.ndarray  # pooled centered heights of r-local maxima >= floor
    atom_replica: np.ndarray
    atom_positions: np.ndarray
    seed: int = 0

    @property
    def replicas(self) -> int:
        return len(self.max_heights)


def box_campaign(
    N: int,
    replicas: int,
    seed: int = 0,
    r: float | None = None,
    floor: float = -1.0,
    domain=None,
    dtype=np.float32,
    start: int = 0,
) -> Campaign:
    """Sample the DGFF on the discretization of a rectangle (default unit square) and extract extremal data.

    Replica k uses stream ``start + k``; results are independent of batching.
    """
    from dgfflab.domain import ContinuumDomain, discretize
    from dgfflab.fields import BoxSampler, RngStream

    D = domain or ContinuumDomain.unit_square()
    L = discretize(D, N)
    if not L.is_box:
        raise ValueError("box_campaign needs a domain whose discretization is a box")
    r = default_radius(N) if r is None else r
    mN = centering(N)
    sampler = BoxSampler(L.mask.shape, dtype)
    origin = np.array(L.origin)
    maxes = np.empty(replicas)
    am = np.empty((replicas, 2))
    hs, reps, poss = [], [], []
    for k in range(replicas):
        grid = sampler.sample_grid(RngStream(seed, start + k))
        flat = int(np.argmax(grid))
        i, j = divmod(flat, grid.shape[1])
        top = float(grid[i, j])
        maxes[k] = top - mN
        am[k] = (np.array([i, j]) + origin) / N
        if top - mN >= floor:
            idx = local_maxima_grid(grid, r, mN + floor)
            vals = grid[idx[:, 0], idx[:, 1]].astype(float) - mN
            hs.append(vals)
            reps.append(np.full(len(vals), start + k))
            poss.append((idx + origin) / N)
    cat = lambda a, shape: np.concatenate(a) if a else np.zeros(shape)  # noqa: E731
    return Campaign(
        N, r, floor, maxes, am, cat(hs, (0,)), cat(reps, (0,)).astype(int), cat(poss, (0, 2)), seed
    )


def merge_campaigns(parts) -> Campaign:
    parts = list(parts)
    p0 = parts[0]
    return Campaign(
        p0.N,
        p0.r,
        p0.floor,
        np.concatenate([p.max_heights for p in parts]),
        np.vstack([p.argmax for p in parts]),
        np.concatenate([p.atom_heights for p in parts]),
        np.concatenate([p.atom_replica for p in parts]),
        np.vstack([p.atom_positions for p in parts]),
        p0.seed,
    )
