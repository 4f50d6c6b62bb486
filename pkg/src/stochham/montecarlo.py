"""Seeded parallel ensembles and rare-event estimators.

Every estimator here is a pure function of (spec, seed): run i of an ensemble
draws its increments from a counter-based stream keyed by (master_seed, i),
chunking is a fixed function of the spec, and reductions run in run-index
order, so results are bit-identical for any worker-thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import gaussian_kde

from .integrators import BLOWUP_LIMIT, DiscretePath, NoiseStream, TimeGrid
from .models import DiffusionSchedule, HamiltonianModel, PhaseState
from .pathspace import HolderConfig, holder_seminorm, path_derivative

__all__ = [
    "EnsembleSpec",
    "EnsembleResult",
    "TubeSpec",
    "TubeEstimate",
    "DensityEstimate",
    "ScalingFit",
    "run_ensemble",
    "hamiltonian_density",
    "tube_probability",
    "girsanov_tube_probability",
    "ldp_scan",
    "small_ball_probabilities",
    "small_ball_exponent",
    "torus_deviation",
    "action_deviation_scan",
]

OBSERVABLES = ("energy", "state", "distance")

# per-chunk memory budget for full-path buffers, in floats
_CHUNK_BUDGET = 8_000_000
_DEFAULT_CHUNK = 256
_LOG_WEIGHT_CLAMP = 700.0


@dataclass(frozen=True)
class EnsembleSpec:
    """Protocol for one reproducible ensemble."""

    model: HamiltonianModel
    diffusion: DiffusionSchedule
    x0: PhaseState
    grid: TimeGrid
    n_runs: int
    master_seed: int
    sample_times: Optional[np.ndarray] = None  # None = all grid times
    observables: tuple[str, ...] = ("energy",)
    reference: Optional[DiscretePath] = None  # for the distance observable

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        bad = set(self.observables) - set(OBSERVABLES)
        if bad:
            raise ValueError(f"unknown observables: {sorted(bad)}")
        if "distance" in self.observables and self.reference is None:
            raise ValueError("distance observable needs a reference path")

    def sample_indices(self) -> np.ndarray:
        times = self.grid.times
        if self.sample_times is None:
            return np.arange(times.size)
        wanted = np.asarray(self.sample_times, float)
        idx = np.rint((wanted - self.grid.t0) / self.grid.dt).astype(int)
        if np.any(idx < 0) or np.any(idx > self.grid.n_steps):
            raise ValueError("sample_times outside the grid")
        if not np.allclose(times[idx], wanted, rtol=0.0, atol=1e-9 * max(1.0, abs(self.grid.t1))):
            raise ValueError("sample_times must coincide with grid points")
        return idx


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    sample_times: np.ndarray
    tables: dict  # observable -> (n_runs, n_samples[, 2n]) arrays
    terminal_states: np.ndarray  # (n_runs, 2n)
    excluded_runs: list[int]
    summaries: dict = field(default_factory=dict)

    @property
    def n_valid(self) -> int:
        return self.spec.n_runs - len(self.excluded_runs)

    def valid_mask(self) -> np.ndarray:
        mask = np.ones(self.spec.n_runs, dtype=bool)
        mask[self.excluded_runs] = False
        return mask


@dataclass(frozen=True)
class TubeSpec:
    """Norm ball of the given radius around a reference path."""

    reference: DiscretePath
    radius: float
    norm: str = "sup"  # "sup" | "holder"
    holder: Optional[HolderConfig] = None
    noise_intensity: Optional[float] = None  # None = diffusion's own

    def __post_init__(self):
        if self.radius < 0.0:
            raise ValueError("radius must be >= 0")
        if self.norm not in ("sup", "holder"):
            raise ValueError("norm must be 'sup' or 'holder'")
        if self.norm == "holder" and self.holder is None:
            raise ValueError("holder norm needs a HolderConfig")


@dataclass
class TubeEstimate:
    p_hat: float
    stderr: float
    n_runs: int
    hits: int
    excluded_runs: int = 0
    clamped_runs: int = 0
    method: str = "plain"


@dataclass
class DensityEstimate:
    bin_edges: np.ndarray
    counts: np.ndarray
    mode: float
    mode_density: float
    n_samples: int
    kde_grid: Optional[np.ndarray] = None
    kde_density: Optional[np.ndarray] = None
    bandwidth: Optional[float] = None


@dataclass
class ScalingFit:
    """Scan table plus an unweighted least-squares line through (x, y)."""

    x: np.ndarray
    p_hat: np.ndarray
    stderr: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r2: float
    excluded: list[dict] = field(default_factory=list)
    x_label: str = "x"
    y_label: str = "y"

    def monotone(self, direction: str) -> bool:
        """True when y is nonincreasing/nondecreasing along increasing x."""
        dy = np.diff(self.y)
        if direction == "nonincreasing":
            return bool(np.all(dy <= 0.0))
        if direction == "nondecreasing":
            return bool(np.all(dy >= 0.0))
        raise ValueError("direction must be 'nonincreasing' or 'nondecreasing'")


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if x.size < 3:
        return math.nan, math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def _binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else math.nan


# ---------------------------------------------------------------------------
# chunked, thread-parallel ensembles
# ---------------------------------------------------------------------------

def _chunk_size(n_steps: int, width: int, needs_paths: bool) -> int:
    if not needs_paths:
        return _DEFAULT_CHUNK
    per_run = (n_steps + 1) * width
    return max(1, min(_DEFAULT_CHUNK, _CHUNK_BUDGET // max(per_run, 1)))


def _chunk_bounds(n_runs: int, chunk: int):
    return [(lo, min(lo + chunk, n_runs)) for lo in range(0, n_runs, chunk)]


def _block_normals(gens: list, n_steps: int, channels: int) -> np.ndarray:
    return np.stack([g.standard_normal((n_steps, channels)) for g in gens])


def _integrate_chunk(model, diffusion, x0, grid, master_seed, lo, hi,
                     sample_idx, want_energy, want_state, ref=None,
                     track_sup=False, keep_paths=False, actions_fn=None,
                     actions_ref=None):
    """Integrate runs lo..hi-1 and collect per-run outputs.

    Returns a dict with keys among energy/state/distance/supdist/paths/
    actdev/terminal/bad, each leading with the chunk axis.
    """
    n = model.dim
    dt = grid.dt
    times = grid.times
    n_steps = grid.n_steps
    eps2 = diffusion.noise_intensity
    runs = hi - lo
    gens = [NoiseStream(master_seed, r).generator() for r in range(lo, hi)]
    sqrt_dt = math.sqrt(dt)

    q = np.tile(x0.q, (runs, 1))
    p = np.tile(x0.p, (runs, 1))
    alive = np.ones(runs, dtype=bool)
    bad_step = np.full(runs, -1, dtype=int)

    sample_set = {int(k): j for j, k in enumerate(sample_idx)}
    n_samp = len(sample_idx)
    energy = np.full((runs, n_samp), np.nan) if want_energy else None
    state = np.full((runs, n_samp, 2 * n), np.nan) if want_state else None
    dist = np.full((runs, n_samp), np.nan) if ref is not None else None
    supdist = np.zeros(runs) if track_sup else None
    paths = np.full((runs, n_steps + 1, 2 * n), np.nan) if keep_paths else None
    actdev = np.zeros(runs) if actions_fn is not None else None

    def record(k):
        j = sample_set.get(k)
        if j is None:
            return
        if want_energy:
            energy[alive, j] = model.energy(times[k], q, p)[alive]
        if want_state:
            state[alive, j, :n] = q[alive]
            state[alive, j, n:] = p[alive]
        if dist is not None:
            d = np.maximum(
                np.max(np.abs(q - ref.q[k][None, :]), axis=1),
                np.max(np.abs(p - ref.p[k][None, :]), axis=1),
            )
            dist[alive, j] = d[alive]

    def track(k):
        if track_sup:
            d = np.maximum(
                np.max(np.abs(q - ref.q[k][None, :]), axis=1),
                np.max(np.abs(p - ref.p[k][None, :]), axis=1),
            )
            np.maximum(supdist, np.where(alive, d, 0.0), out=supdist)
        if keep_paths:
            paths[alive, k, :n] = q[alive]
            paths[alive, k, n:] = p[alive]
        if actions_fn is not None:
            dev = np.max(np.abs(actions_fn(q, p) - actions_ref[None, :]), axis=1)
            np.maximum(actdev, np.where(alive, dev, 0.0), out=actdev)

    record(0)
    track(0)
    block = 1024
    with np.errstate(all="ignore"):
        for start in range(0, n_steps, block):
            stop = min(start + block, n_steps)
            dw = _block_normals(gens, stop - start, 2 * n) * sqrt_dt
            for k in range(start, stop):
                t = times[k]
                sq, sp = diffusion.entries(t)
                q = q + model.grad_p(t, q, p) * dt + eps2 * sq * dw[:, k - start, :n]
                p = p - model.grad_q(t, q, p) * dt + eps2 * sp * dw[:, k - start, n:]
                mag = np.max(np.abs(np.concatenate([q, p], axis=1)), axis=1)
                newly_bad = alive & ~(np.isfinite(mag) & (mag <= BLOWUP_LIMIT))
                if np.any(newly_bad):
                    bad_step[newly_bad] = k + 1
                    alive &= ~newly_bad
                    q[newly_bad] = np.nan
                    p[newly_bad] = np.nan
                record(k + 1)
                track(k + 1)

    terminal = np.concatenate([q, p], axis=1)
    if track_sup:
        supdist[~alive] = np.nan
    if actions_fn is not None:
        actdev[~alive] = np.nan
    return {
        "energy": energy,
        "state": state,
        "distance": dist,
        "supdist": supdist,
        "paths": paths,
        "actdev": actdev,
        "terminal": terminal,
        "bad": bad_step,
    }


def _run_chunks(model, diffusion, x0, grid, master_seed, n_runs, threads,
                needs_paths=False, **kwargs):
    chunk = _chunk_size(grid.n_steps, 2 * model.dim, needs_paths)
    bounds = _chunk_bounds(n_runs, chunk)

    def work(b):
        lo, hi = b
        return lo, hi, _integrate_chunk(model, diffusion, x0, grid, master_seed,
                                        lo, hi, **kwargs)

    if threads <= 1 or len(bounds) == 1:
        results = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, bounds))
    results.sort(key=lambda r: r[0])
    return results


def run_ensemble(spec: EnsembleSpec, threads: int = 1) -> EnsembleResult:
    """Integrate n_runs independent paths and collect the requested observables.

    Runs that blow up are excluded from the tables and counted, never silently
    dropped.
    """
    sample_idx = spec.sample_indices()
    want_energy = "energy" in spec.observables
    want_state = "state" in spec.observables
    ref = spec.reference if "distance" in spec.observables else None
    if ref is not None and ref.grid.n_steps != spec.grid.n_steps:
        raise ValueError("reference path grid disagrees with ensemble grid")

    n = spec.model.dim
    n_samp = sample_idx.size
    tables: dict[str, np.ndarray] = {}
    if want_energy:
        tables["energy"] = np.full((spec.n_runs, n_samp), np.nan)
    if want_state:
        tables["state"] = np.full((spec.n_runs, n_samp, 2 * n), np.nan)
    if ref is not None:
        tables["distance"] = np.full((spec.n_runs, n_samp), np.nan)
    terminal = np.full((spec.n_runs, 2 * n), np.nan)
    bad_step = np.full(spec.n_runs, -1, dtype=int)

    for lo, hi, out in _run_chunks(
        spec.model, spec.diffusion, spec.x0, spec.grid, spec.master_seed,
        spec.n_runs, threads,
        sample_idx=sample_idx, want_energy=want_energy, want_state=want_state,
        ref=ref,
    ):
        if want_energy:
            tables["energy"][lo:hi] = out["energy"]
        if want_state:
            tables["state"][lo:hi] = out["state"]
        if ref is not None:
            tables["distance"][lo:hi] = out["distance"]
        terminal[lo:hi] = out["terminal"]
        bad_step[lo:hi] = out["bad"]

    excluded = [int(i) for i in np.nonzero(bad_step >= 0)[0]]
    valid = np.ones(spec.n_runs, dtype=bool)
    valid[excluded] = False
    summaries = {}
    for name, table in tables.items():
        flat = table[valid].reshape(-1)
        flat = flat[np.isfinite(flat)]
        if flat.size:
            summaries[name] = {
                "mean": float(flat.mean()),
                "var": float(flat.var()),
                "min": float(flat.min()),
                "max": float(flat.max()),
            }
    times = spec.grid.times[sample_idx]
    return EnsembleResult(spec, times, tables, terminal, excluded, summaries)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def hamiltonian_density(result: EnsembleResult, binning="fd",
                        kde: bool = True, kde_grid_size: int = 512) -> DensityEstimate:
    """Histogram and kernel-density mode of the pooled energy samples."""
    if "energy" not in result.tables:
        raise ValueError("ensemble has no energy observable")
    samples = result.tables["energy"][result.valid_mask()].reshape(-1)
    samples = samples[np.isfinite(samples)]
    if samples.size == 0:
        raise ValueError("no energy samples available")

    spread = float(samples.max() - samples.min())
    if spread == 0.0:
        v = float(samples[0])
        pad = max(abs(v), 1.0) * 1e-6
        edges = np.array([v - pad, v + pad])
        counts = np.array([samples.size])
        return DensityEstimate(edges, counts, mode=v, mode_density=0.5 / pad,
                               n_samples=samples.size)

    if binning == "fd":
        counts, edges = np.histogram(samples, bins="fd")
    else:
        counts, edges = np.histogram(samples, bins=int(binning))

    if kde:
        density = gaussian_kde(samples, bw_method="silverman")
        lo, hi = samples.min(), samples.max()
        grid = np.linspace(lo, hi, kde_grid_size)
        vals = density(grid)
        j = int(np.argmax(vals))
        mode, mode_density = float(grid[j]), float(vals[j])
        bandwidth = float(density.factor * samples.std(ddof=1))
        return DensityEstimate(edges, counts, mode, mode_density, samples.size,
                               kde_grid=grid, kde_density=vals, bandwidth=bandwidth)

    j = int(np.argmax(counts))
    mode = 0.5 * (edges[j] + edges[j + 1])
    width = edges[j + 1] - edges[j]
    return DensityEstimate(edges, counts, float(mode),
                           float(counts[j] / (samples.size * width)), samples.size)


# ---------------------------------------------------------------------------
# tube probabilities
# ---------------------------------------------------------------------------

def _tube_diffusion(spec: EnsembleSpec, tube: TubeSpec) -> DiffusionSchedule:
    if tube.noise_intensity is None:
        return spec.diffusion
    return spec.diffusion.with_intensity(tube.noise_intensity)


def _holder_distances(paths: np.ndarray, ref: DiscretePath, cfg: HolderConfig) -> np.ndarray:
    times = ref.times
    out = np.empty(paths.shape[0])
    for i in range(paths.shape[0]):
        diff = paths[i] - ref.states
        if not np.all(np.isfinite(diff)):
            out[i] = np.nan
            continue
        out[i] = float(np.max(np.abs(diff))) + holder_seminorm(
            diff, times, cfg.alpha, cfg.pair_budget
        )
    return out


def tube_probability(spec: EnsembleSpec, tube: TubeSpec, threads: int = 1) -> TubeEstimate:
    """Fraction of runs staying within the tube, with binomial standard error."""
    if tube.reference.grid.n_steps != spec.grid.n_steps:
        raise ValueError("tube reference grid disagrees with ensemble grid")
    diffusion = _tube_diffusion(spec, tube)
    use_holder = tube.norm == "holder"
    dists = np.full(spec.n_runs, np.nan)
    for lo, hi, out in _run_chunks(
        spec.model, diffusion, spec.x0, spec.grid, spec.master_seed,
        spec.n_runs, threads, needs_paths=use_holder,
        sample_idx=np.array([], dtype=int), want_energy=False, want_state=False,
        ref=tube.reference, track_sup=not use_holder, keep_paths=use_holder,
    ):
        if use_holder:
            dists[lo:hi] = _holder_distances(out["paths"], tube.reference, tube.holder)
        else:
            dists[lo:hi] = out["supdist"]
    finite = np.isfinite(dists)
    n_valid = int(finite.sum())
    hits = int(np.sum(dists[finite] <= tube.radius))
    p = hits / n_valid if n_valid else math.nan
    return TubeEstimate(p, _binomial_stderr(p, n_valid), n_valid, hits,
                        excluded_runs=spec.n_runs - n_valid)


def girsanov_tube_probability(spec: EnsembleSpec, tube: TubeSpec,
                              threads: int = 1) -> TubeEstimate:
    """Tube probability under the reference-path tilt.

    Paths are simulated as y = phi + eps2 * W^sigma (the drift-free picture in
    which the tube event is explicit) and reweighted with the exponential
    change-of-measure factor, so the estimator matches the plain one in
    expectation.  Log-weights beyond the overflow clamp are clamped and the
    count reported.
    """
    ref = tube.reference
    grid = spec.grid
    if ref.grid.n_steps != grid.n_steps:
        raise ValueError("tube reference grid disagrees with ensemble grid")
    model = spec.model
    n = model.dim
    diffusion = _tube_diffusion(spec, tube)
    eps2 = diffusion.noise_intensity
    if eps2 <= 0.0:
        raise ValueError("girsanov tilting needs a positive noise intensity")
    dt = grid.dt
    times = grid.times
    dphi = path_derivative(ref.states, dt)
    energy = float(np.sum(np.diff(ref.states, axis=0) ** 2) / dt)
    if not math.isfinite(energy):
        raise ValueError("reference path has infinite derivative energy")

    sq_all, sp_all = diffusion.entries(times)  # (N+1, n)
    chunk = _chunk_size(grid.n_steps, 2 * n, True)
    bounds = _chunk_bounds(spec.n_runs, chunk)
    weights = np.empty(spec.n_runs)
    inside = np.empty(spec.n_runs, dtype=bool)
    clamped = np.zeros(spec.n_runs, dtype=bool)

    use_holder = tube.norm == "holder"

    def work(b):
        lo, hi = b
        runs = hi - lo
        gens = [NoiseStream(spec.master_seed, r).generator() for r in range(lo, hi)]
        dw = _block_normals(gens, grid.n_steps, 2 * n) * math.sqrt(dt)
        # W^sigma at nodes: cumulative sigma(t_k) dW_k
        sdw = np.empty_like(dw)
        sdw[:, :, :n] = sq_all[None, :-1, :] * dw[:, :, :n]
        sdw[:, :, n:] = sp_all[None, :-1, :] * dw[:, :, n:]
        wsig = np.concatenate(
            [np.zeros((runs, 1, 2 * n)), np.cumsum(sdw, axis=1)], axis=1
        )
        dev = eps2 * wsig  # y - phi at every node
        if use_holder:
            cfg = tube.holder
            d = np.empty(runs)
            for i in range(runs):
                d[i] = float(np.max(np.abs(dev[i]))) + holder_seminorm(
                    dev[i], times, cfg.alpha, cfg.pair_budget
                )
        else:
            d = np.max(np.abs(dev), axis=(1, 2))
        ind = d <= tube.radius

        s1 = np.zeros(runs)
        s2 = np.zeros(runs)
        for k in range(grid.n_steps):
            yq = ref.q[k][None, :] + dev[:, k, :n]
            yp = ref.p[k][None, :] + dev[:, k, n:]
            t = times[k]
            aq = (model.grad_p(t, yq, yp) - dphi[k, :n][None, :]) / sq_all[k][None, :]
            ap = (model.grad_q(t, yq, yp) + dphi[k, n:][None, :]) / sp_all[k][None, :]
            s1 += np.sum(aq * dw[:, k, :n], axis=1) - np.sum(ap * dw[:, k, n:], axis=1)
            s2 += (np.sum(aq * aq, axis=1) + np.sum(ap * ap, axis=1)) * dt
        logw = s1 / eps2 - s2 / (2.0 * eps2 * eps2)
        clamp = logw > _LOG_WEIGHT_CLAMP
        w = np.exp(np.minimum(logw, _LOG_WEIGHT_CLAMP))
        return lo, hi, w, ind, clamp

    if threads <= 1 or len(bounds) == 1:
        results = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, bounds))
    for lo, hi, w, ind, clamp in sorted(results, key=lambda r: r[0]):
        weights[lo:hi] = w
        inside[lo:hi] = ind
        clamped[lo:hi] = clamp

    vals = weights * inside
    p = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(spec.n_runs)) if spec.n_runs > 1 else math.nan
    return TubeEstimate(p, stderr, spec.n_runs, int(inside.sum()),
                        clamped_runs=int(clamped.sum()), method="girsanov")


# ---------------------------------------------------------------------------
# scaling scans
# ---------------------------------------------------------------------------

def ldp_scan(spec: EnsembleSpec, tube: TubeSpec, eps2_list: Sequence[float],
             threads: int = 1) -> ScalingFit:
    """Tube probabilities across noise intensities, on large-deviation axes.

    Abscissa eps2^2, ordinate eps2^2 ln(p_hat); the intercept of the fitted
    line estimates the negated infimum of the rate function over the tube.
    """
    eps2_list = list(eps2_list)
    if len(eps2_list) < 3:
        raise ValueError("need at least 3 intensities")
    rows = []
    excluded = []
    for eps2 in sorted(eps2_list, reverse=True):
        est = tube_probability(
            spec, TubeSpec(tube.reference, tube.radius, tube.norm, tube.holder, eps2),
            threads=threads,
        )
        if est.p_hat <= 0.0 or not math.isfinite(est.p_hat):
            excluded.append({"eps2": eps2, "reason": "zero hits", "n": est.n_runs})
            continue
        rows.append((eps2 * eps2, est.p_hat, est.stderr,
                     eps2 * eps2 * math.log(est.p_hat)))
    arr = np.array(rows) if rows else np.zeros((0, 4))
    slope, intercept, r2 = _fit_line(arr[:, 0], arr[:, 3])
    return ScalingFit(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                      slope, intercept, r2, excluded,
                      x_label="eps2^2", y_label="eps2^2 ln p")


def small_ball_probabilities(alpha: float, thresholds: Sequence[float],
                             n_runs: int, seed: int, n_steps: int = 512,
                             channels: int = 1, sigma: Optional[Callable] = None,
                             norm: str = "holder",
                             pair_budget: int = 2_000_000) -> tuple[np.ndarray, np.ndarray]:
    """P(||W^sigma|| <= threshold) for Brownian paths on [0, 1].

    Returns (p_hat, stderr) per threshold, all estimated from one simulated
    batch of paths.  ``sigma`` optionally maps step times to per-channel
    diagonal factors.
    """
    if norm not in ("holder", "sup"):
        raise ValueError("norm must be 'holder' or 'sup'")
    if norm == "holder" and not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    dt = 1.0 / n_steps
    t_left = np.linspace(0.0, 1.0, n_steps + 1)[:-1]
    factors = None
    if sigma is not None:
        factors = np.broadcast_to(np.asarray(sigma(t_left), float),
                                  (n_steps, channels))
    norms = np.empty(n_runs)
    chunk = max(1, min(4096, _CHUNK_BUDGET // ((n_steps + 1) * channels)))
    lags = _holder_lags(n_steps + 1, pair_budget)
    pos = 0
    for lo, hi in _chunk_bounds(n_runs, chunk):
        runs = hi - lo
        gens = [NoiseStream(seed, r).generator() for r in range(lo, hi)]
        dw = _block_normals(gens, n_steps, channels) * math.sqrt(dt)
        if factors is not None:
            dw = dw * factors[None, :, :]
        w = np.concatenate(
            [np.zeros((runs, 1, channels)), np.cumsum(dw, axis=1)], axis=1
        )
        sup = np.max(np.abs(w), axis=(1, 2))
        if norm == "sup":
            norms[lo:hi] = sup
        else:
            norms[lo:hi] = sup + _holder_seminorm_batch(w, dt, alpha, lags)
        pos = hi
    assert pos == n_runs
    p = np.array([np.mean(norms <= c) for c in thresholds])
    se = np.array([_binomial_stderr(float(pi), n_runs) for pi in p])
    return p, se


def _holder_lags(n_nodes: int, pair_budget: int) -> np.ndarray:
    stride = 1
    if n_nodes > 2000:
        from .pathspace import holder_pair_stride

        stride = holder_pair_stride(n_nodes, pair_budget)
    return np.arange(stride, n_nodes, stride)


def _holder_seminorm_batch(w: np.ndarray, dt: float, alpha: float,
                           lags: np.ndarray) -> np.ndarray:
    """Hölder semi-norm per run for paths w of shape (runs, nodes, channels)."""
    runs = w.shape[0]
    best = np.zeros(runs)
    for lag in lags:
        diff = np.max(np.abs(w[:, lag:, :] - w[:, :-lag, :]), axis=(1, 2))
        np.maximum(best, diff / (lag * dt) ** alpha, out=best)
    return best


def small_ball_exponent(alpha: float, eps_list: Sequence[float], n_runs: int,
                        seed: int, n_steps: int = 512, channels: int = 1,
                        sigma: Optional[Callable] = None) -> ScalingFit:
    """Fit log(-log p) against log eps and compare with the -2/(1-2 alpha) law."""
    eps_arr = np.asarray(sorted(eps_list), float)
    p, se = small_ball_probabilities(alpha, eps_arr, n_runs, seed,
                                     n_steps=n_steps, channels=channels, sigma=sigma)
    rows = []
    excluded = []
    for eps, pi, sei in zip(eps_arr, p, se):
        if pi <= 0.0:
            excluded.append({"eps": float(eps), "reason": "zero hits", "n": n_runs})
            continue
        if pi >= 1.0:
            excluded.append({"eps": float(eps), "reason": "all hits", "n": n_runs})
            continue
        rows.append((math.log(eps), float(pi), float(sei),
                     math.log(-math.log(pi))))
    arr = np.array(rows) if rows else np.zeros((0, 4))
    slope, intercept, r2 = _fit_line(arr[:, 0], arr[:, 3])
    return ScalingFit(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                      slope, intercept, r2, excluded,
                      x_label="log eps", y_label="log(-log p)")


def theoretical_small_ball_slope(alpha: float) -> float:
    return -2.0 / (1.0 - 2.0 * alpha)


# ---------------------------------------------------------------------------
# torus-stay statistics
# ---------------------------------------------------------------------------

def _model_actions(model) -> Callable:
    if hasattr(model, "actions"):
        return lambda q, p: model.actions(q, p)
    # action-angle form: the actions are the p slot
    return lambda q, p: p


def torus_stay_probability(model: HamiltonianModel, diffusion: DiffusionSchedule,
                           x0: PhaseState, grid: TimeGrid, i_star: np.ndarray,
                           delta: float, n_runs: int, master_seed: int,
                           actions: Optional[Callable] = None,
                           threads: int = 1) -> TubeEstimate:
    """Fraction of runs with sup_t |I(t) - I*|_inf <= delta."""
    actions_fn = actions if actions is not None else _model_actions(model)
    i_star = np.asarray(i_star, float)
    devs = np.full(n_runs, np.nan)
    for lo, hi, out in _run_chunks(
        model, diffusion, x0, grid, master_seed, n_runs, threads,
        sample_idx=np.array([], dtype=int), want_energy=False, want_state=False,
        actions_fn=actions_fn, actions_ref=i_star,
    ):
        devs[lo:hi] = out["actdev"]
    finite = np.isfinite(devs)
    n_valid = int(finite.sum())
    hits = int(np.sum(devs[finite] <= delta))
    p = hits / n_valid if n_valid else math.nan
    return TubeEstimate(p, _binomial_stderr(p, n_valid), n_valid, hits,
                        excluded_runs=n_runs - n_valid)


def torus_deviation(make_model: Callable[[float], tuple], diffusion: DiffusionSchedule,
                    grid: TimeGrid, eps1_list: Sequence[float],
                    eps2_list: Sequence[float], delta: float, n_runs: int,
                    master_seed: int, x0: Optional[PhaseState] = None,
                    i_star=None, actions: Optional[Callable] = None,
                    threads: int = 1) -> ScalingFit:
    """Stay probabilities over an (eps1, eps2) scan, on the (eps1/eps2)^2 axis.

    ``make_model(eps1)`` returns (model, default_x0); a passed ``x0``
    overrides the default.  The fitted line tests the scaling of ln p against
    (eps1/eps2)^2; the per-point estimates and exclusions are all returned.
    """
    pairs = [(e1, e2) for e1 in eps1_list for e2 in eps2_list]
    rows = []
    excluded = []
    for e1, e2 in pairs:
        model, default_x0 = make_model(e1)
        start = x0 if x0 is not None else default_x0
        star = np.asarray(
            i_star if i_star is not None
            else _model_actions(model)(start.q, start.p),
            float,
        )
        est = torus_stay_probability(
            model, diffusion.with_intensity(e2), start, grid, star, delta,
            n_runs, master_seed, actions=actions, threads=threads,
        )
        xval = (e1 / e2) ** 2
        if est.p_hat <= 0.0 or not math.isfinite(est.p_hat):
            excluded.append({"eps1": e1, "eps2": e2, "reason": "zero hits",
                             "n": est.n_runs})
            continue
        rows.append((xval, est.p_hat, est.stderr, math.log(est.p_hat)))
    rows.sort(key=lambda r: r[0])
    arr = np.array(rows) if rows else np.zeros((0, 4))
    slope, intercept, r2 = _fit_line(arr[:, 0], arr[:, 3])
    return ScalingFit(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                      slope, intercept, r2, excluded,
                      x_label="(eps1/eps2)^2", y_label="ln p")


def action_deviation_scan(make_model: Callable[[float], tuple],
                          diffusion: DiffusionSchedule, grid: TimeGrid,
                          eps_list: Sequence[float], n_runs: int,
                          master_seed: int, x0: Optional[PhaseState] = None,
                          actions: Optional[Callable] = None,
                          threads: int = 1) -> list[dict]:
    """Mean sup-deviation of the actions for eps1 = eps2 = eps scans.

    Quantifies how far trajectories wander from their initial torus as the
    common perturbation strength grows.
    """
    out = []
    for eps in eps_list:
        model, default_x0 = make_model(eps)
        start = x0 if x0 is not None else default_x0
        actions_fn = actions if actions is not None else _model_actions(model)
        star = np.asarray(actions_fn(start.q, start.p), float)
        devs = np.full(n_runs, np.nan)
        for lo, hi, res in _run_chunks(
            model, diffusion.with_intensity(eps), start, grid, master_seed,
            n_runs, threads,
            sample_idx=np.array([], dtype=int), want_energy=False,
            want_state=False, actions_fn=actions_fn, actions_ref=star,
        ):
            devs[lo:hi] = res["actdev"]
        finite = devs[np.isfinite(devs)]
        out.append({
            "eps": float(eps),
            "mean_sup_deviation": float(finite.mean()) if finite.size else math.nan,
            "max_sup_deviation": float(finite.max()) if finite.size else math.nan,
            "n_valid": int(finite.size),
        })
    return out
