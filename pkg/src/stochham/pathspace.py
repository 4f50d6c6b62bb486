"""Norms on discrete paths and the Onsager-Machlup action machinery.

The action of a path phi = (phi_q, phi_p) is the sigma-weighted squared drift
residual

    OM(phi) = int |sigma_q^-1 (phi_q' - dH/dp)|^2 dt
            + int |sigma_p^-1 (phi_p' + dH/dq)|^2 dt,

discretized with trapezoidal quadrature and second-order finite differences
for phi'.  The rate function governing small-noise tube probabilities is half
the action for paths of finite derivative energy and +inf otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrators import DiscretePath, TimeGrid
from .models import DiffusionSchedule, HamiltonianModel, ScheduleValidationError

__all__ = [
    "HolderConfig",
    "OMValue",
    "sup_norm",
    "sup_distance",
    "holder_norm",
    "holder_seminorm",
    "holder_pair_stride",
    "om_functional",
    "om_gradient",
    "rate_function",
    "euler_lagrange_residual",
    "path_derivative",
    "derivative_energy",
]

# exact pair scan up to this many nodes, strided subsampling beyond
EXACT_PAIR_NODES = 2000


@dataclass(frozen=True)
class HolderConfig:
    """Exponent and pair budget for the Hölder norm.

    The tube theorems need 0 < alpha < 1/4, so the config enforces that range;
    ``holder_seminorm`` itself accepts any alpha in (0, 1).
    """

    alpha: float
    pair_budget: int = 2_000_000

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.25:
            raise ValueError("alpha must lie in (0, 1/4)")
        if self.pair_budget < 1:
            raise ValueError("pair_budget must be positive")


def _values_and_times(path) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(path, DiscretePath):
        return path.states, path.times
    raise TypeError("expected a DiscretePath")


def sup_norm(path) -> float:
    """max over grid nodes of the max-norm of the state."""
    values, _ = _values_and_times(path)
    if values.size == 0:
        raise ValueError("empty path")
    return float(np.max(np.abs(values)))


def sup_distance(path, reference) -> float:
    """Sup-norm of path minus reference on a shared grid."""
    a, _ = _values_and_times(path)
    b, _ = _values_and_times(reference)
    if a.shape != b.shape:
        raise ValueError("paths must share a grid")
    return float(np.max(np.abs(a - b)))


def holder_pair_stride(n_nodes: int, pair_budget: int) -> int:
    """Node stride used by the semi-norm scan to stay within pair_budget."""
    if n_nodes <= EXACT_PAIR_NODES:
        return 1
    target = int(math.floor(math.sqrt(2.0 * pair_budget))) + 1
    stride = max(1, int(math.ceil(n_nodes / target)))
    return stride


def holder_seminorm(values: np.ndarray, times: np.ndarray, alpha: float,
                    pair_budget: int = 2_000_000) -> float:
    """max over scanned node pairs of |f(t) - f(r)|_inf / |t - r|^alpha.

    All pairs are scanned exactly for small paths; large paths are strided to
    the pair budget (stride from ``holder_pair_stride``).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    values = np.atleast_2d(np.asarray(values, float).T).T  # (N, c)
    n_nodes = values.shape[0]
    if n_nodes < 2:
        return 0.0
    stride = holder_pair_stride(n_nodes, pair_budget)
    idx = np.arange(0, n_nodes, stride)
    if idx[-1] != n_nodes - 1:
        idx = np.append(idx, n_nodes - 1)
    sub = values[idx]
    ts = np.asarray(times, float)[idx]
    best = 0.0
    for j in range(1, idx.size):
        num = np.max(np.abs(sub[j:] - sub[:-j]), axis=1)
        den = np.abs(ts[j:] - ts[:-j]) ** alpha
        best = max(best, float(np.max(num / den)))
    return best


def holder_norm(path, cfg: HolderConfig) -> float:
    """Sup norm plus alpha-Hölder semi-norm of the path."""
    values, times = _values_and_times(path)
    return sup_norm(path) + holder_seminorm(values, times, cfg.alpha, cfg.pair_budget)


# ---------------------------------------------------------------------------
# discrete derivatives
# ---------------------------------------------------------------------------

def path_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Second-order time derivative: central interior, one-sided endpoints."""
    values = np.asarray(values, float)
    if values.shape[0] < 3:
        raise ValueError("need at least 3 nodes for second-order derivatives")
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    d[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dt)
    return d


def _derivative_adjoint(y: np.ndarray, dt: float) -> np.ndarray:
    """Transpose of the differentiation stencil applied to node weights y."""
    out = np.zeros_like(y)
    c = 1.0 / (2.0 * dt)
    # interior rows: -1 at k-1, +1 at k+1
    out[:-2] -= c * y[1:-1]
    out[2:] += c * y[1:-1]
    # first row: (-3, 4, -1)
    out[0] += -3.0 * c * y[0]
    out[1] += 4.0 * c * y[0]
    out[2] += -1.0 * c * y[0]
    # last row: (1, -4, 3) on the final three nodes
    out[-1] += 3.0 * c * y[-1]
    out[-2] += -4.0 * c * y[-1]
    out[-3] += 1.0 * c * y[-1]
    return out


def derivative_energy(path) -> float:
    """Discrete Cameron-Martin screen: sum |x_{k+1} - x_k|^2 / dt."""
    values, _ = _values_and_times(path)
    dt = path.grid.dt
    diffs = np.diff(values, axis=0)
    return float(np.sum(diffs * diffs) / dt)


# ---------------------------------------------------------------------------
# the action functional
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OMValue:
    """Action value with its two channel contributions and scheme identifiers."""

    action: float
    term_q: float
    term_p: float
    quadrature: str = "trapezoid"
    derivative_scheme: str = "central-2nd-order"

    def __post_init__(self):
        if self.action < 0.0:
            raise ValueError("action must be nonnegative")


def _weighted_residuals(path: DiscretePath, model: HamiltonianModel,
                        diffusion: DiffusionSchedule):
    """Residuals u, v and the sigma^-2 weights at each node (vectorized)."""
    n = path.dim
    grid = path.grid
    if diffusion.dim != n or model.dim != n:
        raise ValueError("model, diffusion and path dimensions disagree")
    if grid.n_steps < 2:
        raise ValueError("need n_steps >= 2 for the derivative stencils")
    times = grid.times
    dphi = path_derivative(path.states, grid.dt)
    sq, sp = diffusion.entries(times)
    floor = diffusion.m * (1.0 - 1e-12)
    if np.any(sq < floor) or np.any(sp < floor):
        raise ScheduleValidationError(
            f"sigma entry below declared bound m={diffusion.m} on the path grid"
        )
    u = dphi[:, :n] - model.grad_p(times, path.q, path.p)
    v = dphi[:, n:] + model.grad_q(times, path.q, path.p)
    wq = 1.0 / (sq * sq)
    wp = 1.0 / (sp * sp)
    return u, v, wq, wp


def _trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    w = np.full(grid.n_steps + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    return w


def om_functional(path: DiscretePath, model: HamiltonianModel,
                  diffusion: DiffusionSchedule) -> OMValue:
    """Discretized action of the path under the model's drift.

    The diffusion's global noise intensity does not enter; intensity only
    rescales tube probabilities through the large-deviation factor.
    """
    u, v, wq, wp = _weighted_residuals(path, model, diffusion)
    w = _trapezoid_weights(path.grid)
    term_q = float(np.sum(w * np.sum(wq * u * u, axis=1)))
    term_p = float(np.sum(w * np.sum(wp * v * v, axis=1)))
    return OMValue(action=term_q + term_p, term_q=term_q, term_p=term_p)


def om_gradient(path: DiscretePath, model: HamiltonianModel,
                diffusion: DiffusionSchedule) -> np.ndarray:
    """Exact gradient of the discrete action w.r.t. every node, shape (N+1, 2n).

    Endpoint handling is the caller's concern: the solver masks whichever
    nodes its boundary policy holds fixed.
    """
    if not model.has_hessian:
        raise ValueError(f"{model.name} lacks hessian blocks; the action gradient needs them")
    n = path.dim
    grid = path.grid
    u, v, wq, wp = _weighted_residuals(path, model, diffusion)
    w = _trapezoid_weights(grid)[:, None]
    au = wq * u  # sigma_q^-2 u
    bv = wp * v
    # stencil part: d(residual)/d(node) through the derivative operator
    grad_q_part = _derivative_adjoint(2.0 * w * au, grid.dt)
    grad_p_part = _derivative_adjoint(2.0 * w * bv, grid.dt)
    # model part: residual dependence through the drift at the same node
    times = grid.times
    qq, qp_, pq_, pp_ = model.hessian_blocks(times, path.q, path.p)
    grad_q_part += 2.0 * w * (
        -np.einsum("kij,ki->kj", pq_, au) + np.einsum("kij,ki->kj", qq, bv)
    )
    grad_p_part += 2.0 * w * (
        -np.einsum("kij,ki->kj", pp_, au) + np.einsum("kij,ki->kj", qp_, bv)
    )
    return np.concatenate([grad_q_part, grad_p_part], axis=1)


def rate_function(path: DiscretePath, model: HamiltonianModel,
                  diffusion: DiffusionSchedule) -> float:
    """Half the action; +inf for paths failing the finite-derivative screen."""
    if not np.all(np.isfinite(path.states)):
        return math.inf
    if not math.isfinite(derivative_energy(path)):
        return math.inf
    return 0.5 * om_functional(path, model, diffusion).action


def euler_lagrange_residual(path: DiscretePath, model: HamiltonianModel) -> float:
    """Max-norm drift residual of the deterministic flow equations, interior nodes."""
    n = path.dim
    grid = path.grid
    if grid.n_steps < 2:
        raise ValueError("need n_steps >= 2")
    dphi = path_derivative(path.states, grid.dt)
    times = grid.times[1:-1]
    q = path.q[1:-1]
    p = path.p[1:-1]
    rq = dphi[1:-1, :n] - model.grad_p(times, q, p)
    rp = dphi[1:-1, n:] + model.grad_q(times, q, p)
    return max(float(np.max(np.abs(rq))), float(np.max(np.abs(rp))))
