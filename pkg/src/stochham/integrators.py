"""Time stepping: stochastic Euler-Maruyama and deterministic RK4 / leapfrog.

Every integrator is a pure function of its inputs.  Noise comes from
counter-based Philox streams keyed by (master_seed, run_index), so an ensemble
run produces the same increments no matter how its runs are scheduled across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import DiffusionSchedule, HamiltonianModel, PhaseState

__all__ = [
    "TimeGrid",
    "NoiseStream",
    "DiscretePath",
    "BlowupError",
    "euler_maruyama",
    "rk4",
    "stormer_verlet",
    "em_step_batch",
]

# abort threshold for the max-norm of a state before Inf can propagate
BLOWUP_LIMIT = 1e150

_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


class BlowupError(RuntimeError):
    """Trajectory left the representable range."""

    def __init__(self, step: int, magnitude: float):
        super().__init__(
            f"state magnitude {magnitude:.3e} exceeded {BLOWUP_LIMIT:.0e} at step {step}"
        )
        self.step = step
        self.magnitude = magnitude


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, t1] with n_steps intervals."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n_steps + 1)


@dataclass(frozen=True)
class NoiseStream:
    """Reproducible Wiener increments for one run of an ensemble.

    The generator is counter-based (Philox) and keyed by
    (master_seed, run_index); the in-stream counter indexes (step, channel).
    Identical keys give bit-identical increments under any execution order.
    """

    master_seed: int
    run_index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [np.uint64(self.master_seed) & _U64, np.uint64(self.run_index) & _U64],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def normals(self, n_steps: int, channels: int) -> np.ndarray:
        return self.generator().standard_normal((n_steps, channels))

    def increments(self, grid: TimeGrid, channels: int) -> np.ndarray:
        """Wiener increments ~ Normal(0, dt), shape (n_steps, channels)."""
        return self.normals(grid.n_steps, channels) * np.sqrt(grid.dt)


class DiscretePath:
    """Trajectory sampled on a uniform grid; row k is (q_k, p_k) flattened."""

    def __init__(self, grid: TimeGrid, states: np.ndarray, check: bool = True):
        states = np.asarray(states, dtype=float)
        if states.ndim != 2 or states.shape[0] != grid.n_steps + 1:
            raise ValueError("states must have shape (n_steps + 1, 2n)")
        if states.shape[1] % 2 != 0:
            raise ValueError("state rows must have even length 2n")
        if check and not np.all(np.isfinite(states)):
            raise ValueError("path contains non-finite states")
        self.grid = grid
        self.states = states

    @property
    def dim(self) -> int:
        return self.states.shape[1] // 2

    @property
    def q(self) -> np.ndarray:
        return self.states[:, : self.dim]

    @property
    def p(self) -> np.ndarray:
        return self.states[:, self.dim :]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def state(self, k: int) -> PhaseState:
        return PhaseState(self.q[k], self.p[k])

    @classmethod
    def constant(cls, grid: TimeGrid, x0: PhaseState) -> "DiscretePath":
        row = x0.as_vector()
        return cls(grid, np.tile(row, (grid.n_steps + 1, 1)))


def _check_magnitude(vec: np.ndarray, step: int):
    mag = float(np.max(np.abs(vec)))
    if not np.isfinite(mag) or mag > BLOWUP_LIMIT:
        raise BlowupError(step, mag)


def em_step_batch(model, diffusion, t, dt, q, p, dw_q, dw_p):
    """One Euler-Maruyama update, broadcast over leading axes.

    Drift and diffusion are both evaluated at the left endpoint (Ito form).
    ``dw_q`` / ``dw_p`` carry the sqrt(dt) factor already.
    """
    sq, sp = diffusion.entries(t)
    eps2 = diffusion.noise_intensity
    q_new = q + model.grad_p(t, q, p) * dt + eps2 * sq * dw_q
    p_new = p - model.grad_q(t, q, p) * dt + eps2 * sp * dw_p
    return q_new, p_new


def euler_maruyama(model: HamiltonianModel, diffusion: DiffusionSchedule,
                   x0: PhaseState, grid: TimeGrid, stream: NoiseStream) -> DiscretePath:
    """Integrate dq = grad_p dt + eps2 sigma_q dW_q, dp = -grad_q dt + eps2 sigma_p dW_p."""
    n = model.dim
    if x0.dim != n or diffusion.dim != n:
        raise ValueError("model, diffusion and x0 dimensions disagree")
    dt = grid.dt
    times = grid.times
    dw = stream.increments(grid, 2 * n)
    out = np.empty((grid.n_steps + 1, 2 * n))
    q = x0.q.copy()
    p = x0.p.copy()
    out[0, :n] = q
    out[0, n:] = p
    for k in range(grid.n_steps):
        q, p = em_step_batch(model, diffusion, times[k], dt, q, p, dw[k, :n], dw[k, n:])
        _check_magnitude(np.concatenate([q, p]), k + 1)
        out[k + 1, :n] = q
        out[k + 1, n:] = p
    return DiscretePath(grid, out)


def rk4(model: HamiltonianModel, x0: PhaseState, grid: TimeGrid) -> DiscretePath:
    """Classical 4th-order Runge-Kutta on the Hamiltonian vector field."""
    n = model.dim
    if x0.dim != n:
        raise ValueError("model and x0 dimensions disagree")
    dt = grid.dt
    times = grid.times

    def f(t, y):
        q, p = y[:n], y[n:]
        return np.concatenate([model.grad_p(t, q, p), -model.grad_q(t, q, p)])

    out = np.empty((grid.n_steps + 1, 2 * n))
    y = x0.as_vector()
    out[0] = y
    for k in range(grid.n_steps):
        t = times[k]
        k1 = f(t, y)
        k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_magnitude(y, k + 1)
        out[k + 1] = y
    return DiscretePath(grid, out)


def stormer_verlet(model: HamiltonianModel, x0: PhaseState, grid: TimeGrid) -> DiscretePath:
    """Second-order symplectic leapfrog (kick-drift-kick) for separable H."""
    if not model.separable:
        raise ValueError(
            f"{model.name} does not declare separable structure H = T(p) + V(q); "
            "leapfrog requires it"
        )
    n = model.dim
    if x0.dim != n:
        raise ValueError("model and x0 dimensions disagree")
    dt = grid.dt
    times = grid.times
    out = np.empty((grid.n_steps + 1, 2 * n))
    q = x0.q.copy()
    p = x0.p.copy()
    out[0, :n] = q
    out[0, n:] = p
    half = 0.5 * dt
    for k in range(grid.n_steps):
        p_half = p - half * model.grad_q(times[k], q, p)
        q = q + dt * model.grad_p(times[k] + half, q, p_half)
        p = p_half - half * model.grad_q(times[k + 1], q, p_half)
        _check_magnitude(np.concatenate([q, p]), k + 1)
        out[k + 1, :n] = q
        out[k + 1, n:] = p
    return DiscretePath(grid, out)
