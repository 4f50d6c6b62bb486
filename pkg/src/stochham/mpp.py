"""Most probable paths by direct minimization of the discrete action.

The minimizer is gradient descent over the free path nodes with Armijo
backtracking; trial step lengths are seeded with the Barzilai-Borwein
quotient from the previous accepted step, which keeps the method pure
first-order while taming the stiff small-step modes of the discretized
action.  Converged paths are checked against the deterministic flow
equations through their drift residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .integrators import DiscretePath, TimeGrid
from .models import DiffusionSchedule, HamiltonianModel, PhaseState
from .pathspace import euler_lagrange_residual, om_functional, om_gradient

__all__ = ["MppProblem", "MppSolution", "MppReport", "minimize_om", "verify_mpp"]


@dataclass
class MppProblem:
    model: HamiltonianModel
    diffusion: DiffusionSchedule
    x0: PhaseState
    grid: TimeGrid
    endpoint: Optional[PhaseState] = None  # None = free terminal node
    init_guess: Optional[DiscretePath] = None  # None = constant path at x0
    grad_tol: float = 1e-8
    max_iterations: int = 20000
    armijo_beta: float = 0.5
    armijo_c: float = 1e-4
    min_step: float = 1e-20

    def initial_path(self) -> DiscretePath:
        if self.init_guess is None:
            return DiscretePath.constant(self.grid, self.x0)
        path = self.init_guess
        if path.grid.n_steps != self.grid.n_steps:
            raise ValueError("init_guess grid disagrees with problem grid")
        if not np.allclose(path.states[0], self.x0.as_vector()):
            raise ValueError("init_guess must start at x0")
        if self.endpoint is not None and not np.allclose(
            path.states[-1], self.endpoint.as_vector()
        ):
            raise ValueError("init_guess endpoint disagrees with pinned endpoint")
        return path


@dataclass
class MppSolution:
    path: DiscretePath
    action_history: list[float] = field(default_factory=list)
    grad_norm: float = np.inf
    el_residual: float = np.inf
    iterations: int = 0
    converged: bool = False

    @property
    def action(self) -> float:
        return self.action_history[-1]


@dataclass
class MppReport:
    action: float
    el_residual: float
    threshold: float
    passed: bool


def _free_mask(problem: MppProblem, n_nodes: int) -> np.ndarray:
    mask = np.ones(n_nodes, dtype=bool)
    mask[0] = False
    if problem.endpoint is not None:
        mask[-1] = False
    return mask


def minimize_om(problem: MppProblem) -> MppSolution:
    """Minimize the discrete action over the free nodes.

    Every accepted step strictly decreases the action; the run stops when the
    max-norm of the free-node gradient falls below ``grad_tol`` or iterations
    run out.  A failed line search returns the best iterate, flagged
    non-converged.
    """
    model, diffusion = problem.model, problem.diffusion
    path = problem.initial_path()
    states = path.states.copy()
    if problem.endpoint is not None:
        states[-1] = problem.endpoint.as_vector()
    states[0] = problem.x0.as_vector()
    mask = _free_mask(problem, states.shape[0])

    def action_of(s: np.ndarray) -> float:
        return om_functional(DiscretePath(path.grid, s, check=False), model, diffusion).action

    def gradient_of(s: np.ndarray) -> np.ndarray:
        g = om_gradient(DiscretePath(path.grid, s, check=False), model, diffusion)
        g[~mask] = 0.0
        return g

    action = action_of(states)
    if not np.isfinite(action):
        raise ValueError("initial action is not finite")
    history = [action]
    grad = gradient_of(states)
    gnorm = float(np.max(np.abs(grad)))
    step = 1.0 / max(gnorm, 1.0)
    prev_states = None
    prev_grad = None
    converged = gnorm <= problem.grad_tol
    iterations = 0

    while not converged and iterations < problem.max_iterations:
        iterations += 1
        # Barzilai-Borwein seed from the last accepted move, safeguarded
        if prev_states is not None:
            ds = (states - prev_states)[mask].ravel()
            dg = (grad - prev_grad)[mask].ravel()
            denom = float(ds @ dg)
            if denom > 0.0:
                step = float(ds @ ds) / denom
        step = min(max(step, problem.min_step), 1e12)

        g2 = float(np.sum(grad * grad))
        eta = step
        accepted = False
        while eta >= problem.min_step:
            trial = states - eta * grad
            trial_action = action_of(trial)
            if np.isfinite(trial_action) and trial_action <= action - problem.armijo_c * eta * g2:
                accepted = True
                break
            eta *= problem.armijo_beta
        if not accepted:
            break
        prev_states, prev_grad = states, grad
        states = trial
        action = trial_action
        history.append(action)
        grad = gradient_of(states)
        gnorm = float(np.max(np.abs(grad)))
        step = eta
        if gnorm <= problem.grad_tol:
            converged = True

    final = DiscretePath(path.grid, states)
    return MppSolution(
        path=final,
        action_history=history,
        grad_norm=gnorm,
        el_residual=euler_lagrange_residual(final, model),
        iterations=iterations,
        converged=converged,
    )


def verify_mpp(solution: MppSolution, model: HamiltonianModel) -> MppReport:
    """Check that the minimizer solves the deterministic flow equations.

    The threshold scales with the drift magnitude along the path and with dt,
    matching the first-order accuracy of the residual stencils.
    """
    path = solution.path
    times = path.times
    drift_scale = max(
        float(np.max(np.abs(model.grad_p(times, path.q, path.p)))),
        float(np.max(np.abs(model.grad_q(times, path.q, path.p)))),
        1.0,
    )
    threshold = drift_scale * path.grid.dt
    residual = solution.el_residual
    return MppReport(
        action=solution.action,
        el_residual=residual,
        threshold=threshold,
        passed=bool(residual <= 10.0 * threshold),
    )
