"""Phase-space states, Hamiltonian models, diffusion schedules, and the model catalog.

All model evaluations broadcast over leading axes: ``q`` and ``p`` may have shape
``(..., n)`` so that ensembles of states are evaluated in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "PhaseState",
    "HamiltonianModel",
    "DiffusionSchedule",
    "ScheduleValidationError",
    "GradientCheckReport",
    "harmonic_1d",
    "coupled_2d",
    "build_three_body",
    "three_body",
    "action_angle",
    "twist_torus",
    "constant_schedule",
    "sinusoidal_schedule",
    "eq_of_motion",
    "gradient_selfcheck",
    "symplectic_trace_defect",
    "MODEL_REGISTRY",
    "SCHEDULE_REGISTRY",
    "THREE_BODY_DEFAULTS",
]


class ScheduleValidationError(ValueError):
    """A diffusion schedule violates its positivity/bound contract."""


def _as_state_array(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class PhaseState:
    """A point (q, p) in phase space.

    In action-angle form the angles live in the q slot and the actions in the
    p slot; angles are stored unreduced and only wrapped mod 2*pi for norms
    and plotting.
    """

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _as_state_array(self.q, "q"))
        object.__setattr__(self, "p", _as_state_array(self.p, "p"))
        if self.q.shape != self.p.shape or self.q.ndim != 1:
            raise ValueError("q and p must be 1-D arrays of equal length")
        if self.q.size < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.q.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, vec) -> "PhaseState":
        vec = np.asarray(vec, dtype=float)
        n = vec.size // 2
        return cls(vec[:n], vec[n:])


class HamiltonianModel:
    """Energy H(t, q, p) with analytic partial gradients.

    Subclasses fill in ``_energy``, ``_grad_q``, ``_grad_p`` and, when
    available, the four second-derivative blocks used by the action gradient.
    ``separable`` declares H = T(p) + V(t, q) structure (grad_p independent of
    q, grad_q independent of p), which the leapfrog integrator requires.
    """

    dim: int = 0
    name: str = "model"
    time_dependent: bool = False
    separable: bool = False
    has_hessian: bool = False

    # state sampling hints for validation contracts
    reference_state: Optional[PhaseState] = None
    state_jitter: Optional[np.ndarray] = None  # length 2n

    def energy(self, t, q, p):
        return self._energy(np.asarray(t, float), np.asarray(q, float), np.asarray(p, float))

    def grad_q(self, t, q, p):
        return self._grad_q(np.asarray(t, float), np.asarray(q, float), np.asarray(p, float))

    def grad_p(self, t, q, p):
        return self._grad_p(np.asarray(t, float), np.asarray(q, float), np.asarray(p, float))

    def hessian_blocks(self, t, q, p):
        """Return (H_qq, H_qp, H_pq, H_pp), each with shape (..., n, n)."""
        if not self.has_hessian:
            raise NotImplementedError(f"{self.name} does not provide hessian blocks")
        return self._hessian_blocks(np.asarray(t, float), np.asarray(q, float), np.asarray(p, float))

    def sample_states(self, rng: np.random.Generator, n_samples: int) -> np.ndarray:
        """Random states near the model's reference scale, shape (n_samples, 2n)."""
        if self.reference_state is None or self.state_jitter is None:
            raise ValueError(f"{self.name} has no sampling hints")
        ref = self.reference_state.as_vector()
        u = rng.uniform(-1.0, 1.0, size=(n_samples, 2 * self.dim))
        return ref[None, :] + u * np.asarray(self.state_jitter, float)[None, :]


def eq_of_motion(model: HamiltonianModel, t, q, p):
    """Hamiltonian vector field (dq/dt, dp/dt) = (grad_p, -grad_q)."""
    return model.grad_p(t, q, p), -model.grad_q(t, q, p)


# ---------------------------------------------------------------------------
# diffusion schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionSchedule:
    """Time-dependent diagonal diffusion with uniform bounds 0 < m <= sigma <= M.

    ``sigma_q(t)`` / ``sigma_p(t)`` return the n diagonal entries for the q and
    p noise channels.  ``noise_intensity`` is the global multiplier applied by
    the stochastic integrator; the action functional ignores it.
    Only diagonal schedules exist by construction.
    """

    dim: int
    sigma_q: Callable[[float], np.ndarray]
    sigma_p: Callable[[float], np.ndarray]
    m: float
    M: float
    noise_intensity: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.m <= self.M):
            raise ScheduleValidationError(
                f"bounds must satisfy 0 < m <= M, got m={self.m}, M={self.M}"
            )
        if self.noise_intensity < 0.0:
            raise ValueError("noise_intensity must be >= 0")

    def with_intensity(self, eps2: float) -> "DiffusionSchedule":
        return replace(self, noise_intensity=float(eps2))

    def entries(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal entries at time(s) t, shape t.shape + (dim,)."""
        t = np.asarray(t, dtype=float)
        target = t.shape + (self.dim,)
        sq = np.broadcast_to(np.asarray(self.sigma_q(t), float), target)
        sp = np.broadcast_to(np.asarray(self.sigma_p(t), float), target)
        return sq, sp

    def validate(self, t0: float, t1: float, n_check: int = 257, tol: float = 1e-9):
        """Sampled C2 check: entries finite, positive, inside [m, M]; continuity probe.

        Raises ScheduleValidationError on violation.
        """
        ts = np.linspace(t0, t1, n_check)
        prev = None
        dt = (t1 - t0) / max(n_check - 1, 1)
        for t in ts:
            sq, sp = self.entries(float(t))
            s = np.concatenate([sq, sp])
            if not np.all(np.isfinite(s)):
                raise ScheduleValidationError(f"non-finite sigma at t={t}")
            if np.any(s <= 0.0):
                raise ScheduleValidationError(
                    f"sigma not positive definite at t={t} (min entry {s.min():g})"
                )
            if np.any(s < self.m - tol * max(1.0, self.m)) or np.any(
                s > self.M + tol * max(1.0, self.M)
            ):
                raise ScheduleValidationError(
                    f"sigma outside declared bounds [{self.m}, {self.M}] at t={t}"
                )
            if prev is not None and dt > 0:
                jump = np.max(np.abs(s - prev))
                if jump > 100.0 * self.M * math.sqrt(dt):
                    raise ScheduleValidationError(
                        f"sigma discontinuity suspected near t={t} (jump {jump:g})"
                    )
            prev = s


def constant_schedule(dim: int, value=1.0, value_p=None, noise_intensity: float = 1.0):
    """Diagonal schedule with constant entries (scalar or per-channel)."""
    vq = np.broadcast_to(np.asarray(value, float), (dim,)).copy()
    vp = np.broadcast_to(np.asarray(value_p if value_p is not None else value, float), (dim,)).copy()
    both = np.concatenate([vq, vp])
    if np.any(both <= 0):
        raise ScheduleValidationError("constant schedule entries must be positive")
    return DiffusionSchedule(
        dim=dim,
        sigma_q=lambda t, v=vq: v,
        sigma_p=lambda t, v=vp: v,
        m=float(both.min()),
        M=float(both.max()),
        noise_intensity=noise_intensity,
    )


# positive floor declared when a sinusoid touches zero on a measure-zero set
_SCHEDULE_FLOOR = 1e-12


def sinusoidal_schedule(dim: int, q_terms, p_terms, noise_intensity: float = 1.0):
    """Per-channel sigma_i(t) = base + amp * sin/cos(freq * t).

    ``q_terms`` / ``p_terms`` are length-``dim`` lists of dicts with keys
    ``base``, ``amp``, ``freq`` and optional ``fn`` ("sin" default, or "cos").
    Channels whose envelope base - |amp| is negative are rejected (the bound
    contract requires positivity); an envelope touching zero exactly gets the
    minimal positive declared bound.
    """

    def compile_terms(terms):
        terms = list(terms)
        if len(terms) != dim:
            raise ScheduleValidationError(f"expected {dim} channel terms, got {len(terms)}")
        base = np.array([float(tm["base"]) for tm in terms])
        amp = np.array([float(tm.get("amp", 0.0)) for tm in terms])
        freq = np.array([float(tm.get("freq", 1.0)) for tm in terms])
        fns = [str(tm.get("fn", "sin")) for tm in terms]
        if any(f not in ("sin", "cos") for f in fns):
            raise ScheduleValidationError("fn must be 'sin' or 'cos'")
        is_cos = np.array([f == "cos" for f in fns])

        def sigma(t, base=base, amp=amp, freq=freq, is_cos=is_cos):
            phase = np.multiply.outer(np.asarray(t, float), freq)
            wave = np.where(is_cos, np.cos(phase), np.sin(phase))
            return base + amp * wave

        lo = base - np.abs(amp)
        hi = base + np.abs(amp)
        return sigma, lo, hi

    sq, lo_q, hi_q = compile_terms(q_terms)
    sp, lo_p, hi_p = compile_terms(p_terms)
    lo = min(lo_q.min(), lo_p.min())
    hi = max(hi_q.max(), hi_p.max())
    if lo < 0.0:
        raise ScheduleValidationError(
            f"schedule dips negative (envelope minimum {lo:g}); C2 requires positivity"
        )
    return DiffusionSchedule(
        dim=dim,
        sigma_q=sq,
        sigma_p=sp,
        m=max(lo, _SCHEDULE_FLOOR),
        M=hi,
        noise_intensity=noise_intensity,
    )


# ---------------------------------------------------------------------------
# catalog models
# ---------------------------------------------------------------------------

class _Harmonic1D(HamiltonianModel):
    """H = p^2 / (2m) + k q^2 / 2."""

    time_dependent = False
    separable = True
    has_hessian = True

    def __init__(self, mass=1.0, spring_k=1.0):
        if mass <= 0 or spring_k <= 0:
            raise ValueError("mass and spring_k must be positive")
        self.mass = float(mass)
        self.spring_k = float(spring_k)
        self.dim = 1
        self.name = "harmonic_1d"
        self.reference_state = PhaseState([50.0], [0.0])
        self.state_jitter = np.array([50.0, 50.0])

    def _energy(self, t, q, p):
        return (p[..., 0] ** 2) / (2.0 * self.mass) + 0.5 * self.spring_k * q[..., 0] ** 2

    def _grad_q(self, t, q, p):
        return self.spring_k * q

    def _grad_p(self, t, q, p):
        return p / self.mass

    def _hessian_blocks(self, t, q, p):
        shp = q.shape[:-1] + (1, 1)
        qq = np.broadcast_to(self.spring_k, shp).copy()
        pp = np.broadcast_to(1.0 / self.mass, shp).copy()
        z = np.zeros(shp)
        return qq, z, z.copy(), pp


def harmonic_1d(mass=1.0, spring_k=1.0, q0=50.0, p0=0.0):
    """One-dimensional harmonic oscillator and its initial state."""
    return _Harmonic1D(mass, spring_k), PhaseState([float(q0)], [float(p0)])


class _Coupled2D(HamiltonianModel):
    """Two coupled oscillators with weak time-periodic forcing.

    H = p1^2/2 + p2^2/2 + q1^2 + q2^2/2
        - eps1 * (q1 sin(0.6 t) + q2 cos(0.6 t) + p1 p2)

    At eps1 = 0 the system splits into two independent oscillators with
    incommensurate frequencies sqrt(2) and 1; motion then stays on the torus
    I = const, with actions I1 = (p1^2/2 + q1^2) / sqrt(2), I2 = p2^2/2 + q2^2/2.
    """

    time_dependent = True
    separable = True
    has_hessian = True

    FREQ = 0.6
    omega1 = math.sqrt(2.0)
    omega2 = 1.0

    def __init__(self, eps1=0.0):
        self.eps1 = float(eps1)
        self.dim = 2
        self.name = "coupled_2d"
        self.reference_state = PhaseState([1.0, 1.0], [0.0, 0.0])
        self.state_jitter = np.array([1.0, 1.0, 1.0, 1.0])

    def _energy(self, t, q, p):
        q1, q2 = q[..., 0], q[..., 1]
        p1, p2 = p[..., 0], p[..., 1]
        h0 = 0.5 * p1**2 + 0.5 * p2**2 + q1**2 + 0.5 * q2**2
        pert = q1 * np.sin(self.FREQ * t) + q2 * np.cos(self.FREQ * t) + p1 * p2
        return h0 - self.eps1 * pert

    def _grad_q(self, t, q, p):
        g = np.empty_like(q)
        g[..., 0] = 2.0 * q[..., 0] - self.eps1 * np.sin(self.FREQ * t)
        g[..., 1] = q[..., 1] - self.eps1 * np.cos(self.FREQ * t)
        return g

    def _grad_p(self, t, q, p):
        g = np.empty_like(p)
        g[..., 0] = p[..., 0] - self.eps1 * p[..., 1]
        g[..., 1] = p[..., 1] - self.eps1 * p[..., 0]
        return g

    def _hessian_blocks(self, t, q, p):
        shp = q.shape[:-1] + (2, 2)
        qq = np.zeros(shp)
        qq[..., 0, 0] = 2.0
        qq[..., 1, 1] = 1.0
        pp = np.zeros(shp)
        pp[..., 0, 0] = 1.0
        pp[..., 1, 1] = 1.0
        pp[..., 0, 1] = -self.eps1
        pp[..., 1, 0] = -self.eps1
        z = np.zeros(shp)
        return qq, z, z.copy(), pp

    def actions(self, q, p):
        """Actions of the eps1 = 0 integrable part, shape (..., 2)."""
        i1 = (0.5 * p[..., 0] ** 2 + q[..., 0] ** 2) / self.omega1
        i2 = (0.5 * p[..., 1] ** 2 + 0.5 * q[..., 1] ** 2) / self.omega2
        return np.stack([i1, i2], axis=-1)


def coupled_2d(eps=0.0, q0=(1.0, 1.0), p0=(0.0, 0.0)):
    """Two coupled stochastic oscillators with perturbation strength eps."""
    return _Coupled2D(eps), PhaseState(list(q0), list(p0))


THREE_BODY_DEFAULTS = {
    "G": 6.67430e-11,
    "m1": 1.989e30,   # central body, fixed at the origin
    "m2": 5.972e24,
    "m3": 7.348e22,
    "r2": (1.496e11, 0.0, 0.0),
    "r3": (1.496e11 + 3.844e8, 0.0, 0.0),
    # circular-orbit convention; the source material fixes positions only
    "v2": (0.0, 29780.0, 0.0),
    "v3": (0.0, 29780.0 + 1022.0, 0.0),
}


class _ThreeBody(HamiltonianModel):
    """Sun-Earth-Moon system with the Sun pinned at the origin.

    q = (r2, r3) and p = (p2, p3) in SI units, a 12-dimensional phase space.
    """

    time_dependent = False
    separable = True
    has_hessian = True

    def __init__(self, params: dict):
        self.G = float(params["G"])
        self.m1 = float(params["m1"])
        self.m2 = float(params["m2"])
        self.m3 = float(params["m3"])
        self.dim = 6
        self.name = "three_body"
        r2 = np.asarray(params["r2"], float)
        r3 = np.asarray(params["r3"], float)
        v2 = np.asarray(params["v2"], float)
        v3 = np.asarray(params["v3"], float)
        q0 = np.concatenate([r2, r3])
        p0 = np.concatenate([self.m2 * v2, self.m3 * v3])
        self.reference_state = PhaseState(q0, p0)
        self.state_jitter = np.concatenate(
            [np.full(6, 1e9), np.full(3, 1e27), np.full(3, 1e25)]
        )

    def _split(self, q, p):
        return q[..., 0:3], q[..., 3:6], p[..., 0:3], p[..., 3:6]

    def _energy(self, t, q, p):
        r2, r3, p2, p3 = self._split(q, p)
        kin = np.sum(p2**2, axis=-1) / (2.0 * self.m2) + np.sum(p3**2, axis=-1) / (2.0 * self.m3)
        d2 = np.linalg.norm(r2, axis=-1)
        d3 = np.linalg.norm(r3, axis=-1)
        d23 = np.linalg.norm(r3 - r2, axis=-1)
        pot = -self.G * (self.m1 * self.m2 / d2 + self.m1 * self.m3 / d3 + self.m2 * self.m3 / d23)
        return kin + pot

    def _grad_q(self, t, q, p):
        r2, r3, _, _ = self._split(q, p)
        d2 = np.linalg.norm(r2, axis=-1, keepdims=True)
        d3 = np.linalg.norm(r3, axis=-1, keepdims=True)
        u = r3 - r2
        d23 = np.linalg.norm(u, axis=-1, keepdims=True)
        g2 = self.G * (self.m1 * self.m2 * r2 / d2**3 - self.m2 * self.m3 * u / d23**3)
        g3 = self.G * (self.m1 * self.m3 * r3 / d3**3 + self.m2 * self.m3 * u / d23**3)
        return np.concatenate([g2, g3], axis=-1)

    def _grad_p(self, t, q, p):
        _, _, p2, p3 = self._split(q, p)
        return np.concatenate([p2 / self.m2, p3 / self.m3], axis=-1)

    @staticmethod
    def _pair_hessian(r, k):
        """Hessian of -k/|r| with respect to r: k (I/|r|^3 - 3 r r^T/|r|^5)."""
        d = np.linalg.norm(r, axis=-1)[..., None, None]
        eye = np.eye(3)
        outer = r[..., :, None] * r[..., None, :]
        return k * (eye / d**3 - 3.0 * outer / d**5)

    def _hessian_blocks(self, t, q, p):
        r2, r3, _, _ = self._split(q, p)
        shp = q.shape[:-1] + (6, 6)
        qq = np.zeros(shp)
        a2 = self._pair_hessian(r2, self.G * self.m1 * self.m2)
        a3 = self._pair_hessian(r3, self.G * self.m1 * self.m3)
        a23 = self._pair_hessian(r3 - r2, self.G * self.m2 * self.m3)
        qq[..., 0:3, 0:3] = a2 + a23
        qq[..., 3:6, 3:6] = a3 + a23
        qq[..., 0:3, 3:6] = -a23
        qq[..., 3:6, 0:3] = -a23
        pp = np.zeros(shp)
        inv = np.concatenate([np.full(3, 1.0 / self.m2), np.full(3, 1.0 / self.m3)])
        pp[..., np.arange(6), np.arange(6)] = inv
        z = np.zeros(shp)
        return qq, z, z.copy(), pp


def build_three_body(overrides: dict | None = None):
    """Sun-Earth-Moon model with baked-in constants, overridable by key.

    Initial momenta follow the tangential circular-orbit convention (positions
    alone do not determine them); see THREE_BODY_DEFAULTS.
    """
    params = dict(THREE_BODY_DEFAULTS)
    if overrides:
        unknown = set(overrides) - set(params)
        if unknown:
            raise ValueError(f"unknown three-body overrides: {sorted(unknown)}")
        params.update(overrides)
    model = _ThreeBody(params)
    return model, model.reference_state


# alias matching the catalog naming of the other constructors
three_body = build_three_body


class _ActionAngle(HamiltonianModel):
    """Nearly integrable system H(I) + eps1 * P(theta, I) in action-angle form.

    Angles occupy the q slot, actions the p slot.  All callables take and
    return arrays broadcast over leading axes.
    """

    time_dependent = False
    has_hessian = False

    def __init__(self, h_of_i, omega_of_i, p_fn, p_grad_theta, p_grad_i,
                 eps1, dim, separable=False, name="action_angle"):
        self.h_of_i = h_of_i
        self.omega_of_i = omega_of_i
        self.p_fn = p_fn
        self.p_grad_theta = p_grad_theta
        self.p_grad_i = p_grad_i
        self.eps1 = float(eps1)
        self.dim = int(dim)
        self.separable = bool(separable)
        self.name = name
        self.reference_state = PhaseState(np.zeros(self.dim), np.ones(self.dim))
        self.state_jitter = np.concatenate([np.full(self.dim, math.pi), np.full(self.dim, 0.5)])

    def _energy(self, t, q, p):
        return self.h_of_i(p) + self.eps1 * self.p_fn(q, p)

    def _grad_q(self, t, q, p):
        return self.eps1 * self.p_grad_theta(q, p)

    def _grad_p(self, t, q, p):
        return self.omega_of_i(p) + self.eps1 * self.p_grad_i(q, p)


def action_angle(h_of_i, omega_of_i, p_fn, p_grad_theta, p_grad_i, eps1,
                 dim, theta0=None, i0=None, separable=False):
    """Generic nearly integrable model from user callables."""
    model = _ActionAngle(h_of_i, omega_of_i, p_fn, p_grad_theta, p_grad_i,
                         eps1, dim, separable=separable)
    theta0 = np.zeros(dim) if theta0 is None else np.asarray(theta0, float)
    i0 = np.ones(dim) if i0 is None else np.asarray(i0, float)
    return model, PhaseState(theta0, i0)


def twist_torus(eps1=0.0, dim=1, i_star=1.0):
    """Twist system H(I) = |I|^2 / 2 perturbed by P = sum_i cos(theta_i).

    dP/dtheta is independent of I, so the leapfrog split applies.
    """
    i_star = np.broadcast_to(np.asarray(i_star, float), (dim,)).copy()
    model, _ = action_angle(
        h_of_i=lambda I: 0.5 * np.sum(I**2, axis=-1),
        omega_of_i=lambda I: I,
        p_fn=lambda th, I: np.sum(np.cos(th), axis=-1),
        p_grad_theta=lambda th, I: -np.sin(th),
        p_grad_i=lambda th, I: np.zeros_like(I),
        eps1=eps1,
        dim=dim,
        separable=True,
    )
    model.name = "twist_torus"
    return model, PhaseState(np.zeros(dim), i_star)


# ---------------------------------------------------------------------------
# validation contracts
# ---------------------------------------------------------------------------

@dataclass
class GradientCheckReport:
    model: str
    n_samples: int
    max_rel_error: float
    tol: float
    worst_sample: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def gradient_selfcheck(model: HamiltonianModel, n_samples: int = 32, seed: int = 0,
                       tol: float = 1e-6, t: float = 0.3,
                       rel_step: float = 6e-6) -> GradientCheckReport:
    """Compare analytic gradients against central differences of the energy.

    Steps scale per coordinate with the state magnitude, which keeps the check
    meaningful across SI-scale and order-one models.
    """
    rng = np.random.default_rng(seed)
    states = model.sample_states(rng, n_samples)
    n = model.dim
    worst = 0.0
    worst_idx = -1
    for idx in range(n_samples):
        q = states[idx, :n].copy()
        p = states[idx, n:].copy()
        gq = model.grad_q(t, q, p)
        gp = model.grad_p(t, q, p)
        fd_q = np.empty(n)
        fd_p = np.empty(n)
        for i in range(n):
            hq = rel_step * max(1.0, abs(q[i]))
            qp, qm = q.copy(), q.copy()
            qp[i] += hq
            qm[i] -= hq
            fd_q[i] = (model.energy(t, qp, p) - model.energy(t, qm, p)) / (2.0 * hq)
            hp = rel_step * max(1.0, abs(p[i]))
            pp_, pm = p.copy(), p.copy()
            pp_[i] += hp
            pm[i] -= hp
            fd_p[i] = (model.energy(t, q, pp_) - model.energy(t, q, pm)) / (2.0 * hp)
        scale_q = max(np.max(np.abs(gq)), 1e-30)
        scale_p = max(np.max(np.abs(gp)), 1e-30)
        err = max(np.max(np.abs(fd_q - gq)) / scale_q, np.max(np.abs(fd_p - gp)) / scale_p)
        if err > worst:
            worst, worst_idx = err, idx
    return GradientCheckReport(model.name, n_samples, worst, tol, worst_idx)


def symplectic_trace_defect(model: HamiltonianModel, t, q, p) -> float:
    """|tr(H_qp) - tr(H_pq)| at a state; zero for any C2 Hamiltonian."""
    _, qp_, pq_, _ = model.hessian_blocks(t, q, p)
    return float(abs(np.trace(np.atleast_2d(qp_)) - np.trace(np.atleast_2d(pq_))))


# ---------------------------------------------------------------------------
# registries used by the CLI scenario loader
# ---------------------------------------------------------------------------

def _build_harmonic(params):
    return harmonic_1d(
        mass=params.get("mass", 1.0),
        spring_k=params.get("spring_k", 1.0),
        q0=params.get("q0", 50.0),
        p0=params.get("p0", 0.0),
    )


def _build_coupled(params):
    return coupled_2d(
        eps=params.get("eps", 0.0),
        q0=params.get("q0", (1.0, 1.0)),
        p0=params.get("p0", (0.0, 0.0)),
    )


def _build_three_body(params):
    return build_three_body(overrides=params.get("overrides"))


def _build_twist(params):
    return twist_torus(
        eps1=params.get("eps1", 0.0),
        dim=params.get("dim", 1),
        i_star=params.get("i_star", 1.0),
    )


MODEL_REGISTRY = {
    "harmonic_1d": _build_harmonic,
    "coupled_2d": _build_coupled,
    "three_body": _build_three_body,
    "twist_torus": _build_twist,
}


def _build_constant_schedule(dim, params):
    return constant_schedule(
        dim,
        value=params.get("value", 1.0),
        value_p=params.get("value_p"),
        noise_intensity=params.get("eps2", 1.0),
    )


def _build_sinusoidal_schedule(dim, params):
    return sinusoidal_schedule(
        dim,
        q_terms=params["q"],
        p_terms=params["p"],
        noise_intensity=params.get("eps2", 1.0),
    )


SCHEDULE_REGISTRY = {
    "constant": _build_constant_schedule,
    "sinusoidal": _build_sinusoidal_schedule,
}
