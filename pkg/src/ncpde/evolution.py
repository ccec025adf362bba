"""Implicit time stepping for weak parabolic problems in the triple
V = D(E)  <  H = L^2(tau)  <  V*.

Over real coordinates the L^2 Gram matrix is the identity (the coefficient
bases are orthonormal) and the V inner product is <u, v> + E(u, v); the
embedding is the identity on coordinates and its adjoint is Gram-matrix
transport.  A problem is the heat form F(u, v) = E(u, v) or the viscous
continuity form

    F(u, v; t) = eps * E(u, v) + Re< h(t) . u, grad v >,

with a sampled flow t -> h(t) of tangent vectors (linear interpolation
between samples) and an optional sampled source t -> b(t) given by L^2
representatives.  Stepping is implicit Euler or Crank-Nicolson; each step
is one dense solve whose relative residual is recorded.

The transport form annihilates constant test vectors because the gradient
of the unit vanishes, so for b = 0 the trace Re<u_k, 1> is conserved to
solver roundoff; the per-step defect is reported.  The pure transport form
(eps = 0) need not satisfy the coercivity hypothesis of the underlying
well-posedness theorem; such runs carry a prominent flag.  For eps > 0 the
form dominates through Young's inequality with the dimension-dependent
bound ||v||_op <= sqrt(D) ||v||_2, giving certificates

    c0 = eps / 2,   c1 = eps / 2 + D * max_t ||h(t)||^2 / (2 eps),

whose empirical margins are checked on a probe battery every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backends as bk
from . import coords as co
from .backends import AlgebraElement
from .calculus import TangentVector, gradient, hilbert_norm, right_act, zero_tangent
from .dirichlet import DirichletSpace, semigroup_apply

SCHEMES = ("implicit-euler", "crank-nicolson")


@dataclass(frozen=True)
class TripleMaps:
    """Real-coordinate data of the Gelfand triple."""

    dim_real: int
    m_gram: np.ndarray          # L^2 Gram (identity)
    e_gram: np.ndarray          # V Gram: identity + realified generator
    condition: float            # conditioning of the V Gram

    def v_norm_sq(self, x: np.ndarray) -> float:
        return float(x @ (self.e_gram @ x))

    def h_norm_sq(self, x: np.ndarray) -> float:
        return float(x @ x)

    def dual_riesz(self, x: np.ndarray) -> np.ndarray:
        """V-representative of the functional v -> <x, v>_H."""
        return np.linalg.solve(self.e_gram, self.m_gram @ x)


def assemble_triple(space: DirichletSpace) -> TripleMaps:
    D = space.dim
    gen_r = co.realify_operator(space.generator)
    e_gram = np.eye(2 * D) + gen_r
    cond = float((1.0 + space.evals[-1]) / (1.0 + space.evals[0]))
    return TripleMaps(2 * D, np.eye(2 * D), e_gram, cond)


@dataclass
class EvolutionProblem:
    space: DirichletSpace
    form: str                                   # "heat" | "continuity"
    u0: AlgebraElement
    horizon: float
    dt: float
    scheme: str = "implicit-euler"
    epsilon: float = 0.0
    flow_times: list[float] | None = None
    flow: list[TangentVector] | None = None
    source_times: list[float] | None = None
    source: list[AlgebraElement] | None = None
    certificates: tuple[float, float] | None = None   # (c0, c1) override

    def __post_init__(self):
        if self.form not in ("heat", "continuity"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.epsilon < 0:
            raise ValueError("viscosity must be nonnegative")
        if not bk.same_backend(self.u0.backend, self.space.backend):
            raise bk.BackendMismatch("initial value backend mismatch")
        if self.form == "continuity" and self.flow is None:
            self.flow = [zero_tangent(self.space)]
            self.flow_times = [0.0]
        if self.flow is not None and self.flow_times is None:
            self.flow_times = [0.0] if len(self.flow) == 1 else list(
                np.linspace(0.0, self.horizon, len(self.flow))
            )
        if self.source is not None and self.source_times is None:
            self.source_times = [0.0] if len(self.source) == 1 else list(
                np.linspace(0.0, self.horizon, len(self.source))
            )

    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


def _interp_weights(times, t: float) -> tuple[int, int, float]:
    ts = np.asarray(times, dtype=float)
    if ts.size == 1 or t <= ts[0]:
        return 0, 0, 0.0
    if t >= ts[-1]:
        return len(ts) - 1, len(ts) - 1, 0.0
    j = int(np.searchsorted(ts, t, side="right")) - 1
    w = float((t - ts[j]) / (ts[j + 1] - ts[j]))
    return j, j + 1, w


def flow_at(problem: EvolutionProblem, t: float) -> TangentVector:
    i, j, w = _interp_weights(problem.flow_times, t)
    if i == j or w == 0.0:
        return problem.flow[i]
    return (1.0 - w) * problem.flow[i] + w * problem.flow[j]


def source_real(problem: EvolutionProblem, t: float) -> np.ndarray:
    D2 = 2 * problem.space.dim
    if problem.source is None:
        return np.zeros(D2)
    i, j, w = _interp_weights(problem.source_times, t)
    c = (1.0 - w) * bk.to_l2(problem.source[i]) + w * bk.to_l2(problem.source[j])
    return co.realify_vector(c)


def _transport_matrix(space: DirichletSpace, h: TangentVector) -> np.ndarray:
    """Real matrix of (u, v) -> Re< h . u, grad v > on real coordinates."""
    D = space.dim
    k = len(h.parts)
    HB = np.empty((D, k, D), dtype=np.complex128)   # h . e_l per component
    GB = np.empty((D, k, D), dtype=np.complex128)   # grad e_k per component
    e = np.zeros(D, dtype=np.complex128)
    for col in range(D):
        e[col] = 1.0
        basis_el = bk.from_l2(space.backend, e)
        hu = right_act(h, basis_el)
        gu = gradient(space, basis_el)
        for c in range(k):
            HB[col, c] = bk.to_l2(hu.parts[c])
            GB[col, c] = bk.to_l2(gu.parts[c])
        e[col] = 0.0
    # S[a, b] = < h . e_b, grad e_a >  (antilinear in b)
    S = np.einsum("bcd,acd->ab", HB.conj(), GB)
    return np.block([[S.real, S.imag], [-S.imag, S.real]])


def form_matrix(problem: EvolutionProblem, t: float) -> np.ndarray:
    gen_r = co.realify_operator(problem.space.generator)
    if problem.form == "heat":
        return gen_r
    A = problem.epsilon * gen_r
    h = flow_at(problem, t)
    if any(bk.norm_l2(p) > 0 for p in h.parts):
        A = A + _transport_matrix(problem.space, h)
    return A


def step(problem: EvolutionProblem, x: np.ndarray, t: float) -> tuple[np.ndarray, float]:
    """Advance one step from time t; returns (next coordinates, relative
    residual of the linear solve)."""
    dt = problem.dt
    if problem.scheme == "implicit-euler":
        A_next = form_matrix(problem, t + dt)
        lhs = np.eye(x.size) + dt * A_next
        rhs = x + dt * source_real(problem, t + dt)
    else:
        A_now = form_matrix(problem, t)
        A_next = form_matrix(problem, t + dt)
        lhs = np.eye(x.size) + 0.5 * dt * A_next
        rhs = (np.eye(x.size) - 0.5 * dt * A_now) @ x + 0.5 * dt * (
            source_real(problem, t) + source_real(problem, t + dt)
        )
    try:
        x_next = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        cond = float(np.linalg.cond(lhs))
        raise bk.AlgebraError(
            f"singular step matrix at t={t + dt:g} (condition {cond:.3e}); "
            "pure transport with eps=0 can lose coercivity"
        ) from exc
    resid = float(np.linalg.norm(lhs @ x_next - rhs) / max(np.linalg.norm(rhs), 1e-300))
    return x_next, resid


def default_certificates(problem: EvolutionProblem) -> tuple[float, float] | None:
    if problem.certificates is not None:
        return problem.certificates
    if problem.form == "heat":
        return (1.0, 1.0)
    if problem.epsilon <= 0.0:
        return None
    D = problem.space.dim
    hmax = 0.0
    for h in problem.flow or []:
        hmax = max(hmax, hilbert_norm(h))
    eps = problem.epsilon
    return (eps / 2.0, eps / 2.0 + D * hmax * hmax / (2.0 * eps))


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: np.ndarray                 # (n_steps + 1, 2D) real coordinates
    conservation_defect: np.ndarray    # per recorded time
    coercivity_margin: np.ndarray | None
    boundedness_ratio: np.ndarray | None
    solve_residual_max: float
    terminal_error_vs_oracle: float | None
    flags: list[str] = field(default_factory=list)

    def element_at(self, space: DirichletSpace, k: int) -> AlgebraElement:
        return co.element_from_real(space, self.states[k])


def solve_evolution(problem: EvolutionProblem, rng: np.random.Generator | None = None,
                    probes: int = 8) -> EvolutionResult:
    space = problem.space
    n = problem.n_steps()
    if abs(n * problem.dt - problem.horizon) > 1e-9 * problem.horizon:
        raise ValueError("horizon must be an integer number of steps")
    D2 = 2 * space.dim
    triple = assemble_triple(space)
    unit_r = co.realify_vector(bk.to_l2(bk.unit(space.backend)))
    certs = default_certificates(problem)
    flags: list[str] = []
    if certs is None:
        flags.append("epsilon=0: coercivity hypotheses unverified")
    probe_vs = None
    if rng is not None:
        probe_vs = rng.standard_normal((probes, D2))
        probe_vs /= np.linalg.norm(probe_vs, axis=1, keepdims=True)

    xs = np.empty((n + 1, D2))
    xs[0] = co.realify_vector(bk.to_l2(problem.u0))
    times = problem.dt * np.arange(n + 1)
    defects = np.zeros(n + 1)
    margins = np.empty(n) if (probe_vs is not None and certs is not None) else None
    bounds = np.empty(n) if probe_vs is not None else None
    resid_max = 0.0
    source_acc = 0.0
    for k in range(n):
        t = float(times[k])
        if probe_vs is not None:
            A = form_matrix(problem, t + problem.dt)
            if margins is not None:
                c0, c1 = certs
                vals = [
                    float(v @ (A @ v)) - c0 * triple.v_norm_sq(v) + c1 * triple.h_norm_sq(v)
                    for v in probe_vs
                ]
                margins[k] = min(vals)
            ratios = []
            for i in range(probes):
                for j in range(i, probes):
                    v, w = probe_vs[i], probe_vs[j]
                    denom = math.sqrt(triple.v_norm_sq(v) * triple.v_norm_sq(w))
                    ratios.append(abs(float(v @ (A @ w))) / max(denom, 1e-300))
            bounds[k] = max(ratios)
        xs[k + 1], resid = step(problem, xs[k], t)
        resid_max = max(resid_max, resid)
        if problem.scheme == "implicit-euler":
            source_acc += problem.dt * float(source_real(problem, t + problem.dt) @ unit_r)
        else:
            source_acc += 0.5 * problem.dt * float(
                (source_real(problem, t) + source_real(problem, t + problem.dt)) @ unit_r
            )
        defects[k + 1] = float(xs[k + 1] @ unit_r - xs[0] @ unit_r) - source_acc

    terminal_error = None
    if problem.form == "heat" and problem.source is None:
        exact = semigroup_apply(space, problem.horizon, problem.u0)
        terminal_error = float(
            np.linalg.norm(xs[-1] - co.realify_vector(bk.to_l2(exact)))
        )
    return EvolutionResult(
        times=times,
        states=xs,
        conservation_defect=defects,
        coercivity_margin=margins,
        boundedness_ratio=bounds,
        solve_residual_max=resid_max,
        terminal_error_vs_oracle=terminal_error,
        flags=flags,
    )
