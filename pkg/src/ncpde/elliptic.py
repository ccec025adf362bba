"""Weak solutions of div(grad u) = f and of the monotone quasilinear
problem div(F(grad u)) = f.

The linear problem is solved twice, through deliberately independent
routes: diagonal inversion in the generator's eigenbasis, and conjugate
gradients on the Dirichlet energy functional

    I(u) = ||grad u||^2 / 2 - Re<f, u>

over real coordinates of the kernel complement.  The quasilinear problem
is projected onto an energy-orthonormal eigenbasis of the kernel
complement (Galerkin), and the resulting finite root problem V(d) = 0 is
solved by damped Newton with a finite-difference Jacobian, warm-started
through a short hierarchy of Galerkin levels, with a damped fixed-point
fallback for maps whose Jacobian is unreliable.

Solvability gate: in finite dimensions a weak solution exists only for
right-hand sides orthogonal to the generator kernel.  Kernel mass beyond
tolerance is a hard error unless the caller opts into projection, in
which case the discarded mass is recorded on the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import backends as bk
from . import coords as co
from .backends import AlgebraElement
from .calculus import (
    TangentVector,
    divergence,
    gradient,
    hilbert_inner,
    hilbert_norm,
    random_tangent,
    zero_tangent,
)
from .dirichlet import DirichletSpace
from .reports import Report, check_ge, check_le


class NoSolution(bk.AlgebraError):
    """The right-hand side has kernel mass beyond tolerance."""

    def __init__(self, mass: float, tol: float):
        super().__init__(f"kernel component {mass:.3e} exceeds tolerance {tol:.3e}")
        self.mass = mass
        self.tol = tol


class ConvergenceFailure(bk.AlgebraError):
    pass


@dataclass
class SolveReport:
    solution: AlgebraElement
    residual_weak: float
    residual_strong: float | None
    iterations: int
    galerkin_dim: int
    kernel_component: float
    method: str
    flags: list[str] = field(default_factory=list)
    energy_value: float | None = None
    energy_history: list[float] | None = None
    level_residuals: list[float] | None = None


KERNEL_RTOL = 1e-10


def _gate_kernel(space: DirichletSpace, f: AlgebraElement, project: bool,
                 flags: list[str]) -> tuple[np.ndarray, float]:
    c = bk.to_l2(f)
    mass = co.kernel_component(space, c)
    tol = KERNEL_RTOL * max(np.linalg.norm(c), 1e-300)
    if mass > tol:
        if not project:
            raise NoSolution(mass, tol)
        c = co.project_off_kernel(space, c)
        flags.append(f"projected_kernel_mass={mass:.6e}")
    return c, mass


def _weak_residual(space: DirichletSpace, Fh: TangentVector, f: AlgebraElement) -> float:
    """max_k |<F(grad u), grad w_k> - <f, w_k>| over the full eigenbasis of
    the domain (kernel included), normalized by ||f||."""
    div_F = divergence(space, Fh)
    r = bk.to_l2(div_F) - bk.to_l2(f)
    # <F(grad u), grad w> = <div F(grad u), w> since div is the adjoint
    proj = space.evecs.conj().T @ r
    return float(np.abs(proj).max() / max(bk.norm_l2(f), 1e-300))


def solve_poisson(space: DirichletSpace, f: AlgebraElement, *,
                  project_kernel: bool = False) -> SolveReport:
    """Spectral solution of div(grad u) = f on the kernel complement."""
    flags: list[str] = []
    c, mass = _gate_kernel(space, f, project_kernel, flags)
    lam, W = co.perp_eigenbasis(space)
    coeff = W.conj().T @ c
    u = W @ (coeff / lam)
    sol = bk.from_l2(space.backend, u)
    strong = bk.norm_l2(bk.from_l2(space.backend, space.generator @ u) - f)
    return SolveReport(
        solution=sol,
        residual_weak=_weak_residual(space, gradient(space, sol), f),
        residual_strong=float(strong / max(bk.norm_l2(f), 1e-300)),
        iterations=0,
        galerkin_dim=int(lam.size),
        kernel_component=mass,
        method="spectral",
        flags=flags,
    )


def minimize_dirichlet_energy(space: DirichletSpace, f: AlgebraElement, *,
                              project_kernel: bool = False, tol: float = 1e-13,
                              max_iter: int | None = None) -> SolveReport:
    """Conjugate-gradient minimization of I(u) = E[u]/2 - Re<f, u> over real
    coordinates of the kernel complement; independent of the eigensystem."""
    flags: list[str] = []
    c, mass = _gate_kernel(space, f, project_kernel, flags)
    A = co.realify_operator(space.generator)
    b = co.realify_vector(c)
    n = b.size
    max_iter = 4 * n if max_iter is None else max_iter
    x = np.zeros(n)
    r = b.copy()
    d = r.copy()
    rr = float(r @ r)
    history = [0.0]
    stop = tol * max(math.sqrt(float(b @ b)), 1e-300)
    iters = 0
    while math.sqrt(rr) > stop and iters < max_iter:
        Ad = A @ d
        alpha = rr / float(d @ Ad)
        x = x + alpha * d
        r = r - alpha * Ad
        rr_new = float(r @ r)
        d = r + (rr_new / rr) * d
        rr = rr_new
        iters += 1
        history.append(float(0.5 * x @ (A @ x) - b @ x))
    if math.sqrt(rr) > stop:
        raise ConvergenceFailure(f"conjugate gradients stalled at residual {math.sqrt(rr):.3e}")
    if any(h2 > h1 + 1e-12 * (1 + abs(h1)) for h1, h2 in zip(history, history[1:])):
        flags.append("energy_not_monotone")
    sol = co.element_from_real(space, x)
    strong = bk.norm_l2(bk.from_l2(space.backend, space.generator @ bk.to_l2(sol)) - f)
    return SolveReport(
        solution=sol,
        residual_weak=_weak_residual(space, gradient(space, sol), f),
        residual_strong=float(strong / max(bk.norm_l2(f), 1e-300)),
        iterations=iters,
        galerkin_dim=n,
        kernel_component=mass,
        method="variational-cg",
        flags=flags,
        energy_value=history[-1],
        energy_history=history,
    )


# ---------------------------------------------------------------------------
# Nonlinear maps on the tangent module
# ---------------------------------------------------------------------------


@dataclass
class NonlinearMap:
    """A map F on tangent vectors with its declared structure constants:
    growth ||F(h)|| <= c0 (1 + ||h||), coercivity Re<F(h), h> >= c1 ||h|| - c2,
    and strong monotonicity modulus theta (None if only plain monotone)."""

    func: Callable[[TangentVector], TangentVector]
    name: str
    c0: float
    c1: float
    c2: float
    theta: float | None = None

    def __call__(self, h: TangentVector) -> TangentVector:
        return self.func(h)


def identity_map() -> NonlinearMap:
    return NonlinearMap(lambda h: h, "identity", c0=1.0, c1=1.0, c2=0.25, theta=1.0)


def curved_map(beta: float = 1.0) -> NonlinearMap:
    """F(h) = h + beta * h / sqrt(1 + ||h||^2): the gradient of the strongly
    convex functional ||v||^2/2 + beta sqrt(1 + ||v||^2), hence 1-strongly
    monotone for beta >= 0."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")

    def f(h: TangentVector) -> TangentVector:
        s = 1.0 + beta / math.sqrt(1.0 + hilbert_norm(h) ** 2)
        return s * h

    return NonlinearMap(f, f"curved(beta={beta:g})", c0=1.0 + beta, c1=1.0, c2=0.25, theta=1.0)


def negated_map() -> NonlinearMap:
    """F(h) = -h; fails every probe, kept as a negative control."""
    return NonlinearMap(lambda h: -h, "negated", c0=1.0, c1=1.0, c2=0.0, theta=None)


def probe_map(space: DirichletSpace, F: NonlinearMap, rng: np.random.Generator,
              samples: int = 200, *, radius: int | None = None,
              tol: float = 1e-9) -> Report:
    """Statistical verification of monotonicity, growth and coercivity.

    Coercivity is probed in the declared linear form Re<F(h), h> >=
    c1 ||h|| - c2 and, additionally, in the quadratic form with the same
    constants; both margins are reported.
    """
    report = Report(kind="probe-map", extra={"map": F.name, "samples": samples})
    mono = np.inf
    growth = 0.0
    coer_lin = np.inf
    coer_quad = np.inf
    for _ in range(samples):
        h = random_tangent(space, rng, radius=radius)
        v = random_tangent(space, rng, radius=radius)
        scale_ = rng.uniform(0.1, 3.0)
        h = scale_ * h
        dF = F(h) - F(v)
        dh = h - v
        mono = min(mono, hilbert_inner(dF, dh).real
                   / max(hilbert_norm(dh) ** 2, 1e-300))
        nh = hilbert_norm(h)
        growth = max(growth, hilbert_norm(F(h)) / (1.0 + nh))
        pairing = hilbert_inner(F(h), h).real
        coer_lin = min(coer_lin, pairing - F.c1 * nh + F.c2)
        coer_quad = min(coer_quad, pairing - F.c1 * nh ** 2 + F.c2)
    report.checks.append(check_ge("monotonicity_margin", float(mono), -tol))
    report.checks.append(check_le("growth_ratio", float(growth), F.c0 + tol))
    report.checks.append(check_ge("coercivity_margin_linear", float(coer_lin), -tol))
    report.extra["coercivity_margin_quadratic"] = float(coer_quad)
    if F.theta is not None:
        report.checks.append(check_ge("strong_monotonicity_margin",
                                      float(mono) - F.theta, -tol))
    return report


# ---------------------------------------------------------------------------
# Quasilinear Galerkin solve
# ---------------------------------------------------------------------------


@dataclass
class QuasilinearOptions:
    tol: float = 1e-12
    max_newton: int = 60
    fd_step: float = 1e-6
    probe_samples: int = 64
    force: bool = False               # skip the structure probes
    project_kernel: bool = False
    init: np.ndarray | None = None    # initial real coefficients (full level)
    seed_probe: int = 20_240_101


def _galerkin_data(space: DirichletSpace):
    lam, B = co.energy_orthonormal_basis(space)
    M = B.shape[1]
    grads = []
    for j in range(M):
        e = co.element_from_real(space, B[:, j])
        grads.append(gradient(space, e))
    return lam, B, grads


def _tangent_sum(space: DirichletSpace, grads, d: np.ndarray) -> TangentVector:
    acc = zero_tangent(space)
    for dj, g in zip(d, grads):
        if dj != 0.0:
            acc = acc + float(dj) * g
    return acc


def solve_quasilinear(space: DirichletSpace, F: NonlinearMap, f: AlgebraElement,
                      opts: QuasilinearOptions | None = None,
                      rng: np.random.Generator | None = None) -> SolveReport:
    """Damped-Newton solve of the Galerkin system
    V_k(d) = Re<F(sum_j d_j grad w_j), grad w_k> - Re<f, w_k> = 0
    over the full energy-orthonormal eigenbasis, warm-started through
    coarser Galerkin levels."""
    opts = opts or QuasilinearOptions()
    flags: list[str] = []
    if not opts.force:
        probe_rng = np.random.default_rng(opts.seed_probe)
        probe = probe_map(space, F, probe_rng, samples=opts.probe_samples,
                          radius=_safe_radius(space))
        if not probe.passed:
            failed = [c.name for c in probe.checks if not c.passed]
            raise ConvergenceFailure(f"map {F.name} failed structure probes: {failed}")
    c, mass = _gate_kernel(space, f, opts.project_kernel, flags)
    lam, B, grads = _galerkin_data(space)
    M = B.shape[1]
    f_real = co.realify_vector(c)
    rhs = B.T @ f_real          # Re<f, w_k> on the energy-orthonormal basis

    def V(d: np.ndarray) -> np.ndarray:
        Fh = F(_tangent_sum(space, grads, d))
        out = np.empty(M)
        for k in range(M):
            out[k] = hilbert_inner(Fh, grads[k]).real
        return out - rhs

    # note <F, grad w_k> is antilinear in F; Re makes the system real

    d = np.zeros(M) if opts.init is None else np.asarray(opts.init, dtype=float).copy()
    if d.size != M:
        raise ValueError(f"initial guess has {d.size} coefficients, expected {M}")
    scale_ = max(np.linalg.norm(rhs), 1e-300)
    levels = sorted({max(2, M // 4), max(2, M // 2), M})
    total_iters = 0
    level_residuals = []
    for m in levels:
        mask = np.zeros(M, bool)
        mask[:m] = True
        d, iters = _newton_masked(V, d, mask, opts, scale_)
        total_iters += iters
        level_residuals.append(float(np.linalg.norm(V(d), np.inf)))
    if level_residuals[-1] > opts.tol * scale_:
        raise ConvergenceFailure(
            f"quasilinear solve stalled at residual {level_residuals[-1]:.3e}"
        )
    sol = co.element_from_real(space, B @ d)
    Fh = F(gradient(space, sol))
    strong = bk.norm_l2(divergence(space, Fh) - f) / max(bk.norm_l2(f), 1e-300)
    return SolveReport(
        solution=sol,
        residual_weak=_weak_residual(space, Fh, f),
        residual_strong=float(strong),
        iterations=total_iters,
        galerkin_dim=M,
        kernel_component=mass,
        method="galerkin-newton",
        flags=flags,
        level_residuals=level_residuals,
    )


def _safe_radius(space: DirichletSpace) -> int | None:
    if isinstance(space.backend, bk.NCTorus):
        return max(space.backend.level // 2, 1)
    return None


def _newton_masked(V, d0: np.ndarray, mask: np.ndarray, opts: QuasilinearOptions,
                   scale_: float) -> tuple[np.ndarray, int]:
    """Damped Newton on the masked coordinates with finite-difference
    Jacobian and Armijo backtracking on ||V||^2; falls back to a damped
    fixed-point sweep when a step cannot reduce the residual."""
    d = d0.copy()
    idx = np.flatnonzero(mask)
    stop = opts.tol * scale_
    for it in range(opts.max_newton):
        rm = V(d)[idx]
        if np.linalg.norm(rm, np.inf) <= stop:
            return d, it
        J = np.empty((idx.size, idx.size))
        for col, j in enumerate(idx):
            h = opts.fd_step * (1.0 + abs(d[j]))
            dp = d.copy()
            dp[j] += h
            J[:, col] = (V(dp)[idx] - rm) / h
        try:
            step = np.linalg.solve(J, rm)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, rm, rcond=None)[0]
        base = float(rm @ rm)
        alpha = 1.0
        while alpha >= 1e-10:
            trial = d.copy()
            trial[idx] -= alpha * step
            rt = V(trial)[idx]
            if float(rt @ rt) <= (1.0 - 1e-4 * alpha) * base:
                d = trial
                break
            alpha *= 0.5
        else:
            # fixed-point fallback: d <- d - alpha V(d), valid for monotone maps
            alpha_fp = 0.5
            improved = False
            for _ in range(40):
                trial = d.copy()
                trial[idx] -= alpha_fp * rm
                rt = V(trial)[idx]
                if float(rt @ rt) < base:
                    d = trial
                    improved = True
                    break
                alpha_fp *= 0.5
            if not improved:
                raise ConvergenceFailure("Newton and fixed-point steps both stagnated")
    rm = V(d)[idx]
    if np.linalg.norm(rm, np.inf) > stop:
        raise ConvergenceFailure(
            f"Newton did not converge in {opts.max_newton} iterations "
            f"(residual {np.linalg.norm(rm, np.inf):.3e})"
        )
    return d, opts.max_newton
