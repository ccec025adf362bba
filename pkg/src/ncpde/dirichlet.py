"""Markov generators, semigroups, Dirichlet forms and their verification.

Each backend carries a canonical conservative, tracially symmetric
generator acting on L^2(tau) coordinates:

* torus        -- diagonal, U^n V^m -> (n^2 + m^2) U^n V^m;
* matrix       -- sum of double commutators a -> sum_j [v_j, [v_j, a]]
                  over the descriptor's self-adjoint generators;
* cyclic group -- multiplication of the coefficient function by the
                  length, (L f)(g) = l(g) f(g).

The associated quadratic form is E(a, b) = <a, L b>, the semigroup is
exp(-t L) through the cached eigensystem, and the carre du champ density
is recovered from the diffusion identity
2 Gamma(a, b) = L(a^*) b + a^* L(b) - L(a^* b).

``markov_check`` verifies unitality, contraction, trace symmetry and
complete positivity (via the Choi matrix of the semigroup transported to
the representation); ``bakry_emery_check`` tests the gradient-estimate
ordering Gamma(P_t a) <= e^{-2 K t} P_t Gamma(a) and locates the largest
passing curvature bound by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends as bk
from .backends import (
    AlgebraElement,
    CyclicGroup,
    Density,
    Descriptor,
    MatrixAlgebra,
    NCTorus,
    NotPositive,
)
from .reports import Report, check_ge, check_le

GAP_RTOL = 1e-8   # eigenvalues below GAP_RTOL * lambda_max count as kernel


class GeneratorError(bk.AlgebraError):
    """The generator matrix violates a structural invariant."""


@dataclass(frozen=True, eq=False, repr=False)
class DirichletSpace:
    """A backend together with the generator of its Markov semigroup on
    L^2 coordinates and that generator's cached eigensystem."""

    backend: Descriptor
    generator: np.ndarray        # (D, D) Hermitian PSD
    evals: np.ndarray            # ascending, real
    evecs: np.ndarray            # orthonormal columns
    kernel_dim: int
    gap_tol: float

    def __repr__(self):
        return (
            f"DirichletSpace({self.backend!r}, dim={self.evals.size}, "
            f"kernel_dim={self.kernel_dim})"
        )

    @property
    def dim(self) -> int:
        return self.evals.size

    def kernel_cut(self) -> float:
        lam_max = float(self.evals[-1]) if self.evals.size else 0.0
        return self.gap_tol * max(lam_max, 1e-300)


def torus_multipliers(desc: NCTorus) -> np.ndarray:
    ns = np.arange(-desc.level, desc.level + 1)
    return (ns[:, None] ** 2 + ns[None, :] ** 2).astype(float)


def _generator_matrix(desc: Descriptor) -> np.ndarray:
    if isinstance(desc, NCTorus):
        return np.diag(torus_multipliers(desc).reshape(-1)).astype(np.complex128)
    if isinstance(desc, CyclicGroup):
        return np.diag(np.asarray(desc.lengths, dtype=float)).astype(np.complex128)
    n = desc.dim
    eye = np.eye(n, dtype=np.complex128)
    gen = np.zeros((n * n, n * n), dtype=np.complex128)
    for v in desc.generators:
        v2 = v @ v
        # row-major vec(AXB) = kron(A, B^T) vec(X)
        gen += np.kron(v2, eye) + np.kron(eye, v2.T) - 2.0 * np.kron(v, v.T)
    return gen


def build_space(desc: Descriptor, gap_tol: float = GAP_RTOL) -> DirichletSpace:
    gen = _generator_matrix(desc)
    diag = np.diagonal(gen)
    if np.count_nonzero(gen - np.diag(diag)) == 0:
        # exact eigensystem for diagonal generators (torus, cyclic,
        # commuting matrix generators): sorted diagonal + permutation
        order = np.argsort(diag.real, kind="stable")
        evals = diag.real[order].copy()
        evecs = np.eye(gen.shape[0], dtype=np.complex128)[:, order]
    else:
        evals, evecs = np.linalg.eigh(gen)
    lam_max = max(float(evals[-1]), 0.0)
    if float(evals[0]) < -1e-10 * max(lam_max, 1e-300):
        raise GeneratorError(f"generator is not PSD (min eigenvalue {evals[0]:.3e})")
    recon = (evecs * evals) @ evecs.conj().T
    if np.linalg.norm(recon - gen) > 1e-10 * max(np.linalg.norm(gen), 1e-300):
        raise GeneratorError("eigensystem does not reconstruct the generator")
    unit_coords = bk.to_l2(bk.unit(desc))
    if np.linalg.norm(gen @ unit_coords) > 1e-10 * max(lam_max, 1e-300):
        raise GeneratorError("generator does not annihilate the unit")
    kernel_dim = int(np.sum(evals < gap_tol * max(lam_max, 1e-300)))
    return DirichletSpace(desc, gen, evals, evecs, kernel_dim, gap_tol)


def space_from_matrix(desc: Descriptor, gen: np.ndarray, *, validate: bool = True,
                      gap_tol: float = GAP_RTOL) -> DirichletSpace:
    """Build a space around an explicit generator matrix (mainly for
    negative tests; ``validate=False`` skips the PSD/conservativity gates)."""
    gen = np.asarray(gen, dtype=np.complex128)
    evals, evecs = np.linalg.eigh(gen)
    lam_max = max(float(np.abs(evals).max()), 1e-300)
    if validate:
        if float(evals[0]) < -1e-10 * lam_max:
            raise GeneratorError("generator is not PSD")
        unit_coords = bk.to_l2(bk.unit(desc))
        if np.linalg.norm(gen @ unit_coords) > 1e-10 * lam_max:
            raise GeneratorError("generator does not annihilate the unit")
    kernel_dim = int(np.sum(np.abs(evals) < gap_tol * lam_max))
    return DirichletSpace(desc, gen, evals, evecs, kernel_dim, gap_tol)


def _coords(space: DirichletSpace, a: AlgebraElement) -> np.ndarray:
    if not bk.same_backend(space.backend, a.backend):
        raise bk.BackendMismatch("element does not belong to this space")
    return bk.to_l2(a)


def generator_apply(space: DirichletSpace, a: AlgebraElement) -> AlgebraElement:
    return bk.from_l2(space.backend, space.generator @ _coords(space, a))


def semigroup_apply(space: DirichletSpace, t: float, a: AlgebraElement) -> AlgebraElement:
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    c = space.evecs.conj().T @ _coords(space, a)
    c = np.exp(-t * space.evals) * c
    return bk.from_l2(space.backend, space.evecs @ c)


def dirichlet_form(space: DirichletSpace, a: AlgebraElement,
                   b: AlgebraElement | None = None) -> complex:
    """E(a, b) = <a, L b>; antilinear in the first slot.  E(a) := E(a, a)."""
    cb = _coords(space, a if b is None else b)
    return complex(np.vdot(_coords(space, a), space.generator @ cb))


def energy(space: DirichletSpace, a: AlgebraElement) -> float:
    return float(dirichlet_form(space, a).real)


# ---------------------------------------------------------------------------
# Carre du champ
# ---------------------------------------------------------------------------


def carre_du_champ(space: DirichletSpace, a: AlgebraElement,
                   b: AlgebraElement | None = None, *,
                   enforce: bool = True) -> Density:
    """Density of Gamma(a, b) via the polarized diffusion identity
    2 Gamma(a, b) = L(a^*) b + a^* L(b) - L(a^* b).

    For the diagonal call Gamma(a) := Gamma(a, a) the result must be a
    positive (leak-free) density; a witness failure there means the
    generator lost its Markov structure, so it raises.
    """
    diagonal = b is None or np.array_equal(a.data, b.data)
    bb = a if b is None else b
    astar = bk.adjoint(a)
    t1, l1 = bk.mul_with_loss(generator_apply(space, astar), bb)
    t2, l2 = bk.mul_with_loss(astar, generator_apply(space, bb))
    prod, l3 = bk.mul_with_loss(astar, bb)
    t3 = generator_apply(space, prod)
    gamma = bk.scale(0.5, bk.add(bk.add(t1, t2), bk.scale(-1.0, t3)))
    leak = l1 + l2 + l3
    witness = None
    if bk.is_self_adjoint(gamma):
        witness = float(np.linalg.eigvalsh(bk.represent(gamma)).min())
    if diagonal and enforce:
        tol = bk.positivity_tol(space.backend)
        scale_ = max(bk.norm_l2(gamma), 1.0)
        if leak <= tol * scale_ and witness is not None and witness < -tol * scale_:
            raise NotPositive(
                f"carre du champ witness {witness:.3e}: generator is not a diffusion"
            )
    return Density(gamma, witness, leak)


# ---------------------------------------------------------------------------
# Poincare constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoincareResult:
    gap: float
    c_p: float
    kernel_dim: int
    battery_margin: float | None   # min over battery of C_P * E[a] - ||a||^2

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "C_P": self.c_p,
            "kernel_dim": self.kernel_dim,
            "battery_margin": self.battery_margin,
        }


def poincare_constant(space: DirichletSpace, rng: np.random.Generator | None = None,
                      battery: int = 32, tol: float = 1e-10) -> PoincareResult:
    """Spectral gap above the kernel, its inverse, and an optional random
    verification of ||a||^2 <= (C_P + tol) E[a] on the kernel complement."""
    cut = space.kernel_cut()
    above = space.evals[space.evals >= cut]
    if above.size == 0:
        raise GeneratorError("all eigenvalues sit in the kernel: no spectral gap")
    gap = float(above[0])
    c_p = 1.0 / gap
    margin = None
    if rng is not None:
        perp = space.evecs[:, space.kernel_dim:]
        worst = np.inf
        for _ in range(battery):
            c = rng.standard_normal(perp.shape[1]) + 1j * rng.standard_normal(perp.shape[1])
            a = bk.from_l2(space.backend, perp @ c)
            e = energy(space, a)
            worst = min(worst, (c_p + tol) * e - bk.norm_l2(a) ** 2)
        margin = float(worst)
    return PoincareResult(gap, c_p, space.kernel_dim, margin)


# ---------------------------------------------------------------------------
# Markovianity
# ---------------------------------------------------------------------------


def _rep_semigroup_action(space: DirichletSpace, t: float):
    """Canonical extension of P_t to the representation algebra M_d, or
    None when no exact extension exists (irrational theta; rational theta
    whose window is not in bijection with M_q)."""
    desc = space.backend
    if isinstance(desc, MatrixAlgebra):
        def act(X):
            return bk.represent(semigroup_apply(space, t, bk.element(desc, X)))
        return act, desc.dim
    if isinstance(desc, CyclicGroup):
        q = desc.order
        g = np.arange(q)
        phi = np.exp(-t * np.asarray(desc.lengths))
        schur = phi[(g[:, None] - g[None, :]) % q]
        return (lambda X: schur * X), q
    if desc.rational is not None and 2 * desc.level + 1 == desc.rational[1]:
        def act(X):
            elem = bk.element_from_matrix(desc, X)
            return bk.represent(semigroup_apply(space, t, elem))
        return act, desc.rational[1]
    return None, 0


def _choi_matrix(act, d: int) -> np.ndarray:
    choi = np.zeros((d * d, d * d), dtype=np.complex128)
    E = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            E[i, j] = 1.0
            choi[i * d : (i + 1) * d, j * d : (j + 1) * d] = act(E)
            E[i, j] = 0.0
    return choi


def markov_check(space: DirichletSpace, t_samples, rng: np.random.Generator,
                 battery: int = 16, tol: float = 1e-10) -> Report:
    """Unitality, operator-norm contraction, complete positivity (Choi)
    and trace symmetry of P_t at each sampled time."""
    desc = space.backend
    report = Report(kind="markov-check")
    one = bk.unit(desc)
    exact_rep = bk.rep_is_exact(desc)
    probes = [bk.random_element(desc, rng) for _ in range(battery)]
    for t in t_samples:
        t = float(t)
        unitality = bk.norm_l2(semigroup_apply(space, t, one) - one)
        report.checks.append(check_le(f"unitality[t={t:g}]", unitality, tol))

        if exact_rep:
            ratio = 0.0
            for a in probes:
                na = bk.operator_norm(a)
                if na > 0:
                    ratio = max(ratio, bk.operator_norm(semigroup_apply(space, t, a)) / na)
            report.checks.append(check_le(f"contraction[t={t:g}]", ratio - 1.0, tol))
        else:
            report.flags.append(f"contraction[t={t:g}] skipped: approximate representation")

        act, d = _rep_semigroup_action(space, t)
        if act is None:
            report.flags.append(f"choi_cp[t={t:g}] skipped: no exact representation of P_t")
        else:
            wit = float(np.linalg.eigvalsh(_choi_matrix(act, d)).min())
            report.checks.append(check_ge(f"choi_cp[t={t:g}]", wit, -tol))

        sym = 0.0
        for i in range(0, len(probes) - 1, 2):
            a, b = probes[i], probes[i + 1]
            lhs = bk.trace(bk.mul(a, semigroup_apply(space, t, b)))
            rhs = bk.trace(bk.mul(semigroup_apply(space, t, a), b))
            sym = max(sym, abs(lhs - rhs) / max(bk.norm_l2(a) * bk.norm_l2(b), 1e-300))
        report.checks.append(check_le(f"trace_symmetry[t={t:g}]", sym, tol))
    return report


# ---------------------------------------------------------------------------
# Bakry-Emery gradient estimate
# ---------------------------------------------------------------------------


def _be_margin(space: DirichletSpace, K: float, t: float, a: AlgebraElement) -> float:
    """min eigenvalue of represent(e^{-2Kt} P_t Gamma(a) - Gamma(P_t a))."""
    gamma_a = carre_du_champ(space, a, enforce=False).element
    factor = np.exp(min(-2.0 * K * t, 600.0))   # clamp: huge factors pass anyway
    lhs = bk.scale(factor, semigroup_apply(space, t, gamma_a))
    rhs = carre_du_champ(space, semigroup_apply(space, t, a), enforce=False).element
    diff = bk.add(lhs, bk.scale(-1.0, rhs))
    return float(np.linalg.eigvalsh(bk.represent(diff)).min())


def bakry_emery_check(space: DirichletSpace, K: float, t_samples, battery,
                      tol: float = 1e-9) -> Report:
    """Check Gamma(P_t a) <= e^{-2Kt} P_t Gamma(a) on a battery of elements
    and report the largest curvature bound passing on it (bisection)."""
    report = Report(kind="bakry-emery-check", extra={"K": float(K)})
    if not bk.rep_is_exact(space.backend):
        report.flags.append("skipped: approximate representation cannot order densities")
        return report
    pairs = [(float(t), a) for t in t_samples for a in battery]
    scales = [max(bk.norm_l2(carre_du_champ(space, a, enforce=False).element), 1.0)
              for _, a in pairs]

    def min_margin(k: float) -> float:
        return min(_be_margin(space, k, t, a) / s for (t, a), s in zip(pairs, scales))

    for (t, a), s in zip(pairs, scales):
        report.checks.append(
            check_ge(f"ordering[K={K:g},t={t:g}]", _be_margin(space, K, t, a) / s, -tol)
        )

    lo, hi = float(K), float(K)
    if min_margin(lo) < -tol:
        while min_margin(lo) < -tol and lo > -2.0 ** 20:
            lo = 2.0 * lo if lo < 0 else -max(1.0, 2.0 * abs(lo))
        hi = float(K)
    else:
        hi = max(1.0, 2.0 * abs(K))
        while min_margin(hi) >= -tol and hi < 2.0 ** 20:
            hi *= 2.0
    if min_margin(lo) < -tol:
        report.extra["largest_passing_K"] = None
        report.flags.append("no passing curvature bound found above -2^20")
        return report
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if min_margin(mid) >= -tol:
            lo = mid
        else:
            hi = mid
    report.extra["largest_passing_K"] = lo
    return report
