"""Concrete finite-dimensional noncommutative measure spaces.

A backend is a pair (algebra, trace): dense complex matrices with the
(unnormalized) matrix trace, a truncated twisted-Fourier model of the
rotation algebra generated by two unitaries with V U = e^{2 pi i theta} U V,
or the convolution algebra of a finite cyclic group with tau(f) = f(0).
Elements are immutable coefficient containers and every operation is a
pure function, so values are safe to share across threads.

Coefficient layouts (these double as the L^2(tau) coordinate order used by
the rest of the package):

* ``MatrixAlgebra``  -- (n, n) complex array; entry [i, j] multiplies the
  matrix unit e_ij, row-major flattening i*n + j.
* ``NCTorus``        -- (2N+1, 2N+1) complex grid; entry [n+N, m+N]
  multiplies U^n V^m, rows n = -N..N, columns m = -N..N, row-major.
* ``CyclicGroup``    -- length-q complex vector f(0..q-1); f acts by
  convolution, the unit is the delta at 0.

Products on the torus window are truncated back onto |n|,|m| <= N.
``mul_with_loss`` reports the L^2 mass of the discarded modes, so callers
that need exact algebra can insist on leak-free supports.  Traces and L^2
inner products of products are always exact: the (0,0) mode is never
truncated.

Positivity statements are delegated to ``represent``.  For matrices this is
the identity, for cyclic groups the circulant (regular) representation, for
a torus with reduced rational theta = p/q the clock-and-shift homomorphism
into M_q, and for irrational theta the window compression of the left
regular action, which is flagged approximate: it witnesses positivity but
is not multiplicative near the window boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np


class AlgebraError(Exception):
    """Base class for backend failures."""


class BackendMismatch(AlgebraError):
    """Elements of different backends were combined."""


class WindowOverflow(AlgebraError):
    """A clock-shift computation left the torus coefficient window."""


class NotSelfAdjoint(AlgebraError):
    pass


class NotPositive(AlgebraError):
    pass


class NotRepresentable(AlgebraError):
    """The requested operation needs an exact faithful representation."""


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------

_SA_RTOL = 1e-10          # scale-invariant self-adjointness tolerance
_CNT_RTOL = 1e-8          # negative-type eigencheck tolerance


@dataclass(frozen=True, eq=False, repr=False)
class MatrixAlgebra:
    """M_n with the unnormalized trace; the self-adjoint ``generators``
    drive the double-commutator Dirichlet structure downstream."""

    dim: int
    generators: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("matrix dimension must be >= 1")
        gens = tuple(np.asarray(v, dtype=np.complex128) for v in self.generators)
        if not gens:
            raise ValueError("at least one generator is required")
        for v in gens:
            if v.shape != (self.dim, self.dim):
                raise ValueError(f"generator shape {v.shape} != ({self.dim}, {self.dim})")
            scale = max(np.linalg.norm(v), 1.0)
            if np.linalg.norm(v - v.conj().T) > _SA_RTOL * scale:
                raise NotSelfAdjoint("matrix generators must be self-adjoint")
        object.__setattr__(self, "generators", gens)

    def __repr__(self):
        return f"MatrixAlgebra(dim={self.dim}, k={len(self.generators)})"


@dataclass(frozen=True, eq=False, repr=False)
class NCTorus:
    """Coefficient window |n|, |m| <= level of the rotation algebra.

    ``rational`` is an explicit (p, q) tag meaning theta == p/q; it is
    stored in lowest terms and is never inferred from the float value.
    """

    level: int
    theta: float
    rational: tuple[int, int] | None = None

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("truncation level must be >= 1")
        if not (0.0 <= self.theta < 1.0):
            raise ValueError("theta must lie in [0, 1)")
        if self.rational is not None:
            p, q = self.rational
            if q < 1 or not (0 <= p < q):
                raise ValueError("rational tag must satisfy 0 <= p < q")
            if self.theta != p / q:
                raise ValueError("rational tag disagrees with theta")
            g = math.gcd(p, q) or 1
            object.__setattr__(self, "rational", (p // g, q // g))

    def __repr__(self):
        tag = "" if self.rational is None else f", rational={self.rational}"
        return f"NCTorus(level={self.level}, theta={self.theta!r}{tag})"


def nc_torus_rational(level: int, p: int, q: int) -> NCTorus:
    return NCTorus(level=level, theta=p / q, rational=(p, q))


def negative_type_defect(lengths: tuple[float, ...] | np.ndarray) -> float:
    """Smallest eigenvalue of [l(g)+l(h)-l(g-h)] restricted to mean-zero
    vectors; conditionally-negative-type lengths give a nonnegative value."""
    l = np.asarray(lengths, dtype=float)
    q = l.size
    g = np.arange(q)
    K = l[g][:, None] + l[g][None, :] - l[(g[:, None] - g[None, :]) % q]
    P = np.eye(q) - np.full((q, q), 1.0 / q)
    return float(np.linalg.eigvalsh(P @ K @ P).min())


@dataclass(frozen=True, eq=False, repr=False)
class CyclicGroup:
    """Convolution algebra of Z_q with a symmetric length function of
    conditionally negative type (l(0)=0, l(k)=l(q-k), l >= 0)."""

    order: int
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("group order must be >= 2")
        l = tuple(float(x) for x in self.lengths)
        if len(l) != self.order:
            raise ValueError("need one length per group element")
        if l[0] != 0.0:
            raise ValueError("length of the identity must be 0")
        if any(x < 0 for x in l):
            raise ValueError("lengths must be nonnegative")
        for k in range(1, self.order):
            if abs(l[k] - l[self.order - k]) > 1e-12 * max(1.0, max(l)):
                raise ValueError("length function must satisfy l(k) = l(q-k)")
        defect = negative_type_defect(l)
        if defect < -_CNT_RTOL * max(1.0, max(l)):
            raise ValueError(
                f"length function is not conditionally of negative type (defect {defect:.3e})"
            )
        object.__setattr__(self, "lengths", l)

    def __repr__(self):
        return f"CyclicGroup(order={self.order}, lengths={self.lengths})"


Descriptor = Union[MatrixAlgebra, NCTorus, CyclicGroup]


def same_backend(a: Descriptor, b: Descriptor) -> bool:
    if a is b:
        return True
    if type(a) is not type(b):
        return False
    if isinstance(a, MatrixAlgebra):
        return (
            a.dim == b.dim
            and len(a.generators) == len(b.generators)
            and all(np.array_equal(u, v) for u, v in zip(a.generators, b.generators))
        )
    if isinstance(a, NCTorus):
        return a.level == b.level and a.theta == b.theta and a.rational == b.rational
    return a.order == b.order and a.lengths == b.lengths


def l2_dim(desc: Descriptor) -> int:
    if isinstance(desc, MatrixAlgebra):
        return desc.dim * desc.dim
    if isinstance(desc, NCTorus):
        w = 2 * desc.level + 1
        return w * w
    return desc.order


def rep_dim(desc: Descriptor) -> int:
    """Dimension of the matrix representation used for positivity checks."""
    if isinstance(desc, MatrixAlgebra):
        return desc.dim
    if isinstance(desc, NCTorus):
        if desc.rational is not None:
            return desc.rational[1]
        return l2_dim(desc)
    return desc.order


def rep_is_exact(desc: Descriptor) -> bool:
    """False only for the compressed (irrational-theta) torus representation."""
    return not (isinstance(desc, NCTorus) and desc.rational is None)


def positivity_tol(desc: Descriptor) -> float:
    # eigensolver noise scales with the representation dimension
    return 1e-10 * rep_dim(desc)


# ---------------------------------------------------------------------------
# Elements
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False, repr=False)
class AlgebraElement:
    backend: Descriptor
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128)   # always copy, then freeze
        shape = _data_shape(self.backend)
        if arr.shape != shape:
            raise ValueError(f"coefficient shape {arr.shape} != {shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __repr__(self):
        return f"AlgebraElement({self.backend!r}, ||.||_2={np.linalg.norm(self.data):.4g})"

    # value-style arithmetic sugar; the named functions below are the API
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(-1.0, other))

    def __neg__(self):
        return scale(-1.0, self)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return mul(self, other)
        return scale(other, self)

    def __rmul__(self, other):
        return scale(other, self)

    def __truediv__(self, other):
        return scale(1.0 / other, self)

    def star(self) -> "AlgebraElement":
        return adjoint(self)


def _data_shape(desc: Descriptor) -> tuple[int, ...]:
    if isinstance(desc, MatrixAlgebra):
        return (desc.dim, desc.dim)
    if isinstance(desc, NCTorus):
        w = 2 * desc.level + 1
        return (w, w)
    return (desc.order,)


def element(desc: Descriptor, data) -> AlgebraElement:
    return AlgebraElement(desc, np.asarray(data, dtype=np.complex128))


def zero(desc: Descriptor) -> AlgebraElement:
    return AlgebraElement(desc, np.zeros(_data_shape(desc)))


def unit(desc: Descriptor) -> AlgebraElement:
    data = np.zeros(_data_shape(desc), dtype=np.complex128)
    if isinstance(desc, MatrixAlgebra):
        data = np.eye(desc.dim, dtype=np.complex128)
    elif isinstance(desc, NCTorus):
        data[desc.level, desc.level] = 1.0
    else:
        data[0] = 1.0
    return AlgebraElement(desc, data)


def monomial(desc: NCTorus, n: int, m: int, coeff: complex = 1.0) -> AlgebraElement:
    """coeff * U^n V^m; (n, m) must lie in the coefficient window."""
    N = desc.level
    if abs(n) > N or abs(m) > N:
        raise WindowOverflow(f"monomial ({n},{m}) outside window +-{N}")
    data = np.zeros(_data_shape(desc), dtype=np.complex128)
    data[n + N, m + N] = coeff
    return AlgebraElement(desc, data)


def delta(desc: CyclicGroup, g: int, coeff: complex = 1.0) -> AlgebraElement:
    data = np.zeros(desc.order, dtype=np.complex128)
    data[g % desc.order] = coeff
    return AlgebraElement(desc, data)


def to_l2(a: AlgebraElement) -> np.ndarray:
    """Coordinates of ``a`` in the orthonormal L^2(tau) basis (row-major)."""
    return a.data.reshape(-1)


def from_l2(desc: Descriptor, vec: np.ndarray) -> AlgebraElement:
    return AlgebraElement(desc, np.asarray(vec, dtype=np.complex128).reshape(_data_shape(desc)))


def _check_same(a: AlgebraElement, b: AlgebraElement):
    if not same_backend(a.backend, b.backend):
        raise BackendMismatch(f"cannot combine {a.backend!r} with {b.backend!r}")


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------


def add(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    _check_same(a, b)
    return AlgebraElement(a.backend, a.data + b.data)


def scale(t: complex, a: AlgebraElement) -> AlgebraElement:
    return AlgebraElement(a.backend, complex(t) * a.data)


def mul_with_loss(a: AlgebraElement, b: AlgebraElement) -> tuple[AlgebraElement, float]:
    """Product together with the L^2 mass truncated away (torus only;
    exactly 0.0 for the other backends)."""
    _check_same(a, b)
    desc = a.backend
    if isinstance(desc, MatrixAlgebra):
        return AlgebraElement(desc, a.data @ b.data), 0.0
    if isinstance(desc, CyclicGroup):
        q = desc.order
        out = np.zeros(q, dtype=np.complex128)
        for y in range(q):
            if a.data[y] != 0.0:
                out += a.data[y] * np.roll(b.data, y)
        return AlgebraElement(desc, out), 0.0
    return _torus_mul(desc, a.data, b.data)


def mul(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    return mul_with_loss(a, b)[0]


def _torus_mul(desc: NCTorus, A: np.ndarray, B: np.ndarray) -> tuple[AlgebraElement, float]:
    # (U^p V^r)(U^n' V^m') = e^{2 pi i theta r n'} U^{p+n'} V^{r+m'}
    N = desc.level
    W = 2 * N + 1
    ns = np.arange(-N, N + 1)
    out = np.zeros((4 * N + 1, 4 * N + 1), dtype=np.complex128)
    for ip in range(W):
        row = A[ip]
        if not row.any():
            continue
        for ir in range(W):
            coeff = row[ir]
            if coeff == 0.0:
                continue
            r = ir - N
            phase = np.exp(2j * np.pi * desc.theta * r * ns)[:, None]
            out[ip : ip + W, ir : ir + W] += coeff * (phase * B)
    window = out[N : 3 * N + 1, N : 3 * N + 1].copy()
    total = np.linalg.norm(out)
    kept = np.linalg.norm(window)
    dropped = math.sqrt(max(total * total - kept * kept, 0.0))
    return AlgebraElement(desc, window), dropped


def adjoint(a: AlgebraElement) -> AlgebraElement:
    desc = a.backend
    if isinstance(desc, MatrixAlgebra):
        return AlgebraElement(desc, a.data.conj().T)
    if isinstance(desc, CyclicGroup):
        return AlgebraElement(desc, np.conj(np.roll(a.data[::-1], 1)))
    # (U^n V^m)^* = e^{2 pi i theta n m} U^{-n} V^{-m}
    N = desc.level
    ns = np.arange(-N, N + 1)
    phase = np.exp(2j * np.pi * desc.theta * np.outer(ns, ns))
    flipped = np.conj(a.data[::-1, ::-1])
    return AlgebraElement(desc, phase * flipped)


def trace(a: AlgebraElement) -> complex:
    desc = a.backend
    if isinstance(desc, MatrixAlgebra):
        return complex(np.trace(a.data))
    if isinstance(desc, CyclicGroup):
        return complex(a.data[0])
    return complex(a.data[desc.level, desc.level])


def inner_l2(a: AlgebraElement, b: AlgebraElement) -> complex:
    """tau(a^* b); antilinear in the first slot.  The coefficient bases are
    orthonormal so this is the plain coordinate inner product."""
    _check_same(a, b)
    return complex(np.vdot(to_l2(a), to_l2(b)))


def norm_l2(a: AlgebraElement) -> float:
    return float(np.linalg.norm(to_l2(a)))


def is_self_adjoint(a: AlgebraElement, rtol: float = _SA_RTOL) -> bool:
    return norm_l2(a - adjoint(a)) <= rtol * max(norm_l2(a), 1e-300)


# ---------------------------------------------------------------------------
# Representations
# ---------------------------------------------------------------------------


def _clock_shift(desc: NCTorus, n: int, m: int) -> np.ndarray:
    """Image of U^n V^m under U -> diag(1, w, ..., w^{q-1}), V -> the cyclic
    shift with ones on the (j, j+1 mod q) positions, w = e^{2 pi i p/q}."""
    p, q = desc.rational
    js = np.arange(q)
    clock_n = np.exp(2j * np.pi * p * js * n / q)
    mat = np.zeros((q, q), dtype=np.complex128)
    mat[js, (js + m) % q] = clock_n
    return mat


def represent(a: AlgebraElement) -> np.ndarray:
    """Faithful-or-witnessing matrix image of ``a``; see module docstring."""
    desc = a.backend
    if isinstance(desc, MatrixAlgebra):
        return a.data.copy()
    if isinstance(desc, CyclicGroup):
        q = desc.order
        g = np.arange(q)
        return a.data[(g[:, None] - g[None, :]) % q]
    N = desc.level
    if desc.rational is not None:
        q = desc.rational[1]
        out = np.zeros((q, q), dtype=np.complex128)
        for n in range(-N, N + 1):
            for m in range(-N, N + 1):
                c = a.data[n + N, m + N]
                if c != 0.0:
                    out += c * _clock_shift(desc, n, m)
        return out
    # compression of the left regular action onto the coefficient window
    D = l2_dim(desc)
    out = np.zeros((D, D), dtype=np.complex128)
    W = 2 * N + 1
    basis = np.zeros((W, W), dtype=np.complex128)
    for col in range(D):
        basis.reshape(-1)[col] = 1.0
        out[:, col] = mul(a, AlgebraElement(desc, basis)).data.reshape(-1)
        basis.reshape(-1)[col] = 0.0
    return out


def element_from_matrix(desc: Descriptor, X: np.ndarray, tol: float = 1e-10) -> AlgebraElement:
    """Inverse of ``represent`` where one exists.

    Rational-theta tori need an injective window (2N+1 <= q) and raise
    ``WindowOverflow`` if the matrix carries mass at exponents outside the
    window; the compressed irrational representation is not invertible.
    """
    if isinstance(desc, MatrixAlgebra):
        return AlgebraElement(desc, X)
    if isinstance(desc, CyclicGroup):
        return AlgebraElement(desc, X[:, 0])
    if desc.rational is None:
        raise NotRepresentable("irrational-theta representation is not invertible")
    N = desc.level
    p, q = desc.rational
    if 2 * N + 1 > q:
        raise NotRepresentable(
            f"window width {2 * N + 1} exceeds clock-shift period {q}: ambiguous exponents"
        )
    scale_ = max(np.linalg.norm(X), 1e-300)
    data = np.zeros((2 * N + 1, 2 * N + 1), dtype=np.complex128)
    dropped = 0.0
    half = q // 2
    for n in range(-half, q - half):
        for m in range(-half, q - half):
            c = np.trace(_clock_shift(desc, n, m).conj().T @ X) / q
            if abs(n) <= N and abs(m) <= N:
                data[n + N, m + N] = c
            else:
                dropped += abs(c) ** 2
    if math.sqrt(dropped) > tol * scale_:
        raise WindowOverflow(
            f"matrix carries mass {math.sqrt(dropped):.3e} outside the coefficient window"
        )
    return AlgebraElement(desc, data)


def operator_norm(a: AlgebraElement) -> float:
    """Largest singular value of the representation (approximate for the
    compressed irrational-torus representation)."""
    return float(np.linalg.norm(represent(a), 2))


# ---------------------------------------------------------------------------
# Positivity and spectral calculus
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False, repr=False)
class Density:
    """A positive functional rho in the dual, identified with an algebra
    element via f -> tau(rho * f).

    ``witness`` is the smallest eigenvalue of ``represent(element)`` (None
    when the element is not self-adjoint, e.g. polarized off-diagonal
    values).  ``leak`` records any L^2 mass truncated while assembling the
    element; positivity is only enforced on leak-free densities.
    """

    element: AlgebraElement
    witness: float | None
    leak: float = 0.0

    def __repr__(self):
        return f"Density(witness={self.witness}, leak={self.leak:.3g})"

    def pair(self, f: AlgebraElement) -> complex:
        """tau(rho * f)."""
        return trace(mul(self.element, f))

    def trace(self) -> complex:
        return trace(self.element)


def as_density(a: AlgebraElement, *, leak: float = 0.0, enforce: bool = True,
               tol: float | None = None) -> Density:
    wit = None
    if is_self_adjoint(a):
        wit = float(np.linalg.eigvalsh(represent(a)).min())
    if enforce:
        cut = positivity_tol(a.backend) if tol is None else tol
        scale_ = max(norm_l2(a), 1.0)
        if wit is None:
            raise NotSelfAdjoint("density candidate is not self-adjoint")
        if leak <= cut * scale_ and wit < -cut * scale_:
            raise NotPositive(f"density witness {wit:.3e} below -{cut:.1e} * {scale_:.3g}")
    return Density(a, wit, leak)


def _spectral_map(a: AlgebraElement, fn: Callable[[np.ndarray], np.ndarray]) -> AlgebraElement:
    """Apply a real spectral function through the representation and map
    back; requires a self-adjoint input and an invertible representation."""
    if not is_self_adjoint(a):
        raise NotSelfAdjoint("spectral calculus needs a self-adjoint element")
    desc = a.backend
    if isinstance(desc, CyclicGroup):
        evals = np.fft.fft(a.data)           # circulant eigenvalues
        return AlgebraElement(desc, np.fft.ifft(fn(evals.real)))
    X = represent(a)
    if isinstance(desc, NCTorus) and desc.rational is None:
        raise NotRepresentable("spectral calculus unavailable for irrational theta")
    evals, vecs = np.linalg.eigh(X)
    Y = (vecs * fn(evals)) @ vecs.conj().T
    return element_from_matrix(desc, Y)


def positive_decompose(a: AlgebraElement) -> tuple[Density, Density]:
    """Orthogonal decomposition a = a_plus - a_minus of a self-adjoint
    element into positive parts, via eigendecomposition of represent(a)."""
    plus = _spectral_map(a, lambda s: np.clip(s, 0.0, None))
    minus = _spectral_map(a, lambda s: np.clip(-s, 0.0, None))
    return as_density(plus, enforce=False), as_density(minus, enforce=False)


def sqrt_positive(a: AlgebraElement) -> AlgebraElement:
    out = _spectral_map(a, lambda s: np.sqrt(np.clip(s, 0.0, None)))
    scale_ = max(norm_l2(a), 1.0)
    if float(np.linalg.eigvalsh(represent(a)).min()) < -positivity_tol(a.backend) * scale_:
        raise NotPositive("square root of a non-positive element")
    return out


def modulus(a: AlgebraElement) -> AlgebraElement:
    """|a| = (a^* a)^{1/2}; for self-adjoint a this is |spectrum|."""
    if is_self_adjoint(a):
        return _spectral_map(a, np.abs)
    return sqrt_positive(mul(adjoint(a), a))


# ---------------------------------------------------------------------------
# Random batteries
# ---------------------------------------------------------------------------


def random_element(desc: Descriptor, rng: np.random.Generator, *,
                   radius: int | None = None, self_adjoint: bool = False) -> AlgebraElement:
    """Seeded random element; for the torus, ``radius`` restricts the
    support to |n|,|m| <= radius so that products stay leak-free."""
    shape = _data_shape(desc)
    data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if isinstance(desc, NCTorus) and radius is not None:
        N = desc.level
        mask = np.zeros(shape)
        mask[N - radius : N + radius + 1, N - radius : N + radius + 1] = 1.0
        data = data * mask
    out = AlgebraElement(desc, data)
    if self_adjoint:
        out = scale(0.5, add(out, adjoint(out)))
    return out
