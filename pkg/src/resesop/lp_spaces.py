"""Discrete weighted Lebesgue spaces on a uniform grid over the unit square.

Grid functions live on the (N+2) x (N+2) node set of [0, 1]^2 with spacing
h = 1/(N+1); node (i, j) sits at (i*h, j*h). The norm carries the quadrature
weight h^(2/p) and the dual pairing carries h^2, so the duality mappings can
stay weight-free pointwise power maps. With this convention the defining
identities of the gauge-q duality mapping hold exactly on the grid:

    <J_q(f), f> = ||f||^q,    ||J_q(f)||_* = ||f||^(q - 1),

where ||.||_* is the norm with the conjugate exponent on the same grid, and
J_2 on a space with norm exponent 2 is the identity.
"""

import numbers
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    'GridFunction',
    'SpaceSpec',
    'conjugate_exponent',
    'weighted_norm',
    'dual_pairing',
    'duality_map',
    'inverse_duality_map',
    'bregman_distance',
]

# Relative clamp threshold for Bregman distances: rounding can produce tiny
# values of either sign where the exact distance is 0.
BREGMAN_CLAMP = 1e-12


def conjugate_exponent(p):
    """Return the conjugate exponent p* with 1/p + 1/p* = 1.

    Parameters
    ----------
    p : float
        Exponent, must satisfy p > 1.

    Returns
    -------
    float
        p / (p - 1). Self-conjugate for p = 2.
    """
    if not p > 1:
        raise ValueError('exponent must satisfy p > 1, got {}'.format(p))
    return p / (p - 1.0)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values on the (N+2) x (N+2) nodes of the uniform unit-square grid.

    The same container holds primal iterates, residuals and dual vectors;
    the :class:`SpaceSpec` paired with a grid function decides how it is
    measured. Instances are immutable; arithmetic returns new objects.

    Parameters
    ----------
    values : array-like of shape (N+2, N+2)
        Nodal values including the boundary ring. Must be finite.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError('grid values must be square, got shape {}'.format(values.shape))
        if values.shape[0] < 3:
            raise ValueError('grid side must be at least 3, got {}'.format(values.shape[0]))
        if not np.all(np.isfinite(values)):
            raise ValueError('grid values must be finite')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, n_interior):
        return cls(np.zeros((n_interior + 2, n_interior + 2)))

    @classmethod
    def full(cls, n_interior, value):
        return cls(np.full((n_interior + 2, n_interior + 2), float(value)))

    @classmethod
    def from_interior(cls, interior, boundary=0.0):
        """Build a grid function from interior values and a constant boundary."""
        interior = np.asarray(interior, dtype=float)
        values = np.full((interior.shape[0] + 2, interior.shape[1] + 2), float(boundary))
        values[1:-1, 1:-1] = interior
        return cls(values)

    @property
    def n_interior(self):
        """Number N of interior nodes per direction."""
        return self.values.shape[0] - 2

    @property
    def h(self):
        """Grid spacing 1/(N+1)."""
        return 1.0 / (self.n_interior + 1)

    @property
    def interior(self):
        """Read-only view of the interior (N x N) block."""
        return self.values[1:-1, 1:-1]

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values))

    def __add__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return GridFunction(self.values + other.values)

    def __sub__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return GridFunction(self.values - other.values)

    def __neg__(self):
        return GridFunction(-self.values)

    def __mul__(self, scalar):
        if not isinstance(scalar, numbers.Real):
            return NotImplemented
        return GridFunction(self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, numbers.Real):
            return NotImplemented
        return GridFunction(self.values / float(scalar))


@dataclass(frozen=True)
class SpaceSpec:
    """A discrete weighted Lebesgue space on the grid.

    Parameters
    ----------
    norm_exponent : float
        Exponent of the norm, > 1 (the space is then uniformly convex and
        uniformly smooth, so duality maps are single-valued).
    gauge_exponent : float
        Gauge of the duality map J_q, > 1.
    h : float
        Grid spacing; the quadrature weight per node is h^2.
    """

    norm_exponent: float
    gauge_exponent: float
    h: float

    def __post_init__(self):
        if not self.norm_exponent > 1:
            raise ValueError('norm exponent must be > 1, got {}'.format(self.norm_exponent))
        if not self.gauge_exponent > 1:
            raise ValueError('gauge exponent must be > 1, got {}'.format(self.gauge_exponent))
        if not self.h > 0:
            raise ValueError('grid spacing must be positive, got {}'.format(self.h))

    @classmethod
    def for_grid(cls, f, norm_exponent, gauge_exponent=None):
        """Space on the grid of `f`; the gauge defaults to the norm exponent."""
        if gauge_exponent is None:
            gauge_exponent = norm_exponent
        return cls(norm_exponent, gauge_exponent, f.h)

    @property
    def weight(self):
        """Quadrature weight h^2 per node."""
        return self.h ** 2

    def dual(self):
        """The dual space: conjugate norm and gauge exponents, same grid."""
        return SpaceSpec(conjugate_exponent(self.norm_exponent),
                         conjugate_exponent(self.gauge_exponent), self.h)


def weighted_norm(f, space):
    """Weighted p-norm h^(2/p) * (sum_ij |f_ij|^p)^(1/p) over all nodes.

    Parameters
    ----------
    f : GridFunction
    space : SpaceSpec
        Supplies p = norm_exponent and the weight.
    """
    p = space.norm_exponent
    if p == 2.0:
        return space.h * float(np.linalg.norm(f.values))
    total = float(np.sum(np.abs(f.values) ** p))
    return space.h ** (2.0 / p) * total ** (1.0 / p)


def dual_pairing(g, f, space):
    """Quadrature-weighted pairing h^2 * sum_ij g_ij f_ij.

    Consistent with :func:`weighted_norm`, so that the extremal property
    <J(f), f> = ||J(f)||_* ||f|| holds discretely.
    """
    if g.values.shape != f.values.shape:
        raise ValueError('shape mismatch in pairing: {} vs {}'.format(
            g.values.shape, f.values.shape))
    return space.weight * float(np.sum(g.values * f.values))


def duality_map(f, space):
    """Single-valued duality map J_q of the space, applied to `f`.

    With r = norm exponent and q = gauge exponent the image is

        g_ij = ||f||^(q - r) * |f_ij|^(r - 1) * sign(f_ij),

    which satisfies <g, f> = ||f||^q and ||g||_* = ||f||^(q - 1). J_q(0) = 0
    for every gauge, the continuous extension (0 is the only subgradient of
    the norm power at 0).

    Parameters
    ----------
    f : GridFunction
    space : SpaceSpec

    Returns
    -------
    GridFunction
        Dual vector on the same grid; pair it with ``space.dual()``.
    """
    r = space.norm_exponent
    q = space.gauge_exponent
    norm = weighted_norm(f, space)
    if norm == 0.0:
        return GridFunction(np.zeros_like(f.values))
    if r == 2.0 and q == 2.0:
        return f
    v = f.values
    g = np.abs(v) ** (r - 1.0) * np.sign(v)
    if q != r:
        g = norm ** (q - r) * g
    return GridFunction(g)


def inverse_duality_map(g, space):
    """Inverse of :func:`duality_map`: the dual-space map J_{q*} on X*.

    Satisfies inverse_duality_map(duality_map(f), space) == f up to rounding.

    Parameters
    ----------
    g : GridFunction
        Dual vector.
    space : SpaceSpec
        The primal space; the map applied is the duality map of
        ``space.dual()``.
    """
    return duality_map(g, space.dual())


def bregman_distance(x, x_new, space):
    """Bregman distance induced by the norm power (1/q)||.||^q.

    Evaluates, with q the gauge exponent and q* its conjugate,

        D(x, x_new) = (1/q) ||x_new||^q + (1/q*) ||x||^q - <J_q(x), x_new>.

    Nonnegative with D(x, x) = 0; in the Hilbert case (r = q = 2) it equals
    (1/2) ||x - x_new||^2. Tiny values of either sign below a relative
    rounding threshold are clamped to exactly 0.

    Parameters
    ----------
    x, x_new : GridFunction
        Current point (whose duality map enters) and comparison point.
    space : SpaceSpec
    """
    q = space.gauge_exponent
    q_conj = conjugate_exponent(q)
    norm_x = weighted_norm(x, space)
    norm_new = weighted_norm(x_new, space)
    d = (norm_new ** q / q + norm_x ** q / q_conj
         - dual_pairing(duality_map(x, space), x_new, space))
    scale = 1.0 + norm_x ** q + norm_new ** q
    if abs(d) <= BREGMAN_CLAMP * scale:
        return 0.0
    return d
