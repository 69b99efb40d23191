"""Bregman projections onto hyperplanes, halfspaces, stripes and intersections.

The Bregman projection of x onto an intersection of hyperplanes
H(u_k*, alpha_k) has the closed form

    x_new = J_inv( J(x) - sum_k t_k u_k* ),

where the coefficients t minimize the convex dual objective

    h(t) = (1/q*) || J(x) - sum_k t_k u_k* ||_*^{q*} + sum_k t_k alpha_k

and q is the gauge of the space. The gradient of h is

    dh/dt_j = alpha_j - <u_j*, x_new(t)>,

so the first-order condition is exactly feasibility of x_new. One plane is
solved by bracketing plus Brent root finding on the monotone derivative;
several planes by damped Newton with a finite-difference Hessian and Armijo
backtracking. Halfspace and stripe projections reduce to at most two
hyperplane problems.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .lp_spaces import (
    GridFunction,
    conjugate_exponent,
    dual_pairing,
    duality_map,
    inverse_duality_map,
    weighted_norm,
)

__all__ = [
    'Stripe',
    'StripeSide',
    'Halfspace',
    'MinimizerSettings',
    'KktReport',
    'ConvergenceError',
    'GeometryError',
    'classify',
    'objective_value',
    'objective_gradient',
    'project_hyperplane',
    'project_intersection',
    'project_stripe',
    'project_two_halfspaces',
]

logger = logging.getLogger(__name__)

# Feasibility slack factor: target sets are met to FEAS_TOL * problem scale.
FEAS_TOL = 1e-8
# Euclidean cosine beyond which two dual directions count as parallel.
PARALLEL_COS = 1.0 - 1e-12


class StripeSide(Enum):
    """Position of a point relative to a stripe."""
    ABOVE = 'above'
    INSIDE = 'inside'
    BELOW = 'below'


@dataclass(frozen=True)
class Stripe:
    """The set {x : |<u_star, x> - alpha| <= xi} between two hyperplanes.

    Parameters
    ----------
    u_star : GridFunction
        Defining dual vector, nonzero.
    alpha : float
        Offset of the central hyperplane.
    xi : float
        Half width, >= 0. A stripe of width 0 is a hyperplane.
    """

    u_star: GridFunction
    alpha: float
    xi: float

    def __post_init__(self):
        if not np.any(self.u_star.values):
            raise ValueError('stripe requires a nonzero dual vector')
        if self.xi < 0:
            raise ValueError('stripe half width must be >= 0, got {}'.format(self.xi))

    def upper(self):
        """Bounding halfspace <u*, x> <= alpha + xi."""
        return Halfspace(self.u_star, self.alpha + self.xi, 'le')

    def lower(self):
        """Bounding halfspace <u*, x> >= alpha - xi."""
        return Halfspace(self.u_star, self.alpha - self.xi, 'ge')


@dataclass(frozen=True)
class Halfspace:
    """A halfspace <u_star, x> <= alpha ('le') or >= alpha ('ge')."""

    u_star: GridFunction
    alpha: float
    sense: str = 'le'

    def __post_init__(self):
        if self.sense not in ('le', 'ge'):
            raise ValueError("halfspace sense must be 'le' or 'ge', got {!r}".format(self.sense))
        if not np.any(self.u_star.values):
            raise ValueError('halfspace requires a nonzero dual vector')

    def canonical(self):
        """Equivalent halfspace in 'le' sense."""
        if self.sense == 'le':
            return self
        return Halfspace(-self.u_star, -self.alpha, 'le')

    def violation(self, x, space):
        """Signed violation of the constraint at x; positive means outside."""
        value = dual_pairing(self.u_star, x, space)
        return value - self.alpha if self.sense == 'le' else self.alpha - value


@dataclass(frozen=True)
class MinimizerSettings:
    """Tolerances of the inner dual minimization."""

    grad_tol: float = 1e-12
    max_iters: int = 200
    bracket_growth: float = 2.0

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError('grad_tol must be positive')
        if self.max_iters < 1:
            raise ValueError('max_iters must be >= 1')
        if not self.bracket_growth > 1:
            raise ValueError('bracket_growth must exceed 1')


@dataclass(frozen=True)
class KktReport:
    """Multiplier and activity record of a two-halfspace projection.

    `stage` is 'feasible' (no projection needed), 'single' (one bounding
    hyperplane sufficed) or 'pair' (intersection of both bounding planes).
    Multipliers are reported in the canonical 'le' orientation, where the
    KKT conditions require them to be nonnegative.
    """

    stage: str
    t: tuple
    active: tuple
    multipliers_nonnegative: bool


class ConvergenceError(RuntimeError):
    """Inner minimization failed; carries the last iterate for diagnosis."""

    def __init__(self, message, last_t=None, grad_norm=None):
        super().__init__(message)
        self.last_t = last_t
        self.grad_norm = grad_norm


class GeometryError(RuntimeError):
    """The requested target set is empty or inconsistent."""


def classify(x, stripe, space):
    """Locate x relative to a stripe: ABOVE, INSIDE (boundary closed) or BELOW."""
    value = dual_pairing(stripe.u_star, x, space)
    if value > stripe.alpha + stripe.xi:
        return StripeSide.ABOVE
    if value < stripe.alpha - stripe.xi:
        return StripeSide.BELOW
    return StripeSide.INSIDE


def _shifted_dual(jx, planes, t):
    values = jx.values.copy()
    for coeff, (u_star, _) in zip(t, planes):
        if coeff != 0.0:
            values -= coeff * u_star.values
    return GridFunction(values)


def objective_value(x, planes, t, space):
    """Dual objective h(t) of the intersection projection problem."""
    jx = duality_map(x, space)
    q_conj = conjugate_exponent(space.gauge_exponent)
    shifted = _shifted_dual(jx, planes, t)
    value = weighted_norm(shifted, space.dual()) ** q_conj / q_conj
    for coeff, (_, alpha) in zip(t, planes):
        value += coeff * alpha
    return value


def objective_gradient(x, planes, t, space):
    """Gradient of h: component j is alpha_j - <u_j*, x_new(t)>."""
    jx = duality_map(x, space)
    x_t = inverse_duality_map(_shifted_dual(jx, planes, t), space)
    return np.array([alpha - dual_pairing(u_star, x_t, space)
                     for u_star, alpha in planes])


def _problem_scale(x, planes, space):
    norm_x = weighted_norm(x, space)
    dual = space.dual()
    scale = 1.0
    for u_star, alpha in planes:
        scale = max(scale, 1.0 + abs(alpha) + weighted_norm(u_star, dual) * norm_x)
    return scale


def project_hyperplane(x, u_star, alpha, space, settings=None):
    """Bregman projection of x onto the hyperplane H(u_star, alpha).

    Parameters
    ----------
    x : GridFunction
    u_star : GridFunction
        Nonzero dual vector defining the plane.
    alpha : float
    space : SpaceSpec
    settings : MinimizerSettings, optional

    Returns
    -------
    (GridFunction, float)
        The projected point and the coefficient t with
        x_new = J_inv(J(x) - t * u_star).
    """
    settings = settings or MinimizerSettings()
    if not np.any(u_star.values):
        raise ValueError('hyperplane requires a nonzero dual vector')
    gap = dual_pairing(u_star, x, space) - alpha
    scale = _problem_scale(x, [(u_star, alpha)], space)
    if abs(gap) <= settings.grad_tol * scale:
        return x, 0.0

    jx = duality_map(x, space)
    q = space.gauge_exponent
    q_conj = conjugate_exponent(q)
    dual_space = space.dual()

    def derivative(t):
        x_t = inverse_duality_map(GridFunction(jx.values - t * u_star.values), space)
        return alpha - dual_pairing(u_star, x_t, space)

    # h'(0) = -gap; h' is nondecreasing, so the root has the sign of gap.
    # Start from the value that is exact in the Hilbert case and grow.
    dual_norm_u = weighted_norm(u_star, dual_space)
    t0 = np.sign(gap) * (abs(gap) / dual_norm_u ** q_conj) ** (q - 1.0)
    lo, hi = (0.0, t0) if gap > 0 else (t0, 0.0)
    outer = t0
    for _ in range(settings.max_iters):
        value = derivative(outer)
        if (gap > 0 and value >= 0.0) or (gap < 0 and value <= 0.0):
            if gap > 0:
                hi = outer
            else:
                lo = outer
            break
        if gap > 0:
            lo = outer
        else:
            hi = outer
        outer *= settings.bracket_growth
    else:
        raise ConvergenceError('could not bracket the hyperplane coefficient',
                               last_t=outer, grad_norm=abs(derivative(outer)))

    # brentq enforces rtol >= 4 * machine epsilon.
    t = brentq(derivative, lo, hi, xtol=1e-30, rtol=1e-15,
               maxiter=max(100, settings.max_iters))
    residual = abs(derivative(t))
    if residual > FEAS_TOL * scale:
        raise ConvergenceError('hyperplane projection did not reach feasibility',
                               last_t=t, grad_norm=residual)
    x_new = inverse_duality_map(GridFunction(jx.values - t * u_star.values), space)
    return x_new, float(t)


def _parallel_pair(planes):
    for j in range(len(planes)):
        for k in range(j + 1, len(planes)):
            a = planes[j][0].values.ravel()
            b = planes[k][0].values.ravel()
            cos = abs(float(np.dot(a, b))) / (np.linalg.norm(a) * np.linalg.norm(b))
            if cos > PARALLEL_COS:
                return j, k
    return None


def project_intersection(x, planes, space, settings=None, t_init=None):
    """Bregman projection of x onto an intersection of hyperplanes.

    Parameters
    ----------
    x : GridFunction
    planes : list of (GridFunction, float)
        Pairs (u_star, alpha); the dual vectors should be linearly
        independent. A numerically parallel pair triggers a warning and a
        fallback to the projection onto the first plane alone.
    space : SpaceSpec
    settings : MinimizerSettings, optional
    t_init : array-like, optional
        Starting coefficients, e.g. the result of a previous single-plane
        projection. Defaults to zero.

    Returns
    -------
    (GridFunction, ndarray)
        Projected point and coefficient vector t.
    """
    settings = settings or MinimizerSettings()
    planes = list(planes)
    if not planes:
        raise ValueError('at least one plane is required')
    if len(planes) == 1:
        x_new, t = project_hyperplane(x, planes[0][0], planes[0][1], space, settings)
        return x_new, np.array([t])
    if _parallel_pair(planes) is not None:
        logger.warning('numerically parallel dual directions in intersection '
                       'projection; falling back to the first plane')
        x_new, t = project_hyperplane(x, planes[0][0], planes[0][1], space, settings)
        coeffs = np.zeros(len(planes))
        coeffs[0] = t
        return x_new, coeffs

    jx = duality_map(x, space)
    q_conj = conjugate_exponent(space.gauge_exponent)
    dual_space = space.dual()
    alphas = np.array([alpha for _, alpha in planes])

    def point(t):
        return inverse_duality_map(_shifted_dual(jx, planes, t), space)

    def gradient(t):
        x_t = point(t)
        return np.array([alpha - dual_pairing(u_star, x_t, space)
                         for u_star, alpha in planes])

    def value(t):
        shifted = _shifted_dual(jx, planes, t)
        return (weighted_norm(shifted, dual_space) ** q_conj / q_conj
                + float(np.dot(t, alphas)))

    scale = _problem_scale(x, planes, space)
    t = np.zeros(len(planes)) if t_init is None else np.array(t_init, dtype=float)
    grad = gradient(t)
    for _ in range(settings.max_iters):
        if np.linalg.norm(grad) <= settings.grad_tol * scale:
            break
        # Forward-difference Hessian of h, symmetrized; h is smooth in t.
        dim = len(t)
        hessian = np.empty((dim, dim))
        for k in range(dim):
            eps = 1e-7 * (1.0 + abs(t[k]))
            shifted_t = t.copy()
            shifted_t[k] += eps
            hessian[:, k] = (gradient(shifted_t) - grad) / eps
        hessian = 0.5 * (hessian + hessian.T)
        try:
            direction = np.linalg.solve(hessian, -grad)
        except np.linalg.LinAlgError:
            direction = -grad
        if np.dot(direction, grad) >= 0.0:  # not a descent direction
            direction = -grad
        base = value(t)
        slope = float(np.dot(grad, direction))
        # Near the minimum the predicted decrease drops below the rounding
        # noise of h; the allowance keeps the backtracking from stalling.
        noise = 1e-14 * (1.0 + abs(base))
        step = 1.0
        for _ in range(60):
            candidate = t + step * direction
            if value(candidate) <= base + 1e-4 * step * slope + noise:
                break
            step *= 0.5
        t = t + step * direction
        grad = gradient(t)
    else:
        raise ConvergenceError('intersection projection did not converge',
                               last_t=t, grad_norm=float(np.linalg.norm(grad)))
    return point(t), t


def project_stripe(x, stripe, space, settings=None):
    """Bregman projection of x onto a stripe.

    A point inside is untouched; a point above (below) is projected onto the
    upper (lower) bounding hyperplane.

    Returns
    -------
    (GridFunction, float)
        Projected point and hyperplane coefficient (0 when inside).
    """
    side = classify(x, stripe, space)
    if side is StripeSide.INSIDE:
        return x, 0.0
    offset = stripe.xi if side is StripeSide.ABOVE else -stripe.xi
    return project_hyperplane(x, stripe.u_star, stripe.alpha + offset, space, settings)


def project_two_halfspaces(x, first, second, space, settings=None):
    """Bregman projection of x onto the intersection of two halfspaces.

    Follows the two-stage rule: project onto the bounding hyperplane of the
    violated constraint; if the result satisfies the other constraint it is
    the projection, otherwise solve the two-plane intersection problem. The
    multipliers of 'le'-sense constraints are nonnegative at the solution;
    the returned report records them for diagnosis.

    Parameters
    ----------
    x : GridFunction
    first, second : Halfspace
        Constraints with linearly independent dual vectors. `first` is
        preferred as the stage-one plane when both are violated.
    space : SpaceSpec
    settings : MinimizerSettings, optional

    Returns
    -------
    (GridFunction, float, float, KktReport)
    """
    settings = settings or MinimizerSettings()
    canon = (first.canonical(), second.canonical())
    scale = _problem_scale(x, [(h.u_star, h.alpha) for h in canon], space)
    slack = FEAS_TOL * scale
    violations = [h.violation(x, space) for h in canon]
    if violations[0] <= slack and violations[1] <= slack:
        report = KktReport(stage='feasible', t=(0.0, 0.0), active=(False, False),
                           multipliers_nonnegative=True)
        return x, 0.0, 0.0, report

    # The unique KKT point has one of the active sets {lead}, {other} or
    # both. A single constraint is only a valid candidate when it is
    # violated at x (its multiplier is then positive) and its plane
    # projection satisfies the other constraint.
    lead = 0 if violations[0] > slack else 1
    t_lead = 0.0
    for k in (lead, 1 - lead):
        if violations[k] <= slack:
            continue
        x_single, t_single = project_hyperplane(
            x, canon[k].u_star, canon[k].alpha, space, settings)
        if k == lead:
            t_lead = t_single
        if canon[1 - k].violation(x_single, space) <= slack:
            t = [0.0, 0.0]
            t[k] = t_single
            active = [False, False]
            active[k] = True
            report = KktReport(stage='single', t=tuple(t), active=tuple(active),
                               multipliers_nonnegative=t_single >= -slack)
            return x_single, t[0], t[1], report

    t_init = [0.0, 0.0]
    t_init[lead] = t_lead
    x_pair, t_pair = project_intersection(
        x, [(h.u_star, h.alpha) for h in canon], space, settings, t_init=t_init)
    if max(h.violation(x_pair, space) for h in canon) > slack:
        raise GeometryError('halfspace intersection appears to be empty')
    report = KktReport(stage='pair', t=(float(t_pair[0]), float(t_pair[1])),
                       active=(True, True),
                       multipliers_nonnegative=bool(np.all(t_pair >= -slack)))
    return x_pair, float(t_pair[0]), float(t_pair[1]), report
