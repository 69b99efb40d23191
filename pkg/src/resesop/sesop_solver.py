"""Sequential subspace optimization for nonlinear operator equations.

Each outer iteration linearizes the forward operator at the current iterate
x_n, forms the residual R_n = F(x_n) - y and the codomain direction
w_n = J_2(R_n), and builds the stripe

    { x : |<u_n*, x> - alpha_n| <= xi_n },
    u_n* = F'(x_n)* w_n,
    alpha_n = <u_n*, x_n> - <w_n, R_n>,
    xi_n = (delta + c_tc (||R_n|| + delta)) ||w_n||,

whose width accounts for the noise level delta and the tangential-cone
constant c_tc of the operator; with exact data the width reduces to
c_tc ||w_n|| ||R_n||. Solutions of F(x) = y lie inside every stripe when the
cone condition holds, and the unconverged iterate always lies strictly
above its own stripe, so a step is the Bregman projection onto the upper
bounding hyperplane, optionally corrected by the previous stripe:

* one direction: project x_n onto its stripe (a Landweber step with an
  exact width regulation);
* two directions: project onto the upper hyperplane; if the result left the
  previous stripe, project x_n onto the intersection of the current upper
  hyperplane and the violated bounding hyperplane of the previous stripe.

Iterations stop by the discrepancy principle ||R|| <= tau * delta for noisy
data, or a small residual tolerance for exact data.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bregman_geometry import (
    ConvergenceError,
    GeometryError,
    MinimizerSettings,
    Stripe,
    StripeSide,
    classify,
    project_hyperplane,
    project_intersection,
    project_stripe,
)
from .elliptic_operator import LinearSolveError
from .lp_spaces import (
    SpaceSpec,
    bregman_distance,
    dual_pairing,
    duality_map,
    inverse_duality_map,
    weighted_norm,
)

__all__ = [
    'SolverConfig',
    'IterationRecord',
    'SolveResult',
    'StepOutcome',
    'StepClass',
    'StopReason',
    'SolverFailure',
    'DegenerateDirectionError',
    'build_stripe',
    'landweber_step',
    'resesop_two_dir_step',
    'run',
    'descent_monitor',
]

logger = logging.getLogger(__name__)

# Relative displacement below which an iteration counts as stagnant, and the
# number of consecutive stagnant iterations that aborts the run.
STAGNATION_TOL = 1e-14
STAGNATION_LIMIT = 3
# Projection coefficients above this magnitude are logged as suspicious.
COEFFICIENT_WARN = 1e6


class StepClass:
    """Kind of update an iteration performed."""
    SINGLE_PROJECTION = 'single_projection'
    TWO_PLANE_CORRECTION = 'two_plane_correction'


class StopReason:
    """Why a run ended."""
    DISCREPANCY = 'discrepancy'
    RESIDUAL_TOLERANCE = 'residual_tolerance'
    NOT_CONVERGED = 'not_converged'
    STAGNATED = 'stagnated'
    FAILED = 'failed'


class DegenerateDirectionError(RuntimeError):
    """The adjoint mapped the residual direction to zero; no stripe exists."""


class SolverFailure(RuntimeError):
    """A run aborted; carries the records collected so far and the iterate."""

    def __init__(self, message, records=(), iterate=None):
        super().__init__(message)
        self.records = tuple(records)
        self.iterate = iterate


@dataclass(frozen=True)
class SolverConfig:
    """Configuration of the outer iteration.

    Parameters
    ----------
    r, s : float
        Norm exponents of the parameter space and the data space.
    p_gauge : float, optional
        Gauge of the duality map on the parameter space. Defaults to
        max(2, r), which keeps the space convex of power type for the
        descent estimates; the data-space gauge is fixed at 2.
    cone_constant : float
        Tangential-cone constant c_tc in [0, 1).
    noise_level : float
        Noise bound delta >= 0; 0 selects the exact-data stopping rule.
    tau : float, optional
        Discrepancy multiplier; must exceed (1 + c_tc)/(1 - c_tc) when
        noise_level > 0.
    residual_tol : float
        Exact-data stopping tolerance on the residual norm.
    max_outer : int
        Iteration budget; exceeding it flags the result, no exception.
    directions : int
        1 for the Landweber-type method, 2 for the two-direction method.
    minimizer : MinimizerSettings
        Inner projection tolerances.
    derivative_norm_bound : float, optional
        Bound c_F on ||F'||, diagnostics only; estimated at the start
        when omitted.
    dual_smoothness : float
        Smoothness constant of the dual space, diagnostics only.
    """

    r: float
    s: float
    p_gauge: float = None
    cone_constant: float = 0.0
    noise_level: float = 0.0
    tau: float = None
    residual_tol: float = 5e-4
    max_outer: int = 500
    directions: int = 1
    minimizer: MinimizerSettings = field(default_factory=MinimizerSettings)
    derivative_norm_bound: float = None
    dual_smoothness: float = 1.0

    def __post_init__(self):
        if not self.r > 1 or not self.s > 1:
            raise ValueError('space exponents must exceed 1')
        if self.p_gauge is not None and not self.p_gauge > 1:
            raise ValueError('gauge exponent must exceed 1')
        if not 0.0 <= self.cone_constant < 1.0:
            raise ValueError('cone constant must lie in [0, 1), got {}'.format(
                self.cone_constant))
        if self.noise_level < 0:
            raise ValueError('noise level must be >= 0')
        if self.noise_level > 0:
            bound = (1.0 + self.cone_constant) / (1.0 - self.cone_constant)
            if self.tau is None or not self.tau > bound:
                raise ValueError(
                    'tau must exceed (1 + c_tc)/(1 - c_tc) = {:.6g} for noisy data'.format(bound))
        if not self.residual_tol > 0:
            raise ValueError('residual tolerance must be positive')
        if self.max_outer < 1:
            raise ValueError('max_outer must be >= 1')
        if self.directions not in (1, 2):
            raise ValueError('directions must be 1 or 2')
        if not self.dual_smoothness > 0:
            raise ValueError('dual smoothness constant must be positive')

    @property
    def gauge(self):
        """Effective gauge on the parameter space."""
        return self.p_gauge if self.p_gauge is not None else max(2.0, self.r)

    @property
    def stop_threshold(self):
        """Residual norm at or below which the iteration stops."""
        return self.tau * self.noise_level if self.noise_level > 0 else self.residual_tol


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration log entry.

    The record written at the stopping index has no step fields (empty
    coefficient tuple, step_class None). Ground-truth quantities are None
    when no truth was supplied; cone_ratio is measured only when the truth
    fell outside the stripe of the iteration.
    """

    n: int
    residual_norm: float
    rel_error: float = None
    t_params: tuple = ()
    stripe_widths: tuple = ()
    step_class: str = None
    wall_time: float = 0.0
    bregman_to_truth: float = None
    above_margin: float = None
    truth_inside: bool = None
    cone_ratio: float = None
    decrease_surrogate: float = None
    direction_cosine: float = None
    gamma: float = None

    def __post_init__(self):
        if self.residual_norm < 0:
            raise ValueError('residual norm must be >= 0')


@dataclass(frozen=True)
class StepOutcome:
    """Step metadata returned by the step functions, merged into records."""

    step_class: str
    t_params: tuple
    stripe_widths: tuple
    above_margin: float
    decrease_surrogate: float = None
    direction_cosine: float = None
    gamma: float = None


@dataclass(frozen=True)
class SolveResult:
    """Final iterate with the full iteration log."""

    iterate: object
    records: tuple
    stop_reason: str
    n_star: int
    detail: str = ''


def build_stripe(op, state, x, w, residual, cfg, space_x, space_y):
    """Stripe of the current linearization around the iterate x.

    Parameters
    ----------
    op : operator with an `adjoint(state, w)` method
    state : linearization state at x (caches u = F(x))
    x : GridFunction
    w : GridFunction
        Codomain dual direction, w = J_2(residual).
    residual : GridFunction
        F(x) - y.
    cfg : SolverConfig
    space_x, space_y : SpaceSpec

    Raises
    ------
    DegenerateDirectionError
        When the adjoint image of w vanishes.
    """
    u_star = op.adjoint(state, w)
    if not np.any(u_star.values):
        raise DegenerateDirectionError('adjoint image of the residual direction is zero')
    alpha = dual_pairing(u_star, x, space_x) - dual_pairing(w, residual, space_y)
    res_norm = weighted_norm(residual, space_y)
    w_norm = weighted_norm(w, space_y.dual())
    xi = (cfg.noise_level + cfg.cone_constant * (res_norm + cfg.noise_level)) * w_norm
    return Stripe(u_star, alpha, xi)


def _above_margin(x, stripe, space_x):
    margin = dual_pairing(stripe.u_star, x, space_x) - (stripe.alpha + stripe.xi)
    if margin <= 0.0:
        raise GeometryError(
            'iterate is not strictly above its stripe (margin {:.3g}); '
            'the stopping rule should have fired'.format(margin))
    return margin


def _first_surrogate_term(res_norm, cfg, c_f):
    if not c_f:
        return None
    reduced = res_norm - cfg.noise_level - cfg.cone_constant * (res_norm + cfg.noise_level)
    return (reduced / c_f) ** cfg.gauge


def landweber_step(op, state, x, residual, cfg, space_x, space_y, c_f=None):
    """One step of the single-direction method: project onto the own stripe.

    Returns (next iterate, stripe, StepOutcome). The iterate must be above
    its stripe, which holds whenever the stopping rule has not fired.
    """
    w = duality_map(residual, space_y)
    stripe = build_stripe(op, state, x, w, residual, cfg, space_x, space_y)
    margin = _above_margin(x, stripe, space_x)
    x_next, t = project_stripe(x, stripe, space_x, cfg.minimizer)
    outcome = StepOutcome(
        step_class=StepClass.SINGLE_PROJECTION,
        t_params=(float(t),),
        stripe_widths=(stripe.xi,),
        above_margin=margin,
        decrease_surrogate=_first_surrogate_term(
            weighted_norm(residual, space_y), cfg, c_f))
    return x_next, stripe, outcome


def _direction_diagnostics(stripe, prev_stripe, cfg, space_x):
    # gamma quantifies how far the two dual directions are from parallel;
    # it degenerates to None when the configured smoothness constant makes
    # the expression meaningless.
    lifted_prev = inverse_duality_map(prev_stripe.u_star, space_x)
    denom = (weighted_norm(stripe.u_star, space_x.dual())
             * weighted_norm(lifted_prev, space_x))
    if denom == 0.0:
        return None, None
    cosine = abs(dual_pairing(stripe.u_star, lifted_prev, space_x)) / denom
    q = cfg.gauge
    base = 1.0 - cosine ** q / ((q - 1.0) * cfg.dual_smoothness ** (q - 1.0))
    if base <= 0.0:
        return cosine, None
    return cosine, base ** (1.0 / (q / (q - 1.0)))


def resesop_two_dir_step(op, state, x, residual, prev_stripe, cfg,
                         space_x, space_y, c_f=None):
    """One step of the two-direction method.

    Projects onto the upper bounding hyperplane of the current stripe; when
    the intermediate point has left the previous stripe, projects the
    ITERATE onto the intersection of the current upper hyperplane and the
    violated bounding hyperplane of the previous stripe. The decrease
    surrogate S_n and the direction diagnostic gamma_n are recorded.

    Parameters
    ----------
    prev_stripe : Stripe or None
        The stripe of the previous iteration (its codomain direction is
        frozen at creation); None on the first iteration.
    """
    w = duality_map(residual, space_y)
    stripe = build_stripe(op, state, x, w, residual, cfg, space_x, space_y)
    margin = _above_margin(x, stripe, space_x)
    res_norm = weighted_norm(residual, space_y)
    surrogate = _first_surrogate_term(res_norm, cfg, c_f)

    upper_alpha = stripe.alpha + stripe.xi
    x_tilde, t_first = project_hyperplane(x, stripe.u_star, upper_alpha,
                                          space_x, cfg.minimizer)
    if prev_stripe is None or classify(x_tilde, prev_stripe, space_x) is StripeSide.INSIDE:
        outcome = StepOutcome(
            step_class=StepClass.SINGLE_PROJECTION,
            t_params=(float(t_first),),
            stripe_widths=(stripe.xi,),
            above_margin=margin,
            decrease_surrogate=surrogate)
        return x_tilde, stripe, outcome

    side = classify(x_tilde, prev_stripe, space_x)
    bound = prev_stripe.alpha + (prev_stripe.xi if side is StripeSide.ABOVE
                                 else -prev_stripe.xi)
    cosine, gamma = _direction_diagnostics(stripe, prev_stripe, cfg, space_x)
    if gamma:
        overshoot = abs(dual_pairing(prev_stripe.u_star, x_tilde, space_x) - bound)
        second = (overshoot / (gamma * weighted_norm(prev_stripe.u_star,
                                                     space_x.dual()))) ** cfg.gauge
        if surrogate is not None:
            surrogate += second
    planes = [(stripe.u_star, upper_alpha), (prev_stripe.u_star, bound)]
    x_next, t = project_intersection(x, planes, space_x, cfg.minimizer,
                                     t_init=[t_first, 0.0])
    outcome = StepOutcome(
        step_class=StepClass.TWO_PLANE_CORRECTION,
        t_params=tuple(float(v) for v in t),
        stripe_widths=(stripe.xi, prev_stripe.xi),
        above_margin=margin,
        decrease_surrogate=surrogate,
        direction_cosine=cosine,
        gamma=gamma)
    return x_next, stripe, outcome


def _measured_cone_ratio(op, state, x, ground_truth, truth_image, space_y):
    linearized = op.derivative(state, x - ground_truth)
    numerator = weighted_norm(state.u - truth_image - linearized, space_y)
    denominator = weighted_norm(state.u - truth_image, space_y)
    if denominator == 0.0:
        return None
    return numerator / denominator


def run(op, y, x0, cfg, ground_truth=None):
    """Iterate until the stopping rule fires, the budget runs out, or the
    iterates stagnate.

    Parameters
    ----------
    op : forward operator
        Needs `__call__(x)`, `linearize(x)` returning a state with
        attribute `u`, `derivative(state, d)`, `adjoint(state, w)` and
        `norm_estimate(state)`.
    y : GridFunction
        Data (possibly noisy).
    x0 : GridFunction
        Starting parameter.
    cfg : SolverConfig
    ground_truth : GridFunction, optional
        Enables the error, Bregman-distance and stripe-containment columns
        of the records.

    Returns
    -------
    SolveResult
        n_star is the stopping index; records hold one entry per evaluated
        iterate, the last one without step fields.

    Raises
    ------
    SolverFailure
        On linear-solve, projection or geometry failures; carries the
        records collected so far.
    """
    space_x = SpaceSpec(cfg.r, cfg.gauge, x0.h)
    space_y = SpaceSpec(cfg.s, 2.0, y.h)
    threshold = cfg.stop_threshold
    records = []
    x = x0
    prev_stripe = None
    truth_image = None
    truth_norm = None
    if ground_truth is not None:
        truth_norm = weighted_norm(ground_truth, space_x)
    c_f = cfg.derivative_norm_bound
    stagnant = 0
    try:
        for n in range(cfg.max_outer + 1):
            tic = time.perf_counter()
            state = op.linearize(x)
            if c_f is None:
                c_f = op.norm_estimate(state)
            residual = state.u - y
            res_norm = weighted_norm(residual, space_y)
            rel_error = None
            breg = None
            if ground_truth is not None:
                rel_error = weighted_norm(x - ground_truth, space_x) / truth_norm
                breg = bregman_distance(x, ground_truth, space_x)

            if res_norm <= threshold:
                reason = (StopReason.DISCREPANCY if cfg.noise_level > 0
                          else StopReason.RESIDUAL_TOLERANCE)
                records.append(IterationRecord(
                    n=n, residual_norm=res_norm, rel_error=rel_error,
                    bregman_to_truth=breg, wall_time=time.perf_counter() - tic))
                return SolveResult(iterate=x, records=tuple(records),
                                   stop_reason=reason, n_star=n)
            if n == cfg.max_outer:
                records.append(IterationRecord(
                    n=n, residual_norm=res_norm, rel_error=rel_error,
                    bregman_to_truth=breg, wall_time=time.perf_counter() - tic))
                return SolveResult(
                    iterate=x, records=tuple(records),
                    stop_reason=StopReason.NOT_CONVERGED, n_star=n,
                    detail='iteration budget of {} exhausted with residual {:.6g} '
                           'above threshold {:.6g}'.format(cfg.max_outer, res_norm, threshold))

            if cfg.directions == 1:
                x_next, stripe, outcome = landweber_step(
                    op, state, x, residual, cfg, space_x, space_y, c_f)
            else:
                x_next, stripe, outcome = resesop_two_dir_step(
                    op, state, x, residual, prev_stripe, cfg, space_x, space_y, c_f)

            truth_inside = None
            cone_ratio = None
            if ground_truth is not None:
                truth_inside = classify(ground_truth, stripe, space_x) is StripeSide.INSIDE
                if not truth_inside:
                    if truth_image is None:
                        truth_image = op(ground_truth)
                    cone_ratio = _measured_cone_ratio(
                        op, state, x, ground_truth, truth_image, space_y)
                    logger.warning(
                        'ground truth outside the stripe at n=%d: measured '
                        'tangential-cone ratio %.4g exceeds configured %.4g',
                        n, cone_ratio, cfg.cone_constant)
            if outcome.t_params and max(abs(v) for v in outcome.t_params) > COEFFICIENT_WARN:
                logger.warning('projection coefficients %s unusually large at n=%d',
                               outcome.t_params, n)

            records.append(IterationRecord(
                n=n, residual_norm=res_norm, rel_error=rel_error,
                t_params=outcome.t_params, stripe_widths=outcome.stripe_widths,
                step_class=outcome.step_class,
                wall_time=time.perf_counter() - tic,
                bregman_to_truth=breg, above_margin=outcome.above_margin,
                truth_inside=truth_inside, cone_ratio=cone_ratio,
                decrease_surrogate=outcome.decrease_surrogate,
                direction_cosine=outcome.direction_cosine, gamma=outcome.gamma))

            if weighted_norm(x_next - x, space_x) < STAGNATION_TOL * weighted_norm(x, space_x):
                stagnant += 1
                if stagnant >= STAGNATION_LIMIT:
                    return SolveResult(
                        iterate=x_next, records=tuple(records),
                        stop_reason=StopReason.STAGNATED, n_star=n + 1,
                        detail='iterates stalled for {} consecutive steps at '
                               'residual {:.6g}'.format(STAGNATION_LIMIT, res_norm))
            else:
                stagnant = 0
            prev_stripe = stripe
            x = x_next
    except (LinearSolveError, ConvergenceError, GeometryError,
            DegenerateDirectionError) as exc:
        raise SolverFailure(str(exc), records=records, iterate=x) from exc
    raise AssertionError('unreachable: loop must return')


def descent_monitor(records, cfg=None):
    """Check the recorded Bregman distances to the truth for monotone decay.

    Returns a list of (n, previous, current) triples where the distance
    increased beyond the rounding allowance. When cfg carries the constants,
    the theoretical decrement is logged for comparison, not asserted.
    """
    violations = []
    for before, after in zip(records, records[1:]):
        if before.bregman_to_truth is None or after.bregman_to_truth is None:
            continue
        allowance = 1e-9 * (1.0 + abs(before.bregman_to_truth))
        if after.bregman_to_truth > before.bregman_to_truth + allowance:
            violations.append((after.n, before.bregman_to_truth, after.bregman_to_truth))
        if cfg is not None and cfg.derivative_norm_bound:
            q = cfg.gauge
            decrement = ((1.0 - cfg.cone_constant) ** q
                         / (q * cfg.dual_smoothness ** (q - 1.0)
                            * cfg.derivative_norm_bound ** q)
                         * before.residual_norm ** q)
            logger.debug('n=%d: observed Bregman decrement %.6g, theoretical >= %.6g',
                         after.n,
                         before.bregman_to_truth - after.bregman_to_truth,
                         decrement)
    return violations
