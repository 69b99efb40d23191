"""Acceptance suite.

Each test covers one release criterion end to end and prints a single
PASS/FAIL line (visible with pytest -s or in the captured output), so the
battery doubles as a human-readable checklist. Tolerances are part of the
contract; loosening them here is a release decision, not a test fix.
"""

import logging
import time

import numpy as np
import pytest

from resesop.bregman_geometry import (
    Halfspace,
    Stripe,
    project_hyperplane,
    project_stripe,
    project_two_halfspaces,
)
from resesop.elliptic_operator import (
    BvpData,
    EllipticOperator,
    apply_adjoint,
    apply_derivative,
    solve_forward,
)
from resesop.experiment_cli import ExperimentConfig, run_experiment
from resesop.lp_spaces import (
    GridFunction,
    SpaceSpec,
    bregman_distance,
    conjugate_exponent,
    dual_pairing,
    duality_map,
    inverse_duality_map,
    weighted_norm,
)
from resesop.sesop_solver import StopReason, descent_monitor

EXPONENT_PAIRS = ((1.5, 2.0), (2.0, 2.0), (5.0, 2.0), (3.0, 3.0))


def _verdict(label, passed, detail=''):
    suffix = ' ({})'.format(detail) if detail else ''
    print('{:<52s} {}{}'.format(label, 'PASS' if passed else 'FAIL', suffix))
    return passed


def random_grid(rng, max_interior=12, scale=1.0):
    n = int(rng.integers(1, max_interior + 1))
    return GridFunction(scale * rng.standard_normal((n + 2, n + 2)))


def test_criterion_1_duality_map_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for r, q in EXPONENT_PAIRS:
        space_of = lambda f: SpaceSpec(r, q, f.h)
        for _ in range(125):
            f = random_grid(rng, scale=float(rng.uniform(0.05, 20.0)))
            space = space_of(f)
            mapped = duality_map(f, space)
            norm = weighted_norm(f, space)
            defects = (
                abs(dual_pairing(mapped, f, space) - norm ** q) / norm ** q,
                abs(weighted_norm(mapped, space.dual()) - norm ** (q - 1.0))
                / norm ** (q - 1.0),
                weighted_norm(inverse_duality_map(mapped, space) - f, space) / norm,
            )
            worst = max(worst, *defects)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 5.0
    assert _verdict('criterion 1: duality map identity suite', ok,
                    'worst rel. defect {:.2e}, {:.2f}s'.format(worst, elapsed))


def bregman_form_one(x, x_new, space):
    q = space.gauge_exponent
    return (weighted_norm(x_new, space) ** q / q
            - weighted_norm(x, space) ** q / q
            - dual_pairing(duality_map(x, space), x_new - x, space))


def bregman_form_three(x, x_new, space):
    q = space.gauge_exponent
    q_conj = conjugate_exponent(q)
    return ((weighted_norm(x, space) ** q - weighted_norm(x_new, space) ** q) / q_conj
            + dual_pairing(duality_map(x_new, space) - duality_map(x, space),
                           x_new, space))


def test_criterion_2_bregman_form_equivalence():
    rng = np.random.default_rng(102)
    worst_gap = 0.0
    nonnegative = True
    self_zero = True
    for index in range(500):
        r, q = EXPONENT_PAIRS[index % len(EXPONENT_PAIRS)]
        x = random_grid(rng, scale=float(rng.uniform(0.1, 5.0)))
        x_new = GridFunction(rng.standard_normal(x.values.shape)
                             * float(rng.uniform(0.1, 5.0)))
        space = SpaceSpec(r, q, x.h)
        value = bregman_distance(x, x_new, space)
        scale = 1.0 + abs(value)
        worst_gap = max(
            worst_gap,
            abs(value - bregman_form_one(x, x_new, space)) / scale,
            abs(value - bregman_form_three(x, x_new, space)) / scale)
        nonnegative &= value >= 0.0
        self_zero &= bregman_distance(x, x, space) == 0.0
    ok = worst_gap <= 1e-10 and nonnegative and self_zero
    assert _verdict('criterion 2: Bregman form equivalence', ok,
                    'worst rel. gap {:.2e}'.format(worst_gap))


def _euclidean_gap(a, b, space):
    return weighted_norm(a - b, space) / (1.0 + weighted_norm(b, space))


def _qp_two_halfspace_oracle(x, halfspaces, space):
    # dense active-set enumeration: the exact solution of the small QP
    canon = [hs.canonical() for hs in halfspaces]
    best = None
    for active in ((), (0,), (1,), (0, 1)):
        if not active:
            candidate = x
        else:
            us = [canon[k].u_star for k in active]
            gram = np.array([[dual_pairing(a, b, space) for b in us] for a in us])
            gaps = np.array([dual_pairing(canon[k].u_star, x, space)
                             - canon[k].alpha for k in active])
            try:
                coeffs = np.linalg.solve(gram, gaps)
            except np.linalg.LinAlgError:
                continue
            if np.any(coeffs < -1e-12):
                continue
            candidate = x
            for coeff, direction in zip(coeffs, us):
                candidate = candidate - float(coeff) * direction
        feasible = all(hs.violation(candidate, space) <= 1e-10 for hs in canon)
        if not feasible:
            continue
        distance = weighted_norm(candidate - x, space)
        if best is None or distance < best[0] - 1e-14:
            best = (distance, candidate)
    return best[1]


def test_criterion_3_hilbert_projection_oracles():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(100):
        x = random_grid(rng, max_interior=5)
        space = SpaceSpec(2.0, 2.0, x.h)
        u = GridFunction(rng.standard_normal(x.values.shape))
        alpha = float(rng.normal())
        uu = dual_pairing(u, u, space)

        projected, _ = project_hyperplane(x, u, alpha, space)
        closed = x - ((dual_pairing(u, x, space) - alpha) / uu) * u
        worst = max(worst, _euclidean_gap(projected, closed, space))

        xi = float(rng.uniform(0.05, 1.0))
        stripe_point, _ = project_stripe(x, Stripe(u, alpha, xi), space)
        gap = dual_pairing(u, x, space) - alpha
        shift = max(abs(gap) - xi, 0.0) * np.sign(gap) / uu
        worst = max(worst, _euclidean_gap(stripe_point, x - shift * u, space))

        second = GridFunction(rng.standard_normal(x.values.shape))
        halfspaces = (
            Halfspace(u, float(rng.normal()), 'le'),
            Halfspace(second, float(rng.normal()),
                      'le' if rng.random() < 0.5 else 'ge'),
        )
        pair_point, _, _, _ = project_two_halfspaces(
            x, halfspaces[0], halfspaces[1], space)
        oracle = _qp_two_halfspace_oracle(x, halfspaces, space)
        worst = max(worst, _euclidean_gap(pair_point, oracle, space))
    ok = worst <= 1e-8
    assert _verdict('criterion 3: Hilbert projection oracles', ok,
                    'worst rel. gap {:.2e}'.format(worst))


def test_criterion_4_projection_descent_property():
    rng = np.random.default_rng(104)
    worst = -np.inf
    for index in range(100):
        x = random_grid(rng, max_interior=6)
        space = SpaceSpec(1.5, 2.0, x.h)
        u = GridFunction(rng.standard_normal(x.values.shape))
        uu = dual_pairing(u, u, space)
        kind = index % 3
        if kind == 0:
            alpha = dual_pairing(u, x, space) - float(rng.uniform(0.5, 3.0))
            projected, _ = project_hyperplane(x, u, alpha, space)
            carrier = GridFunction(rng.standard_normal(x.values.shape))
            z = carrier - ((dual_pairing(u, carrier, space) - alpha) / uu) * u
        elif kind == 1:
            alpha = dual_pairing(u, x, space) - float(rng.uniform(0.5, 3.0))
            xi = float(rng.uniform(0.05, 0.4))
            projected, _ = project_stripe(x, Stripe(u, alpha, xi), space)
            carrier = GridFunction(rng.standard_normal(x.values.shape))
            z = carrier - ((dual_pairing(u, carrier, space) - alpha) / uu) * u
        else:
            second = GridFunction(rng.standard_normal(x.values.shape))
            halfspaces = (
                Halfspace(u, dual_pairing(u, x, space)
                          - float(rng.uniform(0.3, 2.0)), 'le'),
                Halfspace(second, float(rng.normal()), 'le'),
            )
            projected, _, _, _ = project_two_halfspaces(
                x, halfspaces[0], halfspaces[1], space)
            us = [hs.u_star for hs in halfspaces]
            gram = np.array([[dual_pairing(a, b, space) for b in us] for a in us])
            carrier = GridFunction(rng.standard_normal(x.values.shape))
            margins = np.array([float(rng.uniform(0.1, 1.0)) for _ in us])
            targets = np.array([hs.alpha for hs in halfspaces]) - margins
            gaps = np.array([dual_pairing(v, carrier, space) for v in us]) - targets
            coeffs = np.linalg.solve(gram, gaps)
            z = carrier
            for coeff, direction in zip(coeffs, us):
                z = z - float(coeff) * direction
        decrease = (bregman_distance(x, z, space)
                    - bregman_distance(projected, z, space)
                    - bregman_distance(x, projected, space))
        worst = max(worst, -decrease)
    ok = worst <= 1e-9
    assert _verdict('criterion 4: Bregman projection descent property', ok,
                    'worst defect {:.2e}'.format(worst))


def _smooth_positive_parameter(rng, n):
    coords = np.linspace(0.0, 1.0, n + 2)
    x, y = np.meshgrid(coords, coords, indexing='ij')
    a, b = rng.uniform(0.5, 2.0, size=2)
    return GridFunction(2.0 + a * np.sin(np.pi * x) * np.sin(np.pi * y)
                        + b * x * y)


def test_criterion_5_operator_checks():
    rng = np.random.default_rng(105)
    worst_adjoint = 0.0
    worst_exact = 0.0
    min_order = np.inf
    for n in (5, 10, 20):
        h = 1.0 / (n + 1)
        space_x = SpaceSpec(1.5, 2.0, h)
        space_y = SpaceSpec(5.0, 2.0, h)
        c = _smooth_positive_parameter(rng, n)
        coords = np.linspace(0.0, 1.0, n + 2)
        xg, yg = np.meshgrid(coords, coords, indexing='ij')

        # constant and affine states are reproduced through the stencil
        for u_exact in (GridFunction(np.ones_like(xg)),
                        GridFunction(1.0 + 2.0 * xg - 0.5 * yg)):
            data = BvpData(f=GridFunction(c.values * u_exact.values),
                           g=u_exact)
            solved = solve_forward(c, data)
            worst_exact = max(worst_exact,
                              float(np.max(np.abs(solved.values - u_exact.values))))

        data = BvpData(f=GridFunction(np.ones_like(xg)),
                       g=GridFunction(np.zeros_like(xg)))
        op = EllipticOperator(data)
        state = op.linearize(c)
        for _ in range(34):
            direction = GridFunction.from_interior(rng.standard_normal((n, n)))
            w = GridFunction.from_interior(rng.standard_normal((n, n)))
            lhs = dual_pairing(w, apply_derivative(state, direction), space_y)
            rhs = dual_pairing(apply_adjoint(state, w), direction, space_x)
            worst_adjoint = max(worst_adjoint,
                                abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30))

        # Taylor remainder of the linearization must shrink at second order
        direction = GridFunction.from_interior(rng.standard_normal((n, n)))
        epsilons = np.array([1e-1, 5e-2, 2.5e-2, 1.25e-2])
        remainders = []
        for eps in epsilons:
            perturbed = op(c + float(eps) * direction)
            linear = state.u + float(eps) * apply_derivative(state, direction)
            remainders.append(weighted_norm(perturbed - linear, space_y))
        slopes = (np.diff(np.log(remainders)) / np.diff(np.log(epsilons)))
        min_order = min(min_order, float(np.min(slopes)))
    ok = worst_adjoint <= 1e-10 and min_order >= 1.9 and worst_exact <= 1e-12
    assert _verdict(
        'criterion 5: operator adjoint/Taylor/exactness', ok,
        'adjoint {:.2e}, order {:.2f}, exactness {:.2e}'.format(
            worst_adjoint, min_order, worst_exact))


def test_criterion_6_exact_data_benchmark(exact_report_a, exact_report_b):
    ok_a = (exact_report_a.stop_reason == StopReason.RESIDUAL_TOLERANCE
            and exact_report_a.final_rel_error <= 0.15
            and exact_report_a.wall_time < 60.0)
    ok_b = (exact_report_b.stop_reason == StopReason.RESIDUAL_TOLERANCE
            and exact_report_b.final_rel_error <= 0.15
            and exact_report_b.n_star <= 0.7 * exact_report_a.n_star
            and exact_report_b.wall_time < 60.0)
    ok = ok_a and ok_b
    assert _verdict(
        'criterion 6: exact-data benchmark', ok,
        'A {} it / {:.2%}, B {} it / {:.2%}'.format(
            exact_report_a.n_star, exact_report_a.final_rel_error,
            exact_report_b.n_star, exact_report_b.final_rel_error))


def test_criterion_7_noisy_data_benchmark(noisy_report_a, noisy_report_b):
    threshold = noisy_report_a.config.tau * noisy_report_a.config.delta

    def discrepancy_holds(report):
        final = report.records[-1]
        return (report.stop_reason == StopReason.DISCREPANCY
                and final.residual_norm <= threshold
                and all(rec.residual_norm > threshold
                        for rec in report.records[:-1]))

    ok = (discrepancy_holds(noisy_report_a)
          and discrepancy_holds(noisy_report_b)
          and noisy_report_b.n_star <= 0.7 * noisy_report_a.n_star
          and noisy_report_a.final_rel_error <= 0.20
          and noisy_report_b.final_rel_error <= 0.20)
    assert _verdict(
        'criterion 7: noisy-data benchmark', ok,
        'A {} it / {:.2%}, B {} it / {:.2%}, threshold {:.3e}'.format(
            noisy_report_a.n_star, noisy_report_a.final_rel_error,
            noisy_report_b.n_star, noisy_report_b.final_rel_error, threshold))


def test_criterion_8_error_series_monotone(exact_report_a, exact_report_b):
    def monotone(report):
        errors = [rec.rel_error for rec in report.records]
        return all(later <= earlier + 1e-12
                   for earlier, later in zip(errors, errors[1:]))

    residual_wiggles = any(
        later > earlier
        for report in (exact_report_a, exact_report_b)
        for earlier, later in zip(
            [rec.residual_norm for rec in report.records],
            [rec.residual_norm for rec in report.records][1:]))
    ok = (monotone(exact_report_a) and monotone(exact_report_b)
          and descent_monitor(exact_report_a.records) == []
          and descent_monitor(exact_report_b.records) == [])
    assert _verdict(
        'criterion 8: relative error decreases monotonically', ok,
        'residual series non-monotone: {}'.format(residual_wiggles))


def test_criterion_9_stripe_containment_monitor(containment_reports, caplog):
    total = inside = 0
    for report in containment_reports:
        flags = [rec.truth_inside for rec in report.records
                 if rec.truth_inside is not None]
        total += len(flags)
        inside += sum(flags)
    fraction = inside / total if total else 0.0

    # at the benchmark cone constant violations occur; each must carry a
    # measured ratio above the configured constant and emit a warning
    with caplog.at_level(logging.WARNING, logger='resesop.sesop_solver'):
        tight = run_experiment(ExperimentConfig(method='A'))
    violations = [rec for rec in tight.records if rec.truth_inside is False]
    logged = [rec for rec in caplog.records
              if 'tangential-cone ratio' in rec.message]
    ratios_ok = all(rec.cone_ratio is not None
                    and rec.cone_ratio > tight.config.cone_constant
                    for rec in violations)
    ok = (fraction >= 0.95 and violations and len(logged) == len(violations)
          and ratios_ok)
    assert _verdict(
        'criterion 9: stripe containment monitor', ok,
        'containment {:.0%} at c_tc=0.05; {} logged violations at c_tc=0.01'.format(
            fraction, len(logged)))
