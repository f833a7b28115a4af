"""Prior-art comparison algorithms.

Both methods need operator-norm bounds that the randomly activated
frameworks do without: the adaptive primal-dual method balances its step
sizes against ||L|| and the random block-coordinate forward-backward
method sizes its metric from every ||L_k||.  Norms are estimated by
power iteration at construction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .engine import (ActivationSchedule, Counters, DivergenceError,
                     RunResult, TraceRecord, UNITS_TO_SECONDS, _mask_bits,
                     normalized_error_db, parallel_units)
from .linops import operator_norm, stacked_operator_norm
from .resolvents import inverse_resolvent, prox_conjugate


class StepSizeConditionError(ValueError):
    """The norm-based step-size inequality fails at construction."""


@dataclass(frozen=True)
class AdaptivePDParams:
    """Balancing constants; defaults follow the comparison protocol."""

    chi0: float = 0.5
    eta: float = 0.5
    delta: float = 1.5
    tau0: float | None = None      # default 0.9 / sqrt(p)
    sigma0: float | None = None    # default 1 / (sqrt(p) * max_k ||L_k||^2)


def _trace_tools(x0, reference, objective):
    denom = None
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        denom = float(np.linalg.norm(x0 - reference))
        if denom == 0.0:
            denom = max(1.0, float(np.linalg.norm(reference)))

    def record(it, bits, x, sim, wall):
        err = (normalized_error_db(x, reference, denom)
               if reference is not None else math.nan)
        obj = float(objective(x)) if objective else None
        return TraceRecord(it, bits, err, sim, wall, obj)

    return record


def run_adaptive_pd(problem, *, seed=0, max_iter=1000, target_db=None,
                    reference=None, params=AdaptivePDParams(),
                    probabilities=None, objective=None) -> RunResult:
    """Adaptive stochastic primal-dual iteration for minimization instances.

    Exactly one dual block is activated per iteration, drawn with the
    given probabilities (uniform by default).  The primal prox runs every
    iteration; step sizes (tau, sigma) are rebalanced from l1 statistics
    of the increments while their product stays fixed.
    """
    p = problem.p
    n = problem.n
    pis = (np.full(p, 1.0 / p) if probabilities is None
           else np.asarray(probabilities, dtype=float))
    if pis.shape != (p,) or not np.all(pis > 0) \
            or abs(pis.sum() - 1.0) > 1e-12:
        raise ValueError("activation probabilities must be positive and "
                         "sum to 1")
    norms = np.array([operator_norm(op) for op in problem.ops])
    stack_norm = stacked_operator_norm(list(problem.ops))
    tau = params.tau0 if params.tau0 is not None else 0.9 / math.sqrt(p)
    sigma = (params.sigma0 if params.sigma0 is not None
             else 1.0 / (math.sqrt(p) * float(np.max(norms) ** 2)))
    lhs = tau * sigma * float(np.max(norms ** 2 / pis))
    if not lhs < 1.0:
        raise StepSizeConditionError(
            f"tau0*sigma0*max(||L_k||^2/pi_k) = {lhs:.6f} must be < 1")
    chi = params.chi0
    eta, delta = params.eta, params.delta

    x1 = np.zeros(n)
    y = [np.zeros(d) for d in problem.block_dims]
    # running sum of L_k^T z_k; z equals y except for the extrapolated
    # last-activated block, tracked incrementally
    sy = np.zeros(n)
    extra = np.zeros(n)
    rho = 0.0
    nu = 0.0

    per_index = np.array([
        2.0 * lk.cost_units() + bk.cost_units()
        for bk, lk in problem.blocks])
    shared = problem.a.cost_units() + float(n)

    counters = Counters.zeros(p)
    record = _trace_tools(x1, reference, objective)
    t0 = time.perf_counter()
    trace = [record(0, 0, x1, 0.0, 0.0)]
    sim = 0.0
    stopped = "max_iter"
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0xC3 << 56], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))

    for it in range(int(max_iter)):
        band = stack_norm * nu
        if rho > band * delta:
            tau, sigma, chi = tau / (1.0 - chi), sigma * (1.0 - chi), chi * eta
        elif rho < band / delta:
            tau, sigma, chi = tau * (1.0 - chi), sigma / (1.0 - chi), chi * eta
        k = int(rng.choice(p, p=pis))
        bk, lk = problem.blocks[k]

        x_old = x1
        x1 = problem.a.resolve(tau, x_old - tau * (sy + extra))
        y_old = y[k]
        y_new = prox_conjugate(sigma, bk.resolve,
                               y_old + sigma * lk.apply(x1))
        counters.resolvent_calls[k] += 1
        dy = y_new - y_old
        y[k] = y_new
        adj_dy = lk.adjoint(dy)
        sy = sy + adj_dy
        extra = (1.0 / pis[k]) * adj_dy

        rho = float(np.abs((x_old - x1) / tau + adj_dy / pis[k]).sum())
        nu = float(np.abs(lk.apply(x_old - x1) + dy / sigma).sum()
                   / pis[k])

        if not np.isfinite(x1).all():
            raise DivergenceError(it + 1, "x1")
        counters.iterations += 1
        sim += UNITS_TO_SECONDS * (shared + per_index[k])
        rec = record(it + 1, 1 << k, x1, sim, time.perf_counter() - t0)
        trace.append(rec)
        if target_db is not None and reference is not None \
                and rec.err_db <= target_db:
            stopped = "target"
            break

    return RunResult(x1.copy(), trace, counters, p, stopped, sim,
                     time.perf_counter() - t0)


def run_rbc_fb(problem, *, block_size=None, seed=0, max_iter=1000,
               target_db=None, reference=None, relaxation=1.0,
               errors=None, cores=1, objective=None,
               schedule=None) -> RunResult:
    """Random block-coordinate forward-backward-type iteration.

    The primal resolvent runs every iteration under the metric
    W = 0.9*tau*Id; each activated dual block solves through the inverse
    resolvent under U_k = (tau/||L_k||^2)*Id, with tau = 1/sqrt(2p) so
    that sum_k ||U_k^(1/2) L_k W^(1/2)||^2 = 0.45 < 1/2.
    """
    if not 0.0 < relaxation <= 1.0:
        raise ValueError(f"relaxation must lie in (0, 1], got {relaxation!r}")
    p = problem.p
    n = problem.n
    norms = np.array([operator_norm(op) for op in problem.ops])
    if np.any(norms == 0.0):
        raise StepSizeConditionError("every block operator must be nonzero")
    tau = 1.0 / math.sqrt(2.0 * p)
    w_scale = 0.9 * tau
    u_scales = tau / norms ** 2
    lhs = float(np.sum(u_scales * norms ** 2 * w_scale))
    if not lhs < 0.5:
        raise StepSizeConditionError(
            f"sum ||U^(1/2) L W^(1/2)||^2 = {lhs:.6f} must be < 1/2")

    if schedule is None:
        schedule = ActivationSchedule(p, block_size or p, seed)
    elif schedule.n_indices != p:
        raise ValueError(f"schedule has {schedule.n_indices} indices, "
                         f"problem has p={p}")

    x1 = np.zeros(n)
    v = [np.zeros(d) for d in problem.block_dims]
    sv = np.zeros(n)  # running sum of L_k^T v_k

    per_index = np.array([
        2.0 * lk.cost_units() + bk.cost_units()
        for bk, lk in problem.blocks])
    shared = problem.a.cost_units() + float(2 * n)

    counters = Counters.zeros(p)
    record = _trace_tools(x1, reference, objective)
    t0 = time.perf_counter()
    trace = [record(0, 0, x1, 0.0, 0.0)]
    sim = 0.0
    stopped = "max_iter"

    for it in range(int(max_iter)):
        mask = schedule.sample_mask()
        y1 = problem.a.resolve(w_scale, x1 - w_scale * sv)
        if errors is not None:
            y1 = y1 + errors.vec("a", it, n)
        x_old = x1
        x1 = x_old + relaxation * (y1 - x_old)
        drive = 2.0 * y1 - x_old
        for k in np.flatnonzero(mask):
            bk, lk = problem.blocks[int(k)]
            uk = inverse_resolvent(
                u_scales[k], bk, v[k] + u_scales[k] * lk.apply(drive))
            counters.resolvent_calls[k] += 1
            if errors is not None:
                uk = uk + errors.vec("b", it, bk.dim, int(k))
            v_new = v[k] + relaxation * (uk - v[k])
            sv = sv + lk.adjoint(v_new - v[k])
            v[k] = v_new

        if not np.isfinite(x1).all():
            raise DivergenceError(it + 1, "x1")
        counters.iterations += 1
        sim += UNITS_TO_SECONDS * (shared
                                   + parallel_units(per_index[mask], cores))
        rec = record(it + 1, _mask_bits(mask), x1, sim,
                     time.perf_counter() - t0)
        trace.append(rec)
        if target_db is not None and reference is not None \
                and rec.err_db <= target_db:
            stopped = "target"
            break

    return RunResult(x1.copy(), trace, counters, p, stopped, sim,
                     time.perf_counter() - t0)
