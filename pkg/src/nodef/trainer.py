"""EM estimation of the joint conversion + delay model.

The eventual-conversion flag c of every not-yet-converted sample is hidden,
so training alternates

  E-step   closed-form posterior q_i = p(c_i | y_i=0, x_i, e_i) for i in I0,
  M-step   two independent L-BFGS ascents on the penalized lower bound
           Q = Q_w(w) + Q_V(V), w first, then V.

Q separates because w enters only the classifier terms and V only the delay
terms, so the two M-steps never interact within an iteration.  Each M-step
merely improves Q rather than maximizing it (a GEM scheme); the inner
optimizer budget is capped accordingly.

Q omits the posterior entropy term, which is constant during the M-step, so
Q sits below the observed-data log likelihood by exactly sum_i H(q_i) at the
E-step point.  Convergence is judged on successive Q differences, which the
offset does not affect.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .kernel import gauss_kernel, kernel_integral_0_to
from .types import NoDeFParams, Posteriors, partition_indices

__all__ = [
    "NumericalError",
    "HAZARD_FLOOR",
    "LbfgsResult",
    "FitResult",
    "e_step",
    "q_objective",
    "grad_w",
    "grad_V",
    "lbfgs_maximize",
    "fit",
]

# Hazard values below this are clamped before log/division; alpha_l underflow
# for extreme weights would otherwise produce -inf in the objective.
HAZARD_FLOOR = 1e-300

# Inner L-BFGS budget per M-step.  Full inner convergence is unnecessary for
# the outer loop's monotonicity, so the cap trades accuracy for runtime.
LBFGS_MAX_ITERS = 50
LBFGS_MEMORY = 10
LBFGS_GTOL = 1e-6


class NumericalError(RuntimeError):
    """Objective or likelihood term degenerated (underflow, non-finite value)."""


@dataclass(frozen=True)
class LbfgsResult:
    x: np.ndarray
    value: float
    iterations: int
    line_search_failed: bool


@dataclass(frozen=True)
class FitResult:
    """Outcome of one EM run: final parameters plus the Q trace diagnostics."""

    params: NoDeFParams
    q_trace: list
    iterations: int
    converged: bool
    hazard_clamps: int = 0


class _DelayMatrices:
    """Parameter-independent per-sample quantities, computed once per fit.

    K1[i, l] = k(t_l, d_i)            for i in I1 (kernel at observed delay)
    C1[i, l] = int_0^{d_i} k(t_l, .)  for i in I1
    C0[i, l] = int_0^{e_i} k(t_l, .)  for i in I0
    """

    def __init__(self, dataset, grid):
        self.i1, self.i0 = partition_indices(dataset)
        X = dataset.X
        self.X1 = X[self.i1]
        self.X0 = X[self.i0]
        d1 = dataset.positive_delays
        e0 = dataset.elapsed[self.i0]
        pts = grid.points[None, :]
        h = grid.bandwidth
        self.K1 = gauss_kernel(pts, d1[:, None], h)
        self.C1 = kernel_integral_0_to(d1[:, None], pts, h)
        self.C0 = kernel_integral_0_to(e0[:, None], pts, h)


def _check_dims(dataset, params, grid):
    if params.M != dataset.M:
        raise ValueError(f"params expect M={params.M}, dataset has M={dataset.M}")
    if params.L != grid.L:
        raise ValueError(f"params expect L={params.L}, grid has L={grid.L}")


def _w_value_grad(w, X1, X0, q1, lam):
    """Q_w and its gradient: classifier terms plus the w ridge penalty."""
    z1 = X1 @ w
    z0 = X0 @ w
    value = (
        log_expit(z1).sum()
        + (q1 * log_expit(z0) + (1.0 - q1) * log_expit(-z0)).sum()
        - 0.5 * lam * (w @ w)
    )
    # q1*dlog(sigma) + q0*dlog(1-sigma) collapses to x*(q1 - sigma)
    grad = X1.T @ (1.0 - expit(z1)) + X0.T @ (q1 - expit(z0)) - lam * w
    return value, grad


def _V_value_grad(Vflat, L, pre, q1, lam, clamp_counter):
    """Q_V and its gradient: delay terms plus the V ridge penalty.

    clamp_counter is a one-element list accumulating how many hazard
    evaluations hit the floor.
    """
    V = Vflat.reshape(L, -1)
    A1 = expit(pre.X1 @ V.T)
    haz_raw = (A1 * pre.K1).sum(axis=1)
    n_clamped = int(np.count_nonzero(haz_raw < HAZARD_FLOOR))
    if n_clamped:
        clamp_counter[0] += n_clamped
    haz = np.maximum(haz_raw, HAZARD_FLOOR)
    int1 = (A1 * pre.C1).sum(axis=1)  # int_0^{d_i} h for positives
    A0 = expit(pre.X0 @ V.T)
    int0 = (A0 * pre.C0).sum(axis=1)  # int_0^{e_i} h for negatives
    value = (
        np.log(haz).sum() - int1.sum() - (q1 * int0).sum() - 0.5 * lam * (V * V).sum()
    )
    B1 = A1 * (1.0 - A1)
    grad = (
        (B1 * (pre.K1 / haz[:, None] - pre.C1)).T @ pre.X1
        - (q1[:, None] * A0 * (1.0 - A0) * pre.C0).T @ pre.X0
        - lam * V
    )
    return value, grad.ravel()


def _posterior_q1(pre, w, V):
    """q_{i1} for every i in I0, in I0 order.

    q1 = sigma*s / (sigma*s + 1 - sigma) = expit(w.x + log s), which avoids
    the 0/0 of the naive normalized form when both sigma and s underflow.
    """
    z0 = pre.X0 @ w
    A0 = expit(pre.X0 @ V.T)
    log_s = -(A0 * pre.C0).sum(axis=1)
    return expit(z0 + log_s)


def e_step(dataset, params, grid):
    """Posteriors over the hidden conversion flag for every negative sample.

    Positive samples are excluded: an observed conversion fixes c=1.
    """
    _check_dims(dataset, params, grid)
    pre = _DelayMatrices(dataset, grid)
    if len(pre.i0) == 0:
        return Posteriors({})
    q1 = _posterior_q1(pre, params.w, params.V)
    return Posteriors({int(i): (float(1.0 - q), float(q)) for i, q in zip(pre.i0, q1)})


def q_objective(dataset, params, posteriors, grid, lambda_w, lambda_V):
    """Penalized EM lower bound Q at (params, posteriors).

    Raises NumericalError if a delay density underflows to exact zero for an
    observed conversion; smaller-than-floor positive values are clamped.
    """
    if len(dataset) == 0:
        w, V = params.w, params.V
        return float(-0.5 * lambda_w * (w @ w) - 0.5 * lambda_V * (V * V).sum())
    _check_dims(dataset, params, grid)
    pre = _DelayMatrices(dataset, grid)
    _, q1 = posteriors.arrays(pre.i0) if len(pre.i0) else (np.zeros(0), np.zeros(0))
    A1 = expit(pre.X1 @ params.V.T)
    haz_raw = (A1 * pre.K1).sum(axis=1)
    dead = np.flatnonzero(haz_raw == 0.0)
    if dead.size:
        raise NumericalError(
            f"delay density underflowed to zero at sample {int(pre.i1[dead[0]])}"
        )
    vw, _ = _w_value_grad(params.w, pre.X1, pre.X0, q1, lambda_w)
    vV, _ = _V_value_grad(
        params.V.ravel(), grid.L, pre, q1, lambda_V, [0]
    )
    return float(vw + vV)


def grad_w(dataset, params, posteriors, lambda_w):
    """Gradient of Q in w."""
    i1, i0 = partition_indices(dataset)
    X = dataset.X
    _, q1 = posteriors.arrays(i0) if len(i0) else (np.zeros(0), np.zeros(0))
    _, g = _w_value_grad(params.w, X[i1], X[i0], q1, lambda_w)
    return g


def grad_V(dataset, params, posteriors, grid, lambda_V):
    """Gradient of Q in V, as an L x M matrix."""
    _check_dims(dataset, params, grid)
    pre = _DelayMatrices(dataset, grid)
    _, q1 = posteriors.arrays(pre.i0) if len(pre.i0) else (np.zeros(0), np.zeros(0))
    _, g = _V_value_grad(params.V.ravel(), grid.L, pre, q1, lambda_V, [0])
    return g.reshape(grid.L, params.M)


def lbfgs_maximize(value_and_grad, x0, max_iters=LBFGS_MAX_ITERS, gtol=LBFGS_GTOL):
    """Maximize a smooth objective from x0; never returns a worse point.

    value_and_grad(x) -> (value, gradient).  Terminates on gradient inf-norm
    below gtol or the iteration cap.  A failed line search returns the best
    accepted point with line_search_failed set.
    """
    x0 = np.asarray(x0, dtype=float)
    f0, g0 = value_and_grad(x0)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise NumericalError("objective not finite at the initial point")

    def negated(x):
        v, g = value_and_grad(x)
        return -v, -np.asarray(g, dtype=float)

    res = minimize(
        negated,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": max_iters,
            "maxcor": LBFGS_MEMORY,
            "gtol": gtol,
            "ftol": 0.0,
        },
    )
    line_search_failed = (not res.success) and res.status == 2
    value = float(-res.fun)
    if value < f0:
        # the optimizer's last iterate regressed; keep the start point
        return LbfgsResult(x=x0, value=float(f0), iterations=int(res.nit),
                           line_search_failed=True)
    return LbfgsResult(x=np.asarray(res.x, dtype=float), value=value,
                       iterations=int(res.nit), line_search_failed=line_search_failed)


def _diagnose_nonfinite(pre, w, V, q1):
    """Dataset indices whose per-sample Q term is non-finite (failure path only)."""
    bad = []
    z1 = pre.X1 @ w
    A1 = expit(pre.X1 @ V.T)
    haz = np.maximum((A1 * pre.K1).sum(axis=1), HAZARD_FLOOR)
    t1 = log_expit(z1) + np.log(haz) - (A1 * pre.C1).sum(axis=1)
    bad.extend(pre.i1[~np.isfinite(t1)].tolist())
    z0 = pre.X0 @ w
    A0 = expit(pre.X0 @ V.T)
    t0 = (
        q1 * log_expit(z0)
        + (1.0 - q1) * log_expit(-z0)
        - q1 * (A0 * pre.C0).sum(axis=1)
    )
    bad.extend(pre.i0[~np.isfinite(t0)].tolist())
    return bad


def fit(dataset, config, grid, on_iteration=None):
    """Run EM to convergence or the iteration cap.

    Each outer iteration: one E-step, one L-BFGS ascent in w, one in V (both
    against the same posteriors, w first).  Q^{(j)} is the bound evaluated at
    the new parameters against iteration j's posteriors; the loop stops when
    Q^{(j)} - Q^{(j-1)} < tol, checked from j=2 on.  A decrease beyond 1e-8
    signals numerical trouble: the offending iterate is rejected, the last
    accepted parameters are restored, and the loop stops with a warning, so
    the returned trace is nondecreasing and matches the returned parameters.

    on_iteration, if given, is called as on_iteration(j, q_value) after each
    outer iteration.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit an empty dataset")
    _ = partition_indices(dataset)
    pre = _DelayMatrices(dataset, grid)
    M = dataset.M
    L = grid.L
    w = np.zeros(M)
    V = np.zeros((L, M))
    if config.init_jitter > 0:
        rng = np.random.default_rng(config.seed)
        w = w + config.init_jitter * rng.standard_normal(M)
        V = V + config.init_jitter * rng.standard_normal((L, M))

    clamp_counter = [0]
    q_trace = []
    converged = False
    iterations = 0
    prev_q = None
    for j in range(1, config.max_iters + 1):
        w_prev, V_prev = w, V
        q1 = _posterior_q1(pre, w, V)

        res_w = lbfgs_maximize(
            lambda w_: _w_value_grad(w_, pre.X1, pre.X0, q1, config.lambda_w), w
        )
        w = res_w.x
        res_V = lbfgs_maximize(
            lambda v_: _V_value_grad(v_, L, pre, q1, config.lambda_V, clamp_counter),
            V.ravel(),
        )
        V = res_V.x.reshape(L, M)

        q = res_w.value + res_V.value  # Q separates, so the sum is Q(new; old)
        if not np.isfinite(q):
            bad = _diagnose_nonfinite(pre, w, V, q1)
            raise NumericalError(
                f"non-finite Q at iteration {j}; offending samples {bad}"
            )
        if prev_q is not None and q - prev_q < -1e-8:
            # reject the iterate: keep the last accepted state and stop
            warnings.warn(
                f"Q decreased by {prev_q - q:.3e} at iteration {j}; "
                "stopping on numerical trouble",
                RuntimeWarning,
            )
            w, V = w_prev, V_prev
            break
        iterations = j
        q_trace.append(float(q))
        if on_iteration is not None:
            on_iteration(j, float(q))
        if prev_q is not None and q - prev_q < config.tol:
            converged = True
            break
        prev_q = q

    return FitResult(
        params=NoDeFParams(w=w, V=V),
        q_trace=q_trace,
        iterations=iterations,
        converged=converged,
        hazard_clamps=clamp_counter[0],
    )
