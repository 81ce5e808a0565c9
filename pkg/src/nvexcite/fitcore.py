"""Damped nonlinear least squares, closed-form line fits and error propagation.

Every analysis module in the package funnels its curve fits through
:func:`fit_nonlinear`, a Levenberg-Marquardt loop with Marquardt diagonal
scaling.  Parameters may live on wildly different scales (metres, watts,
counts per second) so all step and convergence tests are done in the
scaled metric ``sqrt(diag(J^T W J))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200

_LAMBDA_INIT = 1e-3
_LAMBDA_UP = 10.0
_LAMBDA_DOWN = 10.0
_LAMBDA_MAX = 1e16
_LAMBDA_MIN = 1e-15
# loose sanity bound on the residual/column angle at convergence
_GTOL = 1e-4


class FitError(ValueError):
    """Invalid input to a fitting routine."""


@dataclass(frozen=True)
class ModelFunction:
    """A parametric model ``y = evaluate(params, x)``.

    ``jacobian(params, x)`` must return the ``(len(x), arity)`` matrix of
    partial derivatives of the model (not of the residual).  When it is
    ``None`` central finite differences are used.
    """

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    arity: int
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    names: tuple[str, ...] = ()

    def __call__(self, params, x):
        return np.asarray(self.evaluate(np.asarray(params, dtype=float), x), dtype=float)

    def jac(self, params, x) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if self.jacobian is None:
            return finite_difference_jacobian(self, params, x)
        return np.asarray(self.jacobian(params, x), dtype=float).reshape(len(np.atleast_1d(x)), self.arity)


@dataclass
class FitResult:
    parameters: np.ndarray
    standard_errors: np.ndarray
    covariance: np.ndarray
    residual_sum_squares: float
    degrees_of_freedom: int
    converged: bool
    iterations: int
    residuals: np.ndarray = field(repr=False, default=None)
    message: str = ""
    names: tuple[str, ...] = ()

    @property
    def reduced_chi_square(self) -> float:
        return self.residual_sum_squares / self.degrees_of_freedom

    def as_dict(self) -> dict:
        names = self.names or tuple(f"p{i}" for i in range(len(self.parameters)))
        return {n: (float(v), float(e)) for n, v, e in zip(names, self.parameters, self.standard_errors)}


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_error: float
    intercept_error: float

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def finite_difference_jacobian(model, params, x) -> np.ndarray:
    """Central-difference Jacobian with step ``max(1e-8, 1e-6 |p|)`` per parameter."""
    params = np.asarray(params, dtype=float)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(params)):
        raise FitError("non-finite parameters")
    f = model.evaluate if isinstance(model, ModelFunction) else model
    cols = []
    for i, p in enumerate(params):
        h = max(1e-8, 1e-6 * abs(p))
        up = params.copy()
        dn = params.copy()
        up[i] = p + h
        dn[i] = p - h
        # actual step after rounding
        step = up[i] - dn[i]
        col = (np.asarray(f(up, x), dtype=float) - np.asarray(f(dn, x), dtype=float)) / step
        cols.append(np.broadcast_to(col, x.shape))
    jac = np.stack(cols, axis=-1) if cols else np.empty(x.shape + (0,))
    if not np.all(np.isfinite(jac)):
        raise FitError("non-finite model evaluation in finite-difference Jacobian")
    return jac


def fit_linear(x, y) -> LinearFit:
    """Ordinary least-squares straight line ``y = slope*x + intercept``.

    Uncertainties use the residual variance with ``n - 2`` degrees of
    freedom; with exactly two points they are undefined (NaN).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("x and y must be 1-D arrays of equal length")
    if len(x) < 2:
        raise FitError("need at least two points for a line")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitError("non-finite input")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    sxx = dx @ dx
    if sxx == 0.0 or np.ptp(x) == 0.0:
        raise FitError("degenerate abscissa: all x equal")
    slope = (dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    n = len(x)
    if n > 2:
        resid = y - (slope * x + intercept)
        s2 = (resid @ resid) / (n - 2)
        slope_err = np.sqrt(s2 / sxx)
        intercept_err = np.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    else:
        slope_err = intercept_err = float("nan")
    return LinearFit(float(slope), float(intercept), float(slope_err), float(intercept_err))


def _column_cosine(jac: np.ndarray, resid: np.ndarray) -> float:
    rnorm = np.sqrt(resid @ resid)
    if rnorm == 0.0:
        return 0.0
    cnorm = np.sqrt(np.einsum("ij,ij->j", jac, jac))
    g = np.abs(jac.T @ resid)
    ok = cnorm > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(g[ok] / (cnorm[ok] * rnorm)))


def fit_nonlinear(
    model: ModelFunction,
    x,
    y,
    initial,
    weights=None,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    absolute_weights: bool = True,
) -> FitResult:
    """Levenberg-Marquardt weighted least squares.

    Minimises ``sum(w * (y - model(p, x))**2)``.  Weights are treated as
    absolute inverse variances: without weights the covariance is scaled by
    the reduced chi-square, with weights it is ``(J^T W J)^-1`` as is.
    ``absolute_weights=False`` marks weights as relative only, and the
    covariance is rescaled by the reduced chi-square as in the unweighted case.

    Failure to converge within ``max_iter`` iterations, or a damping
    parameter driven past 1e16 while the gradient is still significant,
    yields ``converged=False``; the best parameters found are returned.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(initial, dtype=float).ravel()
    n = len(y)
    k = model.arity
    if x.shape[0] != n or y.ndim != 1:
        raise FitError(f"dimension mismatch: len(x)={x.shape[0]}, len(y)={n}")
    if len(p) != k:
        raise FitError(f"initial has {len(p)} parameters, model expects {k}")
    if n < k + 1:
        raise FitError(f"need at least {k + 1} points for {k} parameters, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(p))):
        raise FitError("non-finite input")
    if weights is None:
        sw = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != y.shape:
            raise FitError("weights must match y in length")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise FitError("weights must be finite and positive")
        sw = np.sqrt(w)

    def residual(params):
        return sw * (y - model(params, x))

    r = residual(p)
    rss = float(r @ r)
    if not np.isfinite(rss):
        raise FitError("model is not finite at the initial parameters")
    # rounding-level residual: cannot be improved further
    rss_floor = (1e-13 * float(np.sqrt((sw * y) @ (sw * y)) + 1e-300)) ** 2

    lam = _LAMBDA_INIT
    converged = False
    message = "maximum iterations reached"
    stalled = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        jac = sw[:, None] * model.jac(p, x)
        if not np.all(np.isfinite(jac)):
            message = "non-finite Jacobian"
            break
        scale = np.sqrt(np.einsum("ij,ij->j", jac, jac))
        # a parameter the model ignores gets unit scale; any other magnitude is legitimate
        scale[scale == 0] = 1.0
        # work in Marquardt-scaled coordinates; raw J^T J can span 20+ decades
        js = jac / scale
        p_norm = float(np.linalg.norm(scale * p))
        # undamped Gauss-Newton step in the scaled metric: independent of lambda
        gn = np.linalg.lstsq(js, r, rcond=None)[0]
        gn_small = float(np.linalg.norm(gn)) <= tol * (p_norm + tol)
        cosine = _column_cosine(jac, r)
        if rss <= rss_floor or gn_small or (stalled and cosine <= _GTOL):
            if gn_small:
                # final undamped polish, kept only if it does not worsen the fit
                p_gn = p + gn / scale
                r_gn = residual(p_gn)
                rss_gn = float(r_gn @ r_gn)
                if np.isfinite(rss_gn) and rss_gn <= rss:
                    p, r, rss = p_gn, r_gn, rss_gn
            converged = True
            message = "converged"
            break

        accepted = False
        rhs = np.concatenate([r, np.zeros(k)])
        while lam <= _LAMBDA_MAX:
            # damped step as the least-squares solution of [J D^-1; sqrt(lam) I]
            aug = np.vstack([js, np.sqrt(lam) * np.eye(k)])
            delta = np.linalg.lstsq(aug, rhs, rcond=None)[0] / scale
            p_new = p + delta
            r_new = residual(p_new)
            rss_new = float(r_new @ r_new)
            if np.all(np.isfinite(delta)) and np.isfinite(rss_new) and rss_new <= rss:
                accepted = True
                break
            lam *= _LAMBDA_UP
        if not accepted:
            # no descent direction left at machine precision
            if cosine <= _GTOL:
                converged = True
                message = "converged (no further decrease possible)"
            else:
                message = "damping escalation failed"
            break
        # RSS no longer moving beyond rounding: only the gradient test remains meaningful
        stalled = rss - rss_new <= 8.0 * np.finfo(float).eps * rss
        p, r, rss = p_new, r_new, rss_new
        lam = max(lam / _LAMBDA_DOWN, _LAMBDA_MIN)

    if not converged:
        log.debug("fit did not converge after %d iterations: %s", iterations, message)

    dof = n - k
    jac = sw[:, None] * model.jac(p, x)
    scale = np.sqrt(np.einsum("ij,ij->j", jac, jac))
    scale[scale == 0] = 1.0
    js = jac / scale
    a = js.T @ js
    try:
        cov_s = np.linalg.inv(a)
        if not np.all(np.isfinite(cov_s)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov_s = np.linalg.pinv(a)
    cov = cov_s / np.outer(scale, scale)
    if weights is None or not absolute_weights:
        cov = cov * (rss / dof)
    cov = 0.5 * (cov + cov.T)
    errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        parameters=p,
        standard_errors=errors,
        covariance=cov,
        residual_sum_squares=rss,
        degrees_of_freedom=dof,
        converged=converged,
        iterations=iterations,
        residuals=r / sw,
        message=message,
        names=tuple(model.names),
    )


def propagate(gradient: Sequence[float], covariance) -> float:
    """First-order standard error of ``f(p)`` from its gradient and ``cov(p)``."""
    g = np.asarray(gradient, dtype=float)
    var = float(g @ np.asarray(covariance, dtype=float) @ g)
    return float(np.sqrt(max(var, 0.0)))


def line_model() -> ModelFunction:
    """``y = slope*x + intercept`` as a ModelFunction (parameters: slope, intercept)."""

    def evaluate(p, x):
        return p[0] * np.asarray(x, dtype=float) + p[1]

    def jacobian(p, x):
        x = np.asarray(x, dtype=float)
        return np.column_stack([x, np.ones_like(x)])

    return ModelFunction(evaluate, 2, jacobian, ("slope", "intercept"))
