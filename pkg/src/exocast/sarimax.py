"""Seasonal ARMA modelling with exogenous regressors on the differenced scale.

The model for the (d, D)-differenced target w is

    w_t = c + beta . x_t + sum_i ar_i * w_{t-i} + sum_j sar_j * w_{t-j*s}
          + sum_i ma_i * eps_{t-i} + sum_j sma_j * eps_{t-j*s} + eps_t

with exogenous values x entering undifferenced, aligned to the differenced
index. MA terms carry a positive sign in the model (the statsmodels
convention), so the residual recursion subtracts them. Estimation minimises
the conditional sum of squared residuals; stationarity and invertibility are
enforced by optimising in an unconstrained space that maps onto partial
autocorrelations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import (
    ConvergenceFailureError,
    GridSearchError,
    InsufficientDataError,
)
from .series import (
    AlignedFrame,
    Month,
    MonthlySeries,
    NormalizationParams,
    SplitSpec,
    difference_with_initials,
    least_squares_line,
    mae,
    split_train_test,
)

__all__ = [
    "SarimaxOrder",
    "SarimaxParams",
    "FittedSarimax",
    "RegressorForecast",
    "OrderScore",
    "css_residuals",
    "fit",
    "fitted_from_params",
    "forecast",
    "extrapolate_regressor",
    "grid_search_order",
    "save_fitted",
    "load_fitted",
]

MAX_ITER = 500
CSS_TOL = 1e-8
# Bound on the unconstrained coordinates; maps to |pacf| <= ~0.9998.
COORD_BOUND = 50.0


@dataclass(frozen=True, order=True)
class SarimaxOrder:
    """(p, d, q) plus seasonal (P, D, Q) at season length s."""

    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 12

    def __post_init__(self):
        for name in ("p", "d", "q", "P", "D", "Q"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.s < 1:
            raise ValueError("season length s must be positive")

    @property
    def presample(self) -> int:
        """Index of the first scored residual on the differenced scale."""
        return max(self.p, self.P * self.s)

    @property
    def dropped(self) -> int:
        return self.d + self.D * self.s

    def min_train_length(self, n_regressors: int = 0) -> int:
        return self.dropped + self.presample + self.q + 1 + n_regressors

    def as_tuple(self) -> tuple[int, ...]:
        return (self.p, self.d, self.q, self.P, self.D, self.Q, self.s)


@dataclass(frozen=True)
class SarimaxParams:
    """Fitted coefficients; vector lengths must match the order."""

    c: float
    ar: tuple[float, ...] = ()
    ma: tuple[float, ...] = ()
    seasonal_ar: tuple[float, ...] = ()
    seasonal_ma: tuple[float, ...] = ()
    beta: tuple[float, ...] = ()
    sigma2: float = 1.0

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    def check_against(self, order: SarimaxOrder, n_regressors: int) -> None:
        expected = (order.p, order.q, order.P, order.Q, n_regressors)
        got = (
            len(self.ar),
            len(self.ma),
            len(self.seasonal_ar),
            len(self.seasonal_ma),
            len(self.beta),
        )
        if expected != got:
            raise ValueError(f"parameter lengths {got} do not match order {expected}")


@dataclass(frozen=True)
class RegressorForecast:
    """A straight-line continuation of one regressor over the horizon."""

    id: str
    future_values: tuple[float, ...]
    slope: float
    intercept: float


@dataclass(frozen=True)
class FittedSarimax:
    order: SarimaxOrder
    params: SarimaxParams
    regressor_ids: tuple[str, ...]
    target_id: str
    train_end: Month
    tail_values: tuple[float, ...]
    tail_residuals: tuple[float, ...]
    css: float
    normalization: NormalizationParams | None = None
    mean_conditioning: bool = True
    presample_mean: float = 0.0
    difference_regressors: bool = False
    regressor_tails: tuple[tuple[float, ...], ...] = ()


@dataclass(frozen=True)
class OrderScore:
    order: SarimaxOrder
    score: float | None
    error: str | None = None


def _pacf_to_poly(pacf: np.ndarray) -> np.ndarray:
    """Durbin-Levinson: partial autocorrelations in (-1, 1) to the
    coefficients of a stationary polynomial 1 - a1*B - ... - ak*B^k."""
    coeffs: list[float] = []
    for k, r in enumerate(pacf):
        coeffs = [coeffs[i] - r * coeffs[k - 1 - i] for i in range(k)] + [float(r)]
    return np.asarray(coeffs)


def _unconstrained_to_coeffs(x: np.ndarray, invertible: bool) -> np.ndarray:
    if x.size == 0:
        return x
    r = x / np.sqrt(1.0 + x * x)
    a = _pacf_to_poly(r)
    # The MA polynomial 1 + m1*B + ... is invertible iff (-m) is stationary.
    return -a if invertible else a


def _residual_recursion(
    w: np.ndarray,
    xb: np.ndarray,
    params: SarimaxParams,
    s: int,
    wbar: float,
) -> np.ndarray:
    """Residuals for all t, conditioning on pre-sample w = wbar, eps = 0."""
    p, q = len(params.ar), len(params.ma)
    sp, sq = len(params.seasonal_ar), len(params.seasonal_ma)
    m = len(w)
    base = w - params.c - xb
    if q == 0 and sq == 0:
        # Pure AR: no recursion needed.
        eps = base.copy()
        for i, a in enumerate(params.ar, start=1):
            lagged = np.concatenate([np.full(i, wbar), w[:-i]]) if i < m else np.full(m, wbar)
            eps -= a * lagged
        for j, f in enumerate(params.seasonal_ar, start=1):
            lag = j * s
            lagged = np.concatenate([np.full(lag, wbar), w[:-lag]]) if lag < m else np.full(m, wbar)
            eps -= f * lagged
        return eps
    eps = np.empty(m)
    ar, ma = params.ar, params.ma
    sar, sma = params.seasonal_ar, params.seasonal_ma
    for t in range(m):
        acc = base[t]
        for i in range(p):
            u = t - i - 1
            acc -= ar[i] * (w[u] if u >= 0 else wbar)
        for j in range(sp):
            u = t - (j + 1) * s
            acc -= sar[j] * (w[u] if u >= 0 else wbar)
        for i in range(q):
            u = t - i - 1
            if u >= 0:
                acc -= ma[i] * eps[u]
        for j in range(sq):
            u = t - (j + 1) * s
            if u >= 0:
                acc -= sma[j] * eps[u]
        eps[t] = acc
    return eps


def _prepare(
    order: SarimaxOrder,
    target: MonthlySeries,
    exog: Sequence[MonthlySeries],
    difference_regressors: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Differenced target w plus the exog matrix aligned to w's index."""
    n = len(target)
    if n < order.dropped + order.presample + 1:
        raise InsufficientDataError(
            f"need more than {order.dropped + order.presample} observations "
            f"for order {order.as_tuple()}, got {n}"
        )
    for x in exog:
        if x.start != target.start or len(x) != n:
            raise ValueError(f"regressor {x.id!r} is not aligned to the target")
    diffed, _ = difference_with_initials(target, order.d, order.D, order.s)
    w = np.asarray(diffed.values, dtype=float)
    m = len(w)
    if exog:
        cols = []
        for x in exog:
            if difference_regressors:
                dx, _ = difference_with_initials(x, order.d, order.D, order.s)
                cols.append(np.asarray(dx.values, dtype=float))
            else:
                cols.append(np.asarray(x.require_complete(), dtype=float)[order.dropped :])
        X = np.column_stack(cols)
    else:
        X = np.zeros((m, 0))
    return w, X


def css_residuals(
    order: SarimaxOrder,
    params: SarimaxParams,
    target: MonthlySeries,
    exog: Sequence[MonthlySeries] = (),
    *,
    mean_conditioning: bool = True,
    difference_regressors: bool = False,
) -> tuple[list[float], float]:
    """Conditional residuals from t = max(p, P*s) onward, and their sum of squares."""
    params.check_against(order, len(exog))
    w, X = _prepare(order, target, exog, difference_regressors)
    wbar = float(w.mean()) if mean_conditioning else 0.0
    xb = X @ np.asarray(params.beta) if len(params.beta) else np.zeros(len(w))
    eps = _residual_recursion(w, xb, params, order.s, wbar)
    scored = eps[order.presample :]
    return scored.tolist(), float(scored @ scored)


def _unpack(x: np.ndarray, order: SarimaxOrder, k: int, sigma2: float = 1.0) -> SarimaxParams:
    p, q, sp, sq = order.p, order.q, order.P, order.Q
    pos = 1
    ar = _unconstrained_to_coeffs(x[pos : pos + p], invertible=False)
    pos += p
    ma = _unconstrained_to_coeffs(x[pos : pos + q], invertible=True)
    pos += q
    sar = _unconstrained_to_coeffs(x[pos : pos + sp], invertible=False)
    pos += sp
    sma = _unconstrained_to_coeffs(x[pos : pos + sq], invertible=True)
    pos += sq
    beta = x[pos : pos + k]
    return SarimaxParams(
        c=float(x[0]),
        ar=tuple(ar),
        ma=tuple(ma),
        seasonal_ar=tuple(sar),
        seasonal_ma=tuple(sma),
        beta=tuple(float(b) for b in beta),
        sigma2=sigma2,
    )


def fitted_from_params(
    order: SarimaxOrder,
    params: SarimaxParams,
    train: AlignedFrame,
    *,
    mean_conditioning: bool = True,
    difference_regressors: bool = False,
    normalization: NormalizationParams | None = None,
) -> FittedSarimax:
    """Assemble the forecast-ready state for explicitly given coefficients."""
    residuals, css = css_residuals(
        order,
        params,
        train.target,
        train.indicators,
        mean_conditioning=mean_conditioning,
        difference_regressors=difference_regressors,
    )
    w, _ = _prepare(order, train.target, train.indicators, difference_regressors)
    n_tail = max(order.p, order.q, order.P * order.s, order.Q * order.s) + order.dropped
    y = train.target.require_complete()
    n_resid_tail = max(order.q, order.Q * order.s)
    reg_tails: tuple[tuple[float, ...], ...] = ()
    if difference_regressors and order.dropped and train.indicators:
        reg_tails = tuple(
            tuple(x.require_complete()[-order.dropped :]) for x in train.indicators
        )
    return FittedSarimax(
        order=order,
        params=params,
        regressor_ids=train.indicator_ids,
        target_id=train.target.id,
        train_end=train.end,
        tail_values=tuple(y[len(y) - min(n_tail, len(y)) :]),
        tail_residuals=tuple(residuals[len(residuals) - min(n_resid_tail, len(residuals)) :]),
        css=css,
        normalization=normalization,
        mean_conditioning=mean_conditioning,
        presample_mean=float(w.mean()) if mean_conditioning else 0.0,
        difference_regressors=difference_regressors,
        regressor_tails=reg_tails,
    )


def fit(
    train: AlignedFrame,
    order: SarimaxOrder,
    *,
    mean_conditioning: bool = True,
    difference_regressors: bool = False,
    normalization: NormalizationParams | None = None,
    max_iter: int = MAX_ITER,
    tol: float = CSS_TOL,
) -> FittedSarimax:
    """Minimise the conditional sum of squares with L-BFGS-B from the
    all-zero starting point. Deterministic for identical inputs."""
    k = len(train.indicators)
    n = len(train)
    if n <= order.min_train_length(k):
        raise InsufficientDataError(
            f"order {order.as_tuple()} with {k} regressors needs more than "
            f"{order.min_train_length(k)} observations, got {n}"
        )
    w, X = _prepare(order, train.target, train.indicators, difference_regressors)
    wbar = float(w.mean()) if mean_conditioning else 0.0
    t0 = order.presample
    n_coeff = 1 + order.p + order.q + order.P + order.Q + k

    def objective(x: np.ndarray) -> float:
        params = _unpack(x, order, k)
        xb = X @ np.asarray(params.beta) if k else np.zeros(len(w))
        eps = _residual_recursion(w, xb, params, order.s, wbar)
        scored = eps[t0:]
        css = float(scored @ scored)
        return css if math.isfinite(css) else 1e300

    x0 = np.zeros(n_coeff)
    bounds = [(None, None)]  # constant
    bounds += [(-COORD_BOUND, COORD_BOUND)] * (order.p + order.q + order.P + order.Q)
    bounds += [(None, None)] * k
    result = minimize(
        objective,
        x0,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-10},
    )
    best_x = result.x if result.fun <= objective(x0) else x0

    def build(x: np.ndarray) -> FittedSarimax:
        params = _unpack(x, order, k)
        residuals, css = css_residuals(
            order,
            params,
            train.target,
            train.indicators,
            mean_conditioning=mean_conditioning,
            difference_regressors=difference_regressors,
        )
        params = replace(params, sigma2=max(css / len(residuals), 1e-300))
        fitted = fitted_from_params(
            order,
            params,
            train,
            mean_conditioning=mean_conditioning,
            difference_regressors=difference_regressors,
            normalization=normalization,
        )
        return fitted

    if result.status == 1:  # iteration/function budget exhausted
        raise ConvergenceFailureError(
            f"optimizer hit the iteration budget ({max_iter}) for order "
            f"{order.as_tuple()}: {result.message}",
            best=build(np.asarray(best_x)),
        )
    return build(np.asarray(best_x))


def extrapolate_regressor(series: MonthlySeries, horizon: int) -> RegressorForecast:
    """Ordinary least-squares line over the training index, evaluated at the
    next `horizon` indices."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    vals = series.require_complete()
    slope, intercept = least_squares_line(vals)
    n = len(vals)
    future = tuple(intercept + slope * (n + j) for j in range(horizon))
    return RegressorForecast(series.id, future, slope, intercept)


def _stage_histories(
    tail: Sequence[float], d: int, D: int, s: int
) -> tuple[list[tuple[int, list[float]]], list[float]]:
    """Per-stage value histories needed to integrate a forecast forward."""
    stages: list[tuple[int, list[float]]] = []
    cur = [float(v) for v in tail]
    for _ in range(d):
        stages.append((1, cur))
        cur = [cur[i + 1] - cur[i] for i in range(len(cur) - 1)]
    for _ in range(D):
        stages.append((s, cur))
        cur = [cur[i + s] - cur[i] for i in range(len(cur) - s)]
    return stages, cur


def _integrate_forward(history: list[float], lag: int, fc: list[float]) -> list[float]:
    buf = list(history[-lag:])
    out = []
    for v in fc:
        nxt = buf[-lag] + v
        buf.append(nxt)
        out.append(nxt)
    return out


def forecast(
    fitted: FittedSarimax,
    horizon: int,
    future_exog: Sequence[RegressorForecast] | None = None,
) -> MonthlySeries:
    """Iterate the recursion forward with future residuals at zero, then
    invert the differencing. Output stays on the fitted (possibly
    normalized) scale."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    order, params = fitted.order, fitted.params
    k = len(fitted.regressor_ids)
    future_exog = list(future_exog or [])
    if k:
        got = [rf.id for rf in future_exog]
        if got != list(fitted.regressor_ids):
            raise ValueError(
                f"regressor forecasts {got} do not match fitted regressors "
                f"{list(fitted.regressor_ids)}"
            )
        for rf in future_exog:
            if len(rf.future_values) < horizon:
                raise ValueError(f"regressor {rf.id!r} supplies fewer than {horizon} values")
    elif future_exog:
        raise ValueError("model has no regressors but forecasts were supplied")

    # Future exog rows on the scale used in fitting.
    if k:
        cols = []
        for i, rf in enumerate(future_exog):
            vals = list(rf.future_values[:horizon])
            if fitted.difference_regressors and order.dropped:
                joined = list(fitted.regressor_tails[i]) + vals
                for _ in range(order.d):
                    joined = [joined[t + 1] - joined[t] for t in range(len(joined) - 1)]
                for _ in range(order.D):
                    joined = [
                        joined[t + order.s] - joined[t] for t in range(len(joined) - order.s)
                    ]
                vals = joined[-horizon:]
            cols.append(vals)
        x_future = [[cols[i][j] for i in range(k)] for j in range(horizon)]
    else:
        x_future = [[] for _ in range(horizon)]

    stages, w_hist = _stage_histories(fitted.tail_values, order.d, order.D, order.s)
    eps_hist = list(fitted.tail_residuals)
    n_w = len(w_hist)
    n_e = len(eps_hist)
    w_fc: list[float] = []
    for j in range(horizon):
        acc = params.c
        acc += sum(b * x for b, x in zip(params.beta, x_future[j]))
        for i, a in enumerate(params.ar, start=1):
            u = j - i
            if u >= 0:
                acc += a * w_fc[u]
            elif n_w + u >= 0:
                acc += a * w_hist[n_w + u]
            else:
                acc += a * fitted.presample_mean
        for jj, f in enumerate(params.seasonal_ar, start=1):
            u = j - jj * order.s
            if u >= 0:
                acc += f * w_fc[u]
            elif n_w + u >= 0:
                acc += f * w_hist[n_w + u]
            else:
                acc += f * fitted.presample_mean
        for i, th in enumerate(params.ma, start=1):
            u = j - i
            if u < 0 and n_e + u >= 0:
                acc += th * eps_hist[n_e + u]  # future residuals are zero
        for jj, Th in enumerate(params.seasonal_ma, start=1):
            u = j - jj * order.s
            if u < 0 and n_e + u >= 0:
                acc += Th * eps_hist[n_e + u]
        w_fc.append(acc)

    values = w_fc
    for lag, history in reversed(stages):
        values = _integrate_forward(history, lag, values)
    return MonthlySeries(fitted.target_id, fitted.train_end.shift(1), values)


def grid_search_order(
    train: AlignedFrame,
    grid: Sequence[SarimaxOrder],
    horizon: int,
    **fit_kwargs,
) -> tuple[SarimaxOrder, list[OrderScore]]:
    """Score each order by MAE on the final `horizon` months of `train`
    (held out internally); ties break toward the lexicographically
    smallest order."""
    if not grid:
        raise ValueError("order grid is empty")
    sub_train, validation = split_train_test(train, SplitSpec(horizon))
    table: list[OrderScore] = []
    for order in grid:
        try:
            fitted = fit(sub_train, order, **fit_kwargs)
            future = [extrapolate_regressor(x, horizon) for x in sub_train.indicators]
            predicted = forecast(fitted, horizon, future)
            score = mae(validation.target.require_complete(), predicted.require_complete())
            table.append(OrderScore(order, score))
        except Exception as exc:  # noqa: BLE001 - per-order failures are data
            table.append(OrderScore(order, None, f"{type(exc).__name__}: {exc}"))
    scored = [e for e in table if e.score is not None]
    if not scored:
        raise GridSearchError(
            "every order failed: "
            + "; ".join(f"{e.order.as_tuple()} -> {e.error}" for e in table)
        )
    best = min(scored, key=lambda e: (e.score, e.order.as_tuple()))
    return best.order, table


# ---------------------------------------------------------------------------
# JSON serialization (schema documented in docs/schemas.md)

def _fitted_to_dict(fitted: FittedSarimax) -> dict:
    return {
        "schema": "exocast.sarimax.fitted/1",
        "order": list(fitted.order.as_tuple()),
        "params": {
            "c": fitted.params.c,
            "ar": list(fitted.params.ar),
            "ma": list(fitted.params.ma),
            "seasonal_ar": list(fitted.params.seasonal_ar),
            "seasonal_ma": list(fitted.params.seasonal_ma),
            "beta": list(fitted.params.beta),
            "sigma2": fitted.params.sigma2,
        },
        "regressor_ids": list(fitted.regressor_ids),
        "target_id": fitted.target_id,
        "train_end": str(fitted.train_end),
        "tail_values": list(fitted.tail_values),
        "tail_residuals": list(fitted.tail_residuals),
        "css": fitted.css,
        "normalization": (
            None
            if fitted.normalization is None
            else {"min": fitted.normalization.min, "max": fitted.normalization.max}
        ),
        "mean_conditioning": fitted.mean_conditioning,
        "presample_mean": fitted.presample_mean,
        "difference_regressors": fitted.difference_regressors,
        "regressor_tails": [list(t) for t in fitted.regressor_tails],
    }


def _fitted_from_dict(doc: dict) -> FittedSarimax:
    if doc.get("schema") != "exocast.sarimax.fitted/1":
        raise ValueError(f"unknown fitted-model schema: {doc.get('schema')!r}")
    p = doc["params"]
    norm = doc.get("normalization")
    return FittedSarimax(
        order=SarimaxOrder(*doc["order"]),
        params=SarimaxParams(
            c=p["c"],
            ar=tuple(p["ar"]),
            ma=tuple(p["ma"]),
            seasonal_ar=tuple(p["seasonal_ar"]),
            seasonal_ma=tuple(p["seasonal_ma"]),
            beta=tuple(p["beta"]),
            sigma2=p["sigma2"],
        ),
        regressor_ids=tuple(doc["regressor_ids"]),
        target_id=doc["target_id"],
        train_end=Month.parse(doc["train_end"]),
        tail_values=tuple(doc["tail_values"]),
        tail_residuals=tuple(doc["tail_residuals"]),
        css=doc["css"],
        normalization=None if norm is None else NormalizationParams(norm["min"], norm["max"]),
        mean_conditioning=doc["mean_conditioning"],
        presample_mean=doc["presample_mean"],
        difference_regressors=doc["difference_regressors"],
        regressor_tails=tuple(tuple(t) for t in doc.get("regressor_tails", [])),
    )


def save_fitted(fitted: FittedSarimax, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_fitted_to_dict(fitted), indent=2))


def load_fitted(path: str | Path) -> FittedSarimax:
    return _fitted_from_dict(json.loads(Path(path).read_text()))
