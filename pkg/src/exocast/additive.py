"""Additive decomposition model: trend + seasonality + events + future-known
regressors + target autoregression + lagged indicators.

Fitting is ridge-regularised linear least squares on an explicit design
matrix; the intercept and the base trend slope stay unpenalised. Forecasting
steps one month at a time so the autoregressive block can consume its own
predictions.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError
from .series import AlignedFrame, Month, MonthlySeries
from .sarimax import RegressorForecast

__all__ = [
    "AdditiveConfig",
    "DesignMatrix",
    "FittedAdditive",
    "trend_features",
    "fourier_features",
    "build_design",
    "fit",
    "forecast",
    "forecast_with_components",
    "auto_config",
    "decompose",
    "export_components_csv",
    "save_fitted",
    "load_fitted",
]

COMPONENT_TAGS = ("intercept", "T", "S", "E", "F", "A", "L")


@dataclass(frozen=True)
class AdditiveConfig:
    n_changepoints: int = 0
    changepoint_range: float = 0.8
    seasonalities: tuple[tuple[float, int], ...] = ()
    ar_lags: int = 0
    regressor_lags: int = 0
    events: tuple[tuple[str, frozenset[Month]], ...] = ()
    ridge_lambda: float = 0.0
    # Indicator ids treated as future-known contemporaneous columns (the F
    # block) instead of lagged ones.
    future_known: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_changepoints < 0:
            raise ValueError("n_changepoints must be nonnegative")
        if not 0 < self.changepoint_range <= 1:
            raise ValueError("changepoint_range must be in (0, 1]")
        for period, order in self.seasonalities:
            if period <= 0 or order < 1:
                raise ValueError(f"bad seasonality ({period}, {order})")
        if self.ar_lags < 0 or self.regressor_lags < 0:
            raise ValueError("lag counts must be nonnegative")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")

    @property
    def dropped_rows(self) -> int:
        return max(self.ar_lags, self.regressor_lags)

    def changepoints(self) -> tuple[float, ...]:
        """Evenly spaced over the first changepoint_range of training time."""
        m = self.n_changepoints
        return tuple(self.changepoint_range * j / (m + 1) for j in range(1, m + 1))


@dataclass(frozen=True)
class DesignMatrix:
    layout: tuple[tuple[str, str], ...]
    months: tuple[Month, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows, cols = self.values.shape
        if rows != len(self.months) or cols != len(self.layout):
            raise ValueError(
                f"design shape {self.values.shape} does not match layout "
                f"({len(self.months)} rows x {len(self.layout)} cols)"
            )

    @property
    def width(self) -> int:
        return len(self.layout)

    @property
    def height(self) -> int:
        return len(self.months)


@dataclass(frozen=True)
class FittedAdditive:
    config: AdditiveConfig
    layout: tuple[tuple[str, str], ...]
    coefficients: tuple[float, ...]
    target_id: str
    indicator_ids: tuple[str, ...]
    train_start: Month
    train_length: int
    target_tail: tuple[float, ...]
    regressor_tails: tuple[tuple[float, ...], ...]
    fitted_values: tuple[float, ...]
    fitted_start: Month

    def __post_init__(self):
        if len(self.coefficients) != len(self.layout):
            raise ValueError(
                f"{len(self.coefficients)} coefficients for {len(self.layout)} columns"
            )

    @property
    def train_end(self) -> Month:
        return self.train_start.shift(self.train_length - 1)

    def time_value(self, month: Month) -> float:
        denom = max(self.train_length - 1, 1)
        return self.train_start.months_until(month) / denom

    def month_index(self, month: Month) -> int:
        return self.train_start.months_until(month)


def trend_features(t: float, changepoints: Sequence[float]) -> list[float]:
    """Base slope plus one hinge per changepoint: [t, max(0, t-c1), ...]."""
    return [t] + [max(0.0, t - c) for c in changepoints]


def fourier_features(t_month: int, period: float, order: int) -> list[float]:
    """[sin(2*pi*k*t/period), cos(...)] for k = 1..order."""
    out = []
    for k in range(1, order + 1):
        angle = 2.0 * math.pi * k * t_month / period
        out.extend([math.sin(angle), math.cos(angle)])
    return out


def _layout_for(config: AdditiveConfig, indicator_ids: Sequence[str]) -> tuple[tuple[str, str], ...]:
    layout: list[tuple[str, str]] = [("intercept", "intercept"), ("T", "t")]
    layout += [("T", f"cp{j:02d}") for j in range(1, config.n_changepoints + 1)]
    for period, order in config.seasonalities:
        for k in range(1, order + 1):
            layout += [("S", f"p{period:g}_sin{k}"), ("S", f"p{period:g}_cos{k}")]
    layout += [("E", event_id) for event_id, _ in config.events]
    lagged_ids = [i for i in indicator_ids if i not in config.future_known]
    layout += [("F", i) for i in indicator_ids if i in config.future_known]
    layout += [("A", f"lag{lag:02d}") for lag in range(1, config.ar_lags + 1)]
    for ind in lagged_ids:
        layout += [("L", f"{ind}_lag{lag:02d}") for lag in range(0, config.regressor_lags + 1)]
    return tuple(layout)


def _row_features(
    month: Month,
    config: AdditiveConfig,
    changepoints: Sequence[float],
    t_norm: float,
    month_index: int,
    target_lag,
    regressor_value,
    indicator_ids: Sequence[str],
) -> list[float]:
    row: list[float] = [1.0]
    row += trend_features(t_norm, changepoints)
    for period, order in config.seasonalities:
        row += fourier_features(month_index, period, order)
    for _, months in config.events:
        row.append(1.0 if month in months else 0.0)
    lagged_ids = [i for i in indicator_ids if i not in config.future_known]
    for ind in indicator_ids:
        if ind in config.future_known:
            row.append(regressor_value(ind, 0))
    for lag in range(1, config.ar_lags + 1):
        row.append(target_lag(lag))
    for ind in lagged_ids:
        for lag in range(0, config.regressor_lags + 1):
            row.append(regressor_value(ind, lag))
    return row


def build_design(train: AlignedFrame, config: AdditiveConfig) -> DesignMatrix:
    n = len(train)
    drop = config.dropped_rows
    if config.ar_lags >= n:
        raise InsufficientDataError(f"ar_lags {config.ar_lags} >= training length {n}")
    if n - drop < 3:
        raise InsufficientDataError(
            f"only {n - drop} usable rows after dropping {drop}; need at least 3"
        )
    y = train.target.require_complete()
    indicator_values = {s.id: s.require_complete() for s in train.indicators}
    changepoints = config.changepoints()
    denom = max(n - 1, 1)
    layout = _layout_for(config, train.indicator_ids)
    rows = []
    for i in range(drop, n):
        month = train.index[i]
        row = _row_features(
            month,
            config,
            changepoints,
            t_norm=i / denom,
            month_index=i,
            target_lag=lambda lag, i=i: y[i - lag],
            regressor_value=lambda ind, lag, i=i: indicator_values[ind][i - lag],
            indicator_ids=train.indicator_ids,
        )
        rows.append(row)
    return DesignMatrix(layout, tuple(train.index[drop:]), np.asarray(rows, dtype=float))


def _solve_ridge(design: DesignMatrix, y: np.ndarray, ridge_lambda: float) -> np.ndarray:
    """Stacked least squares [D; sqrt(pen)] so rank deficiency is harmless.
    Intercept and base trend slope are never penalised."""
    penalties = np.array(
        [0.0 if (tag == "intercept" or (tag == "T" and name == "t")) else ridge_lambda
         for tag, name in design.layout]
    )
    if ridge_lambda > 0:
        stacked = np.vstack([design.values, np.diag(np.sqrt(penalties))])
        rhs = np.concatenate([y, np.zeros(design.width)])
    else:
        stacked, rhs = design.values, y
    coeffs, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    return coeffs


def fit(train: AlignedFrame, config: AdditiveConfig) -> FittedAdditive:
    design = build_design(train, config)
    y_full = np.asarray(train.target.require_complete())
    y = y_full[config.dropped_rows :]
    coeffs = _solve_ridge(design, y, config.ridge_lambda)
    fitted_values = design.values @ coeffs
    tail = max(config.ar_lags, config.regressor_lags, 1)
    return FittedAdditive(
        config=config,
        layout=design.layout,
        coefficients=tuple(float(c) for c in coeffs),
        target_id=train.target.id,
        indicator_ids=train.indicator_ids,
        train_start=train.start,
        train_length=len(train),
        target_tail=tuple(y_full[-tail:]),
        regressor_tails=tuple(
            tuple(s.require_complete()[-tail:]) for s in train.indicators
        ),
        fitted_values=tuple(float(v) for v in fitted_values),
        fitted_start=design.months[0],
    )


def forecast_with_components(
    fitted: FittedAdditive,
    horizon: int,
    future_regressors: Sequence[RegressorForecast] = (),
    future_events: Mapping[str, frozenset[Month]] | None = None,
) -> tuple[MonthlySeries, dict[str, tuple[float, ...]]]:
    """Recursive forecast plus the per-component contributions that sum to it."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    config = fitted.config
    future_events = future_events or {}
    by_id = {rf.id: rf for rf in future_regressors}
    if fitted.indicator_ids:
        missing = [i for i in fitted.indicator_ids if i not in by_id]
        if missing:
            raise ValueError(f"missing future values for regressors: {missing}")
        for ind in fitted.indicator_ids:
            if len(by_id[ind].future_values) < horizon:
                raise ValueError(f"regressor {ind!r} supplies fewer than {horizon} values")

    changepoints = config.changepoints()
    n = fitted.train_length
    tail_len = len(fitted.target_tail)
    target_history: list[float] = list(fitted.target_tail)
    reg_history = {
        ind: list(tail) for ind, tail in zip(fitted.indicator_ids, fitted.regressor_tails)
    }
    event_months = {
        event_id: set(months) | set(future_events.get(event_id, ()))
        for event_id, months in config.events
    }

    components: dict[str, list[float]] = {tag: [0.0] * horizon for tag in COMPONENT_TAGS}
    values: list[float] = []
    denom = max(n - 1, 1)
    for step in range(1, horizon + 1):
        month = fitted.train_end.shift(step)
        i = n - 1 + step
        row: list[float] = [1.0]
        row += trend_features(i / denom, changepoints)
        for period, order in config.seasonalities:
            row += fourier_features(i, period, order)
        for event_id, _ in config.events:
            row.append(1.0 if month in event_months[event_id] else 0.0)
        for ind in fitted.indicator_ids:
            if ind in config.future_known:
                row.append(by_id[ind].future_values[step - 1])
        for lag in range(1, config.ar_lags + 1):
            offset = step - lag
            if offset >= 1:
                row.append(values[offset - 1])
            else:
                row.append(target_history[tail_len + offset - 1])
        for ind in fitted.indicator_ids:
            if ind in config.future_known:
                continue
            for lag in range(0, config.regressor_lags + 1):
                offset = step - lag
                if offset >= 1:
                    row.append(by_id[ind].future_values[offset - 1])
                else:
                    hist = reg_history[ind]
                    row.append(hist[len(hist) + offset - 1])
        total = 0.0
        for (tag, _), coeff, feature in zip(fitted.layout, fitted.coefficients, row):
            contribution = coeff * feature
            components[tag][step - 1] += contribution
            total += contribution
        values.append(total)
    series = MonthlySeries(fitted.target_id, fitted.train_end.shift(1), values)
    return series, {tag: tuple(v) for tag, v in components.items()}


def forecast(
    fitted: FittedAdditive,
    horizon: int,
    future_regressors: Sequence[RegressorForecast] = (),
    future_events: Mapping[str, frozenset[Month]] | None = None,
) -> MonthlySeries:
    return forecast_with_components(fitted, horizon, future_regressors, future_events)[0]


def auto_config(train: AlignedFrame) -> AdditiveConfig:
    """Deterministic defaults scaled to the training length."""
    n = len(train)
    if n < 12:
        raise InsufficientDataError(f"auto_config needs at least 12 months, got {n}")
    seasonalities = ((12.0, 3),) if n >= 24 else ()
    ar_lags = min(12, n // 4)
    return AdditiveConfig(
        n_changepoints=min(10, n // 8),
        changepoint_range=0.8,
        seasonalities=seasonalities,
        ar_lags=ar_lags,
        regressor_lags=ar_lags,
        ridge_lambda=0.1,
    )


def decompose(fitted: FittedAdditive, train: AlignedFrame) -> dict[str, tuple[float, ...]]:
    """Per-component in-sample contributions over the design rows."""
    design = build_design(train, fitted.config)
    if design.layout != fitted.layout:
        raise ValueError("frame does not match the fitted design layout")
    coeffs = np.asarray(fitted.coefficients)
    out: dict[str, tuple[float, ...]] = {}
    for tag in COMPONENT_TAGS:
        mask = np.array([t == tag for t, _ in design.layout])
        if mask.any():
            out[tag] = tuple((design.values[:, mask] @ coeffs[mask]).tolist())
    return out


def export_components_csv(fitted: FittedAdditive, train: AlignedFrame, path: str | Path) -> None:
    parts = decompose(fitted, train)
    design = build_design(train, fitted.config)
    tags = [t for t in COMPONENT_TAGS if t in parts]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "fitted", *tags])
        for i, month in enumerate(design.months):
            writer.writerow(
                [str(month), repr(fitted.fitted_values[i])]
                + [repr(parts[t][i]) for t in tags]
            )


# ---------------------------------------------------------------------------
# JSON serialization (schema documented in docs/schemas.md)

def _config_to_dict(config: AdditiveConfig) -> dict:
    return {
        "n_changepoints": config.n_changepoints,
        "changepoint_range": config.changepoint_range,
        "seasonalities": [list(sp) for sp in config.seasonalities],
        "ar_lags": config.ar_lags,
        "regressor_lags": config.regressor_lags,
        "events": [[eid, sorted(str(m) for m in months)] for eid, months in config.events],
        "ridge_lambda": config.ridge_lambda,
        "future_known": list(config.future_known),
    }


def _config_from_dict(doc: dict) -> AdditiveConfig:
    return AdditiveConfig(
        n_changepoints=doc["n_changepoints"],
        changepoint_range=doc["changepoint_range"],
        seasonalities=tuple((float(p), int(o)) for p, o in doc["seasonalities"]),
        ar_lags=doc["ar_lags"],
        regressor_lags=doc["regressor_lags"],
        events=tuple(
            (eid, frozenset(Month.parse(m) for m in months)) for eid, months in doc["events"]
        ),
        ridge_lambda=doc["ridge_lambda"],
        future_known=tuple(doc.get("future_known", ())),
    )


def save_fitted(fitted: FittedAdditive, path: str | Path) -> None:
    doc = {
        "schema": "exocast.additive.fitted/1",
        "config": _config_to_dict(fitted.config),
        "layout": [list(c) for c in fitted.layout],
        "coefficients": list(fitted.coefficients),
        "target_id": fitted.target_id,
        "indicator_ids": list(fitted.indicator_ids),
        "train_start": str(fitted.train_start),
        "train_length": fitted.train_length,
        "target_tail": list(fitted.target_tail),
        "regressor_tails": [list(t) for t in fitted.regressor_tails],
        "fitted_values": list(fitted.fitted_values),
        "fitted_start": str(fitted.fitted_start),
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_fitted(path: str | Path) -> FittedAdditive:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != "exocast.additive.fitted/1":
        raise ValueError(f"unknown fitted-model schema: {doc.get('schema')!r}")
    return FittedAdditive(
        config=_config_from_dict(doc["config"]),
        layout=tuple((t, n) for t, n in doc["layout"]),
        coefficients=tuple(doc["coefficients"]),
        target_id=doc["target_id"],
        indicator_ids=tuple(doc["indicator_ids"]),
        train_start=Month.parse(doc["train_start"]),
        train_length=doc["train_length"],
        target_tail=tuple(doc["target_tail"]),
        regressor_tails=tuple(tuple(t) for t in doc["regressor_tails"]),
        fitted_values=tuple(doc["fitted_values"]),
        fitted_start=Month.parse(doc["fitted_start"]),
    )
