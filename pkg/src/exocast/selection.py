"""Exogenous-variable selection: correlation filtering, LASSO, greedy
forward selection against an out-of-sample evaluator, and a validated
manual list.

The wrapper method treats the downstream model as a black box: callers hand
in an evaluator mapping a subset of candidate ids to an out-of-sample MAE.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceFailureError, SelectionError
from .series import AlignedFrame, pearson_correlation

__all__ = [
    "CandidateSet",
    "SelectionResult",
    "SelectionTrace",
    "correlation_select",
    "lasso_select",
    "lasso_coordinate_descent",
    "soft_threshold",
    "forward_select",
    "validate_manual",
    "score_development",
    "save_result",
    "load_result",
    "export_trace_csv",
]

TARGET_CORRELATION_THRESHOLD = 0.75
MUTUAL_CORRELATION_THRESHOLD = 0.30
FORWARD_CAP = 20
LASSO_TOL = 1e-8
LASSO_MAX_ITER = 10_000
LASSO_NONZERO = 1e-10


@dataclass(frozen=True)
class CandidateSet:
    """A target frame plus the indicator ids eligible for selection."""

    frame: AlignedFrame
    candidate_ids: tuple[str, ...] = ()

    def __post_init__(self):
        ids = tuple(self.candidate_ids) or self.frame.indicator_ids
        object.__setattr__(self, "candidate_ids", ids)
        known = set(self.frame.indicator_ids)
        unknown = [i for i in ids if i not in known]
        if unknown:
            raise ValueError(f"candidate ids not in frame: {unknown}")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate candidate ids")


@dataclass(frozen=True)
class SelectionTrace:
    """Every subset evaluation made by a wrapper run, in evaluation order."""

    entries: tuple[tuple[tuple[str, ...], float], ...]
    failures: tuple[tuple[tuple[str, ...], str], ...] = ()


@dataclass(frozen=True)
class SelectionResult:
    method: str
    selected_ids: tuple[str, ...]
    score: float | None = None
    trace: SelectionTrace | None = None
    diagnostics: dict = field(default_factory=dict)


def correlation_select(
    candidates: CandidateSet,
    target_threshold: float = TARGET_CORRELATION_THRESHOLD,
    mutual_threshold: float = MUTUAL_CORRELATION_THRESHOLD,
) -> SelectionResult:
    """Keep candidates strongly correlated with the target, then greedily
    drop mutually redundant ones in descending |target correlation| order."""
    frame = candidates.frame
    target = frame.target.require_complete()
    target_corr: dict[str, float] = {}
    for cid in candidates.candidate_ids:
        target_corr[cid] = pearson_correlation(target, frame.indicator(cid).require_complete())

    survivors = [cid for cid in candidates.candidate_ids if abs(target_corr[cid]) >= target_threshold]
    order = {cid: i for i, cid in enumerate(candidates.candidate_ids)}
    survivors.sort(key=lambda cid: (-abs(target_corr[cid]), order[cid]))

    pairwise: dict[str, float] = {}
    for i, a in enumerate(survivors):
        for b in survivors[i + 1 :]:
            pairwise[f"{a}|{b}"] = pearson_correlation(
                frame.indicator(a).require_complete(), frame.indicator(b).require_complete()
            )

    def mutual(a: str, b: str) -> float:
        return pairwise.get(f"{a}|{b}", pairwise.get(f"{b}|{a}", 0.0))

    admitted: list[str] = []
    for cid in survivors:
        if all(abs(mutual(cid, kept)) < mutual_threshold for kept in admitted):
            admitted.append(cid)

    return SelectionResult(
        method="correlation",
        selected_ids=tuple(admitted),
        diagnostics={
            "target_correlations": target_corr,
            "pairwise_correlations": pairwise,
            "target_threshold": target_threshold,
            "mutual_threshold": mutual_threshold,
        },
    )


def soft_threshold(value: float, amount: float) -> float:
    if value > amount:
        return value - amount
    if value < -amount:
        return value + amount
    return 0.0


def lasso_coordinate_descent(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = LASSO_TOL,
    max_iter: int = LASSO_MAX_ITER,
    beta0: np.ndarray | None = None,
) -> np.ndarray:
    """Cyclic coordinate descent for (1/2n)||y - Xb||^2 + lam*||b||_1.

    Stops when the largest single-coefficient change in a sweep is <= tol.
    beta0 warm-starts the iteration (pathwise fits over a lambda grid are far
    cheaper when each fit continues from its neighbour's solution).
    """
    n, p = X.shape
    col_norm2 = (X * X).sum(axis=0) / n
    col_norm2[col_norm2 == 0.0] = 1.0  # dead column; its coefficient stays 0
    beta = np.zeros(p) if beta0 is None else beta0.astype(float).copy()
    residual = y.astype(float) - (X @ beta if beta.any() else 0.0)
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(p):
            old = beta[j]
            if old != 0.0:
                residual += X[:, j] * old
            rho = float(X[:, j] @ residual) / n
            new = soft_threshold(rho, lam) / col_norm2[j]
            if new != 0.0:
                residual -= X[:, j] * new
            beta[j] = new
            max_delta = max(max_delta, abs(new - old))
        if max_delta <= tol:
            return beta
    raise ConvergenceFailureError(
        f"coordinate descent did not converge within {max_iter} sweeps", best=beta
    )


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return (X - mu) / sd, mu, sd


def lasso_select(
    candidates: CandidateSet,
    lam: float | None = None,
    tol: float = LASSO_TOL,
    max_iter: int = LASSO_MAX_ITER,
) -> SelectionResult:
    """L1-penalised selection on standardized features and a centred target.

    With lam=None the penalty comes from a 50-point log grid on
    [1e-4*lam_max, lam_max], scored by MAE on the final 20% of the training
    range; ties resolve toward the larger (sparser) value.
    """
    frame = candidates.frame
    ids = candidates.candidate_ids
    y_raw = np.asarray(frame.target.require_complete())
    n = len(y_raw)
    if n < 3:
        raise SelectionError("lasso needs at least 3 training rows")
    X_raw = np.column_stack(
        [np.asarray(frame.indicator(cid).require_complete()) for cid in ids]
    ) if ids else np.zeros((n, 0))

    Xs, _, _ = _standardize(X_raw)
    yc = y_raw - y_raw.mean()
    lam_max = float(np.max(np.abs(Xs.T @ yc)) / n) if ids else 0.0

    chosen = lam
    grid_scores: list[tuple[float, float]] = []
    if lam is None:
        if lam_max == 0.0:
            chosen = 0.0
        else:
            grid = np.geomspace(1e-4 * lam_max, lam_max, 50)
            n_val = max(1, n // 5)
            X_fit, X_val = X_raw[: n - n_val], X_raw[n - n_val :]
            y_fit, y_val = y_raw[: n - n_val], y_raw[n - n_val :]
            Xf, mu, sd = _standardize(X_fit)
            yf = y_fit - y_fit.mean()
            best_score, chosen = None, None
            warm = np.zeros(Xf.shape[1])
            for g in grid[::-1]:  # descending: ties keep the larger lambda
                warm = lasso_coordinate_descent(Xf, yf, float(g), tol, max_iter, beta0=warm)
                pred = y_fit.mean() + ((X_val - mu) / sd) @ warm
                score = float(np.mean(np.abs(pred - y_val)))
                grid_scores.append((float(g), score))
                if best_score is None or score < best_score:
                    best_score, chosen = score, float(g)

    beta = lasso_coordinate_descent(Xs, yc, float(chosen), tol, max_iter) if ids else np.zeros(0)
    selected = tuple(cid for cid, b in zip(ids, beta) if abs(b) > LASSO_NONZERO)
    return SelectionResult(
        method="lasso",
        selected_ids=selected,
        diagnostics={
            "coefficients": {cid: float(b) for cid, b in zip(ids, beta)},
            "lambda": float(chosen),
            "lambda_max": lam_max,
            "grid_scores": grid_scores,
        },
    )


def forward_select(
    candidates: CandidateSet,
    evaluator: Callable[[tuple[str, ...]], float],
    cap: int = FORWARD_CAP,
    n_jobs: int = 1,
) -> SelectionResult:
    """Greedy wrapper selection: grow the subset one best candidate at a
    time, record every evaluation, return the best subset seen anywhere.

    The per-round candidate batch may be evaluated concurrently; results are
    recorded and reduced in candidate order, so the trace is identical for
    any n_jobs.
    """
    if cap < 1:
        raise ValueError("cap must be positive")
    ids = candidates.candidate_ids
    index_of = {cid: i for i, cid in enumerate(ids)}
    entries: list[tuple[tuple[str, ...], float]] = []
    failures: list[tuple[tuple[str, ...], str]] = []

    def evaluate(subset: tuple[str, ...]) -> tuple[float | None, str | None]:
        try:
            return float(evaluator(subset)), None
        except Exception as exc:  # noqa: BLE001 - recorded, not fatal
            return None, f"{type(exc).__name__}: {exc}"

    def evaluate_batch(subsets: list[tuple[str, ...]]):
        if n_jobs > 1 and len(subsets) > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                return list(pool.map(evaluate, subsets))
        return [evaluate(s) for s in subsets]

    def record(subset: tuple[str, ...], outcome: tuple[float | None, str | None]):
        score, error = outcome
        if error is None:
            entries.append((subset, score))
        else:
            failures.append((subset, error))

    record((), evaluate(()))

    current: list[str] = []
    remaining = list(ids)
    while len(current) < cap and remaining:
        batch = [tuple(current) + (cid,) for cid in remaining]
        outcomes = evaluate_batch(batch)
        round_best: tuple[float, int, str] | None = None
        for cid, subset, outcome in zip(remaining, batch, outcomes):
            record(subset, outcome)
            if outcome[1] is None:
                key = (outcome[0], index_of[cid], cid)
                if round_best is None or key < round_best:
                    round_best = key
        if round_best is None:
            break  # the whole round failed; keep what we have
        current.append(round_best[2])
        remaining.remove(round_best[2])

    if not entries:
        raise SelectionError(
            "every evaluation failed: "
            + "; ".join(f"{list(s)} -> {r}" for s, r in failures[:5])
        )
    best_subset, best_score = min(entries, key=lambda e: (e[1], len(e[0])))
    return SelectionResult(
        method="forward",
        selected_ids=best_subset,
        score=best_score,
        trace=SelectionTrace(tuple(entries), tuple(failures)),
        diagnostics={
            "evaluations": len(entries),
            "failed_evaluations": len(failures),
            "greedy_path": list(current),
            "cap": cap,
        },
    )


def validate_manual(candidates: CandidateSet, chosen: Sequence[str]) -> SelectionResult:
    """Check a hand-picked list against the candidate pool; dedupe in order."""
    known = set(candidates.candidate_ids)
    seen: list[str] = []
    for cid in chosen:
        if cid not in known:
            raise SelectionError(f"unknown candidate id: {cid!r}")
        if cid not in seen:
            seen.append(cid)
    return SelectionResult(method="manual", selected_ids=tuple(seen))


def score_development(traces: Sequence[SelectionTrace]) -> list[tuple[int, float]]:
    """Best score per subset size in each trace, averaged across the traces
    that reach that size."""
    if not traces:
        raise ValueError("need at least one trace")
    per_size: dict[int, list[float]] = {}
    for trace in traces:
        best: dict[int, float] = {}
        for subset, score in trace.entries:
            size = len(subset)
            if size not in best or score < best[size]:
                best[size] = score
        for size, score in best.items():
            per_size.setdefault(size, []).append(score)
    return [(size, sum(v) / len(v)) for size, v in sorted(per_size.items())]


# ---------------------------------------------------------------------------
# Persistence

def _result_to_dict(result: SelectionResult) -> dict:
    doc = {
        "schema": "exocast.selection.result/1",
        "method": result.method,
        "selected_ids": list(result.selected_ids),
        "score": result.score,
        "diagnostics": result.diagnostics,
    }
    if result.trace is not None:
        doc["trace"] = {
            "entries": [[list(s), score] for s, score in result.trace.entries],
            "failures": [[list(s), reason] for s, reason in result.trace.failures],
        }
    return doc


def save_result(result: SelectionResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_result_to_dict(result), indent=2))


def load_result(path: str | Path) -> SelectionResult:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != "exocast.selection.result/1":
        raise ValueError(f"unknown selection-result schema: {doc.get('schema')!r}")
    trace = None
    if "trace" in doc:
        trace = SelectionTrace(
            entries=tuple((tuple(s), score) for s, score in doc["trace"]["entries"]),
            failures=tuple((tuple(s), reason) for s, reason in doc["trace"]["failures"]),
        )
    return SelectionResult(
        method=doc["method"],
        selected_ids=tuple(doc["selected_ids"]),
        score=doc["score"],
        trace=trace,
        diagnostics=doc.get("diagnostics", {}),
    )


def export_trace_csv(trace: SelectionTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_vars", "subset", "oos_mae"])
        for subset, score in trace.entries:
            writer.writerow([len(subset), "|".join(subset), repr(score)])
