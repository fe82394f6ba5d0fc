"""Information-criterion scoring and the two-of-three model vote."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

from .fitting import FitResult
from .trend import TrendSpec

CRITERIA = ("sic", "aic", "adj_r2")


class DegenerateFitError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CriteriaScore:
    sic: float
    aic: float
    adj_r2: float
    p: int
    T: int

    def to_dict(self) -> dict:
        return {"sic": self.sic, "aic": self.aic, "adj_r2": self.adj_r2, "p": self.p, "T": self.T}


def criteria(fit: FitResult, count_nonlinear: bool = True) -> CriteriaScore:
    """SIC, AIC (lower is better) and adjusted R^2 (higher is better).

    ``p`` includes the estimated change locations and speeds unless
    ``count_nonlinear`` is False.
    """
    if not fit.ssr > 0:
        raise DegenerateFitError("criteria undefined for a zero-SSR fit")
    T = fit.T
    p = fit.p if count_nonlinear else fit.p_linear
    ll = T * math.log(fit.ssr / T)
    tss = fit.tss
    adj = 1 - (fit.ssr / (T - p)) / (tss / (T - 1)) if tss > 0 else float("nan")
    return CriteriaScore(ll + p * math.log(T), ll + 2 * p, adj, p, T)


@dataclass
class Selection:
    winner: int
    spec: TrendSpec
    votes: dict[str, int]
    scores: list[CriteriaScore]
    majority: bool

    def to_dict(self) -> dict:
        return {"winner": self.winner, "spec": self.spec.to_dict(), "label": self.spec.label(),
                "votes": dict(self.votes), "majority": self.majority,
                "scores": [s.to_dict() for s in self.scores]}


def _first_best(values: Sequence[float], higher: bool) -> int:
    best = 0
    for i, v in enumerate(values):
        if (v > values[best]) if higher else (v < values[best]):
            best = i
    return best


def select(candidates: Sequence[tuple[TrendSpec, FitResult]], count_nonlinear: bool = True) -> Selection:
    """Winner = candidate preferred by at least two of SIC, AIC and adjusted R^2.

    Exact ties go to the earlier candidate. On a three-way split SIC decides
    and a warning is issued.
    """
    if len(candidates) == 0:
        raise ValueError("no candidates to select from")
    scores = [criteria(fit, count_nonlinear) for _, fit in candidates]
    votes = {
        "sic": _first_best([s.sic for s in scores], higher=False),
        "aic": _first_best([s.aic for s in scores], higher=False),
        "adj_r2": _first_best([s.adj_r2 for s in scores], higher=True),
    }
    tally: dict[int, int] = {}
    for v in votes.values():
        tally[v] = tally.get(v, 0) + 1
    top = [i for i, n in tally.items() if n >= 2]
    if top:
        winner, majority = top[0], True
    else:
        winner, majority = votes["sic"], False
        warnings.warn("criteria disagree three ways; falling back to SIC", RuntimeWarning)
    return Selection(winner, candidates[winner][0], votes, scores, majority)
