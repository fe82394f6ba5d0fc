"""Deterministic trend family: polynomial base plus level/slope changes.

``f(s) = b0 + b1 s [+ b2 s^2] + sum_j (delta_j [+ eta_j s]) F(s; lambda_j[, gamma_j])``
with relative time ``s = t/T``, ``t = 1..T`` and ``F`` either a step
(``1{s > lambda}``) or a logistic transition.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

SHAPES = ("none", "step", "logistic")
CLASSES = ("I", "III")

# exp() overflows past ~709; saturate well before that.
_LOGISTIC_CLIP = 700.0


@dataclass(frozen=True)
class TrendSpec:
    """Trend family selector.

    ``order`` is the polynomial degree (0 = intercept only, used for the
    classical level-stationarity benchmark; 1 linear; 2 quadratic).
    """

    order: int = 2
    model_class: str = "III"
    shape: str = "none"
    n_changes: int = 0

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {self.order}")
        if self.model_class not in CLASSES:
            raise ValueError(f"model_class must be 'I' or 'III', got {self.model_class!r}")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if not 0 <= self.n_changes <= 2:
            raise ValueError("at most two changes are supported")
        if (self.n_changes == 0) != (self.shape == "none"):
            raise ValueError("n_changes == 0 exactly when shape == 'none'")

    @property
    def k(self) -> int:
        """Linear coefficients per change (delta, plus eta under Model III)."""
        return 2 if self.model_class == "III" else 1

    @property
    def n_linear(self) -> int:
        return self.order + 1 + self.n_changes * self.k

    @property
    def n_nonlinear(self) -> int:
        return self.n_changes * (2 if self.shape == "logistic" else 1)

    @property
    def n_params(self) -> int:
        return self.n_linear + self.n_nonlinear

    def label(self) -> str:
        poly = {0: "Constant", 1: "Linear", 2: "Quadratic"}[self.order]
        if self.n_changes == 0:
            return poly
        kind = "Break" if self.shape == "step" else "Smooth"
        return f"{poly} {kind} {self.model_class}({self.n_changes})"

    def code(self) -> str:
        """Compact selector, e.g. ``quad-break-III-2`` or ``lin``."""
        poly = {0: "const", 1: "lin", 2: "quad"}[self.order]
        if self.n_changes == 0:
            return poly
        kind = "break" if self.shape == "step" else "smooth"
        return f"{poly}-{kind}-{self.model_class}-{self.n_changes}"

    def to_dict(self) -> dict:
        return {"order": self.order, "model_class": self.model_class,
                "shape": self.shape, "n_changes": self.n_changes}

    @classmethod
    def from_dict(cls, d: dict) -> "TrendSpec":
        return cls(int(d["order"]), d["model_class"], d["shape"], int(d["n_changes"]))

    def with_changes(self, n: int, shape: str | None = None,
                     model_class: str | None = None) -> "TrendSpec":
        if n == 0:
            return replace(self, n_changes=0, shape="none",
                           model_class=model_class or self.model_class)
        return replace(self, n_changes=n, shape=shape or (self.shape if self.shape != "none" else "step"),
                       model_class=model_class or self.model_class)


_CODE = re.compile(
    r"^(?P<order>const|constant|lin|linear|quad|quadratic)"
    r"(?:-(?P<shape>break|step|smooth|logistic)-(?P<cls>I|III)-(?P<n>[012]))?$",
    re.IGNORECASE,
)


def parse_spec(code: str) -> TrendSpec:
    m = _CODE.match(code.strip())
    if not m:
        raise ValueError(f"cannot parse trend spec {code!r} (e.g. 'quad', 'lin-smooth-III-2')")
    order = {"const": 0, "constant": 0, "lin": 1, "linear": 1,
             "quad": 2, "quadratic": 2}[m["order"].lower()]
    if m["shape"] is None:
        return TrendSpec(order, "III", "none", 0)
    shape = "step" if m["shape"].lower() in ("break", "step") else "logistic"
    n = int(m["n"])
    if n == 0:
        return TrendSpec(order, m["cls"].upper(), "none", 0)
    return TrendSpec(order, m["cls"].upper(), shape, n)


@dataclass(frozen=True)
class ChangeParams:
    delta: float
    lam: float
    eta: float | None = None
    gamma: float | None = None

    def to_dict(self) -> dict:
        d = {"delta": self.delta, "lambda": self.lam}
        if self.eta is not None:
            d["eta"] = self.eta
        if self.gamma is not None:
            d["gamma"] = self.gamma
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChangeParams":
        return cls(d["delta"], d["lambda"], d.get("eta"), d.get("gamma"))


@dataclass(frozen=True)
class TrendParams:
    beta: tuple[float, ...]
    changes: tuple[ChangeParams, ...] = field(default_factory=tuple)

    def nonlinear(self) -> list[tuple[float, ...]]:
        return [(c.lam,) if c.gamma is None else (c.lam, c.gamma) for c in self.changes]

    def linear_vector(self) -> np.ndarray:
        out = list(self.beta)
        for c in self.changes:
            out.append(c.delta)
            if c.eta is not None:
                out.append(c.eta)
        return np.asarray(out, dtype=float)

    def to_dict(self) -> dict:
        return {"beta": list(self.beta), "changes": [c.to_dict() for c in self.changes]}

    @classmethod
    def from_dict(cls, d: dict) -> "TrendParams":
        return cls(tuple(d["beta"]), tuple(ChangeParams.from_dict(c) for c in d["changes"]))


def check_params(spec: TrendSpec, params: TrendParams) -> None:
    if len(params.beta) != spec.order + 1:
        raise ValueError(f"expected {spec.order + 1} polynomial coefficients, got {len(params.beta)}")
    if len(params.changes) != spec.n_changes:
        raise ValueError(f"expected {spec.n_changes} changes, got {len(params.changes)}")
    lams = [c.lam for c in params.changes]
    if lams != sorted(lams):
        raise ValueError("changes must be sorted by lambda")
    for c in params.changes:
        if not 0 < c.lam < 1:
            raise ValueError(f"lambda {c.lam} outside (0, 1)")
        if (c.eta is not None) != (spec.model_class == "III"):
            raise ValueError("eta present iff model class III")
        if (c.gamma is not None) != (spec.shape == "logistic"):
            raise ValueError("gamma present iff logistic shape")
        if c.gamma is not None and c.gamma <= 0:
            raise ValueError("gamma must be positive")


def relative_time(T: int) -> np.ndarray:
    return np.arange(1, T + 1) / T


def transition_step(s, lam):
    """1 where ``s > lam`` (strictly), else 0."""
    return (np.asarray(s, dtype=float) > lam).astype(float)


def transition_logistic(s, lam, gamma):
    z = gamma * (np.asarray(s, dtype=float) - lam)
    out = np.empty_like(z)
    hi, lo = z > _LOGISTIC_CLIP, z < -_LOGISTIC_CLIP
    mid = ~(hi | lo)
    out[hi], out[lo] = 1.0, 0.0
    out[mid] = 1.0 / (1.0 + np.exp(-z[mid]))
    return out if out.ndim else float(out)


def transition(shape: str, s, pi: Sequence[float]):
    if shape == "step":
        return transition_step(s, pi[0])
    if shape == "logistic":
        return transition_logistic(s, pi[0], pi[1])
    raise ValueError(f"no transition for shape {shape!r}")


def polynomial_columns(order: int, s: np.ndarray) -> np.ndarray:
    return np.vander(s, order + 1, increasing=True)


def change_columns(spec: TrendSpec, s: np.ndarray, pi: Sequence[float]) -> np.ndarray:
    F = transition(spec.shape, s, pi)
    return np.column_stack([F, s * F]) if spec.model_class == "III" else F[:, None]


def design(spec: TrendSpec, nonlinear: Sequence[Sequence[float]], s: np.ndarray) -> np.ndarray:
    if len(nonlinear) != spec.n_changes:
        raise ValueError(f"expected {spec.n_changes} nonlinear parameter sets, got {len(nonlinear)}")
    width = 2 if spec.shape == "logistic" else 1
    cols = [polynomial_columns(spec.order, s)]
    for pi in nonlinear:
        if len(pi) != width:
            raise ValueError(f"{spec.shape} change needs {width} nonlinear parameter(s)")
        cols.append(change_columns(spec, s, pi))
    return np.hstack(cols)


def regressor_matrix(spec: TrendSpec, nonlinear: Sequence[Sequence[float]], T: int) -> np.ndarray:
    """T x p design: ``1, s, [s^2]`` then ``F_j [, s F_j]`` per change."""
    return design(spec, nonlinear, relative_time(T))


def eval_trend(spec: TrendSpec, params: TrendParams, T: int | None = None,
               s: np.ndarray | None = None) -> np.ndarray:
    check_params(spec, params)
    if s is None:
        s = relative_time(T)
    return design(spec, params.nonlinear(), s) @ params.linear_vector()


def params_from_vector(spec: TrendSpec, coef: Sequence[float],
                       nonlinear: Sequence[Sequence[float]]) -> TrendParams:
    coef = [float(c) for c in coef]
    p0 = spec.order + 1
    beta, rest = tuple(coef[:p0]), coef[p0:]
    changes = []
    for j, pi in enumerate(nonlinear):
        chunk = rest[j * spec.k:(j + 1) * spec.k]
        changes.append(ChangeParams(
            delta=chunk[0], lam=float(pi[0]),
            eta=chunk[1] if spec.model_class == "III" else None,
            gamma=float(pi[1]) if spec.shape == "logistic" else None))
    return TrendParams(beta, tuple(changes))
