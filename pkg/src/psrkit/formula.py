"""Compact text form for model specifications.

A spec reads ``family(outcome ~ term + term + ...)``, for example::

    orm-logit(chol ~ age + rcs(bmi,4) + log(artdur))
    exp-surv(time_to_event ~ cd4)
    empirical(il6 ~ 1)

Families are the margin-model names; terms are bare column names,
``log(name)``, or ``rcs(name,k)`` restricted cubic splines with k knots
(3-7).  ``1`` denotes an intercept-only model and cannot be mixed with
other terms.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .data_model import Column, Dataset, DesignMatrix, Term, build_design
from .estimators import (
    ModelFit,
    fit_cumulative_link,
    fit_empirical,
    fit_exponential_survival,
    fit_linear_normal,
    fit_poisson,
)
from .exceptions import ModelSpecError
from .rank_association import MARGIN_MODELS

__all__ = [
    "ModelSpec",
    "parse_model_spec",
    "parse_term_list",
    "design_for_spec",
    "fit_spec",
]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_RCS_RE = re.compile(r"rcs\(\s*([^,()]+?)\s*,\s*(\d+)\s*\)\Z")
_LOG_RE = re.compile(r"log\(\s*([^,()]+?)\s*\)\Z")


@dataclass(frozen=True)
class ModelSpec:
    """A parsed model specification: family, outcome, and design terms."""

    family: str
    outcome: str
    terms: tuple[Term, ...]

    def describe(self) -> str:
        rhs = " + ".join(t.describe() for t in self.terms) if self.terms else "1"
        return f"{self.family}({self.outcome} ~ {rhs})"


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ModelSpecError(f"unbalanced parentheses in {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ModelSpecError(f"unbalanced parentheses in {text!r}")
    parts.append("".join(cur))
    return parts


def _split_plus(text: str) -> list[str]:
    return _split_top(text, "+")


def _parse_name(text: str, what: str) -> str:
    name = text.strip()
    if not _NAME_RE.match(name):
        raise ModelSpecError(f"invalid {what} {name!r}")
    return name


def _parse_term(text: str) -> Term | None:
    t = text.strip()
    if not t:
        raise ModelSpecError("empty term (stray '+'?)")
    if t == "1":
        return None
    m = _RCS_RE.match(t)
    if m:
        k = int(m.group(2))
        if not 3 <= k <= 7:
            raise ModelSpecError(f"rcs knot count must be 3-7, got {k} in {t!r}")
        return Term(_parse_name(m.group(1), "column name"), "rcs", k)
    m = _LOG_RE.match(t)
    if m:
        return Term(_parse_name(m.group(1), "column name"), "log")
    if "(" in t or ")" in t:
        raise ModelSpecError(
            f"unrecognized term {t!r}; terms are a column name, log(name), or rcs(name,k)"
        )
    return Term(_parse_name(t, "column name"))


def parse_model_spec(text: str) -> ModelSpec:
    """Parse ``family(outcome ~ terms)`` into a :class:`ModelSpec`."""
    s = text.strip()
    open_idx = s.find("(")
    if open_idx <= 0 or not s.endswith(")"):
        raise ModelSpecError(
            f"model spec must look like family(outcome ~ terms), got {text!r}"
        )
    family = s[:open_idx].strip()
    if family not in MARGIN_MODELS:
        raise ModelSpecError(
            f"unknown model family {family!r}; choose from {', '.join(MARGIN_MODELS)}"
        )
    inner = s[open_idx + 1 : -1]
    if inner.count("~") != 1:
        raise ModelSpecError(f"model spec needs exactly one '~', got {text!r}")
    lhs, rhs = inner.split("~")
    outcome = _parse_name(lhs, "outcome name")

    terms: list[Term] = []
    intercept_only = False
    for piece in _split_plus(rhs):
        term = _parse_term(piece)
        if term is None:
            intercept_only = True
        else:
            terms.append(term)
    if intercept_only and terms:
        raise ModelSpecError("'1' (intercept only) cannot be combined with other terms")
    if not intercept_only and not terms:
        raise ModelSpecError("model spec has an empty right-hand side")
    seen = set()
    for term in terms:
        key = term.describe()
        if key in seen:
            raise ModelSpecError(f"duplicate term {key!r}")
        seen.add(key)
    if family == "empirical" and terms:
        raise ModelSpecError("the empirical family ignores covariates; write empirical(y ~ 1)")
    return ModelSpec(family=family, outcome=outcome, terms=tuple(terms))


def parse_term_list(text: str) -> tuple[Term, ...]:
    """Parse a comma-separated covariate list like ``age,rcs(bmi,4),log(cd4)``.

    An empty string (or the literal ``1``) means no covariates.
    """
    if text is None or not text.strip():
        return ()
    terms: list[Term] = []
    seen = set()
    for piece in _split_top(text, ","):
        term = _parse_term(piece)
        if term is None:
            continue
        key = term.describe()
        if key in seen:
            raise ModelSpecError(f"duplicate term {key!r}")
        seen.add(key)
        terms.append(term)
    return tuple(terms)


def design_for_spec(spec: ModelSpec, d: Dataset) -> tuple[Column, DesignMatrix | None]:
    """Resolve the outcome column and build the design matrix, if any."""
    outcome = d[spec.outcome]
    X = build_design(d, spec.terms) if spec.terms else None
    return outcome, X


def fit_spec(spec: ModelSpec, d: Dataset) -> tuple[ModelFit, DesignMatrix | None]:
    """Fit the model a spec describes against a dataset.

    The ``linear-empirical`` family fits ordinary least squares here; its
    rank-based residual step applies only when residuals are computed.
    """
    y, X = design_for_spec(spec, d)
    fam = spec.family
    if fam == "empirical":
        return fit_empirical(y), None
    if fam in ("linear", "linear-empirical"):
        return fit_linear_normal(y, X), X
    if fam.startswith("orm-"):
        return fit_cumulative_link(y, X, fam[4:]), X
    if fam == "poisson":
        return fit_poisson(y, X), X
    if fam == "exp-surv":
        return fit_exponential_survival(y, X), X
    raise ModelSpecError(f"unknown model family {fam!r}")
