"""Coefficient layout and design matrix assembly.

A :class:`DesignSpec` fixes, for each mark, the ordered list of
covariate columns (the first coefficient of every mark is an intercept)
and partitions the penalized coefficients into disjoint groups.  Raw
region covariates can be passed through transform steps (alr for
compositions, a plain log-ratio for share pairs) before entering the
design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compositional import SUM_TOLERANCE, alr_transform, multiplicative_replacement
from .errors import (
    ConfigError,
    InputError,
    MissingCovariateError,
    NonPositiveComponentError,
    SumOutOfToleranceError,
)
from .pattern import RegionSet

INTERCEPT = "intercept"


# ----------------------------------------------------------------------
# covariate transforms
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class AlrStep:
    """alr-transform a set of share columns against a reference column.

    Emits one column ``log(<c>/<reference>)`` per non-reference
    component.  ``zero_policy`` is "error" (default) or "replace"
    (multiplicative replacement with half the smallest positive share).
    """

    components: tuple
    reference: str
    zero_policy: str = "error"

    def __post_init__(self):
        if self.reference not in self.components:
            raise ConfigError(f"alr reference {self.reference!r} not among components")
        if len(self.components) < 2:
            raise ConfigError("alr needs at least two components")
        if self.zero_policy not in ("error", "replace"):
            raise ConfigError(f"unknown zero_policy {self.zero_policy!r}")

    @property
    def output_names(self) -> tuple:
        return tuple(
            f"log({c}/{self.reference})" for c in self.components if c != self.reference
        )

    def apply(self, regions: RegionSet) -> dict:
        cols = np.column_stack([regions.covariate_column(c) for c in self.components])
        ref = self.components.index(self.reference)
        out = np.empty((regions.J, len(self.components) - 1))
        for j in range(regions.J):
            row = cols[j]
            if self.zero_policy == "replace" and np.any(row == 0):
                row = multiplicative_replacement(row)
            try:
                out[j] = alr_transform(row, ref=ref)
            except (NonPositiveComponentError, SumOutOfToleranceError) as exc:
                raise type(exc)(
                    f"region {regions.ids[j]}, alr({'/'.join(self.components)}): {exc}"
                ) from None
        return dict(zip(self.output_names, out.T))


@dataclass(frozen=True)
class LogRatioStep:
    """Single log-ratio column ``log(numerator/denominator)``."""

    numerator: str
    denominator: str

    @property
    def output_names(self) -> tuple:
        return (f"log({self.numerator}/{self.denominator})",)

    def apply(self, regions: RegionSet) -> dict:
        num = regions.covariate_column(self.numerator)
        den = regions.covariate_column(self.denominator)
        if np.any(num <= 0) or np.any(den <= 0):
            j = int(np.argmax((num <= 0) | (den <= 0)))
            raise NonPositiveComponentError(
                f"region {regions.ids[j]}: log({self.numerator}/{self.denominator}) "
                "needs strictly positive shares"
            )
        return {self.output_names[0]: np.log(num / den)}


def apply_transforms(regions: RegionSet, transforms) -> dict:
    """Evaluate every transform, returning derived column name -> (J,) values."""
    derived: dict = {}
    for step in transforms:
        for name, col in step.apply(regions).items():
            if name in derived:
                raise ConfigError(f"transform output {name!r} produced twice")
            derived[name] = np.asarray(col, dtype=float)
    return derived


# ----------------------------------------------------------------------
# the spec itself
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientGroup:
    label: str
    indices: tuple  # global coefficient indices


@dataclass(frozen=True)
class DesignSpec:
    """Per-mark covariate lists plus the penalty group partition.

    ``covariates[i]`` lists the coefficient names of mark ``i + 1`` and
    always starts with ``"intercept"``.  ``groups`` partition a subset of
    the global coefficient indices ``0..p-1``; an index is penalized iff
    it belongs to a group, and intercepts never do.
    """

    marks: tuple
    covariates: tuple  # tuple of per-mark name tuples, intercept first
    groups: tuple = ()
    transforms: tuple = ()

    def __post_init__(self):
        if len(self.marks) != len(self.covariates):
            raise ConfigError("one covariate list per mark is required")
        if len(set(self.marks)) != len(self.marks):
            raise ConfigError("mark names must be unique")
        for names in self.covariates:
            if not names or names[0] != INTERCEPT:
                raise ConfigError("each mark's first coefficient must be the intercept")
            if len(set(names)) != len(names):
                raise ConfigError("duplicate covariate name within a mark")
        seen: set = set()
        for g in self.groups:
            if not g.indices:
                raise ConfigError(f"group {g.label!r} is empty")
            if seen.intersection(g.indices):
                raise ConfigError("groups must be disjoint")
            seen.update(g.indices)
        bad = seen.intersection(self.intercept_indices)
        if bad:
            raise ConfigError("intercepts cannot be penalized or grouped")
        if seen and (min(seen) < 0 or max(seen) >= self.p):
            raise ConfigError("group index out of range")

    # -- layout ----------------------------------------------------

    @property
    def M(self) -> int:
        return len(self.marks)

    @property
    def b(self) -> tuple:
        return tuple(len(names) for names in self.covariates)

    @property
    def p(self) -> int:
        return sum(self.b)

    @property
    def mark_offsets(self) -> tuple:
        out, acc = [], 0
        for bi in self.b:
            out.append(acc)
            acc += bi
        return tuple(out)

    def mark_slice(self, i: int) -> slice:
        off = self.mark_offsets[i]
        return slice(off, off + self.b[i])

    @property
    def intercept_indices(self) -> tuple:
        return tuple(self.mark_offsets)

    @property
    def penalized(self) -> np.ndarray:
        mask = np.zeros(self.p, dtype=bool)
        for g in self.groups:
            mask[list(g.indices)] = True
        return mask

    @property
    def coefficient_names(self) -> tuple:
        """(mark, name) per global coefficient index."""
        out = []
        for mark, names in zip(self.marks, self.covariates):
            out.extend((mark, name) for name in names)
        return tuple(out)

    def group_of(self) -> np.ndarray:
        """Group position per coefficient, -1 for ungrouped."""
        out = np.full(self.p, -1, dtype=int)
        for k, g in enumerate(self.groups):
            out[list(g.indices)] = k
        return out

    def split_by_mark(self, beta: np.ndarray) -> list:
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.size != self.p:
            raise InputError(f"expected a coefficient vector of length {self.p}")
        return [beta[self.mark_slice(i)] for i in range(self.M)]

    # -- constructors ------------------------------------------------

    @classmethod
    def from_groups(cls, marks, group_covariates, transforms=(), unpenalized=()):
        """Same covariates for every mark, one group per (mark, label).

        ``group_covariates`` maps a group label to its covariate names;
        ``unpenalized`` lists extra covariates outside any group.
        """
        marks = tuple(str(m) for m in marks)
        order = [INTERCEPT]
        for names in group_covariates.values():
            order.extend(names)
        order.extend(unpenalized)
        covariates = tuple(tuple(order) for _ in marks)
        groups = []
        b = len(order)
        for i, mark in enumerate(marks):
            pos = 1
            for label, names in group_covariates.items():
                idx = tuple(range(i * b + pos, i * b + pos + len(names)))
                groups.append(CoefficientGroup(f"{label}:{mark}", idx))
                pos += len(names)
        return cls(marks=marks, covariates=covariates, groups=tuple(groups),
                   transforms=tuple(transforms))

    @classmethod
    def from_config(cls, config: dict) -> "DesignSpec":
        """Build from the design file mapping (see the README for the format)."""
        if not isinstance(config, dict):
            raise ConfigError("design config must be a mapping")
        known = {"marks", "transforms", "groups", "unpenalized"}
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"unknown design config keys: {sorted(unknown)}")
        try:
            marks = [str(m) for m in config["marks"]]
        except KeyError:
            raise ConfigError("design config needs a 'marks' list") from None
        transforms = []
        for t in config.get("transforms", []) or []:
            kind = t.get("kind")
            extra = set(t) - {"kind", "components", "reference", "zero_policy",
                              "numerator", "denominator"}
            if extra:
                raise ConfigError(f"unknown transform keys: {sorted(extra)}")
            if kind == "alr":
                transforms.append(AlrStep(
                    components=tuple(t["components"]),
                    reference=str(t["reference"]),
                    zero_policy=t.get("zero_policy", "error"),
                ))
            elif kind == "logratio":
                transforms.append(LogRatioStep(
                    numerator=str(t["numerator"]),
                    denominator=str(t["denominator"]),
                ))
            else:
                raise ConfigError(f"unknown transform kind {kind!r}")
        group_cov: dict = {}
        for g in config.get("groups", []) or []:
            extra = set(g) - {"label", "covariates"}
            if extra:
                raise ConfigError(f"unknown group keys: {sorted(extra)}")
            label = str(g.get("label", f"g{len(group_cov) + 1}"))
            if label in group_cov:
                raise ConfigError(f"duplicate group label {label!r}")
            group_cov[label] = [str(c) for c in g["covariates"]]
        if not group_cov:
            raise ConfigError("design config needs at least one group")
        unpenalized = tuple(str(c) for c in config.get("unpenalized", []) or [])
        return cls.from_groups(marks, group_cov, transforms=tuple(transforms),
                               unpenalized=unpenalized)


# ----------------------------------------------------------------------
# design matrices
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class DesignMatrices:
    """Per-mark design matrices plus the log-exposure offset.

    ``offset[j] = log(nu[j])`` with ``-inf`` on zero-population regions;
    such regions stay in the model (they contribute zero expected count)
    and ``zero_population`` flags them.
    """

    spec: DesignSpec
    matrices: tuple  # per mark, (J, b_i)
    nu: np.ndarray  # (J,) exposure
    offset: np.ndarray  # (J,) log nu
    zero_population: np.ndarray  # (J,) bool
    region_ids: np.ndarray = field(default=None)


def build_design(regions: RegionSet, spec: DesignSpec,
                 exposure_scale: float = 1.0) -> DesignMatrices:
    """Resolve the spec's covariate names on a region set.

    Raw region covariates and transform outputs are both visible; the
    first column of every mark's matrix is the intercept.  Exposures are
    ``population * exposure_scale`` (the scale supports data splitting,
    where a thinned pattern keeps intensities calibrated by scaling nu).
    """
    if exposure_scale <= 0:
        raise InputError("exposure_scale must be positive")
    derived = apply_transforms(regions, spec.transforms)

    def column(name: str) -> np.ndarray:
        if name == INTERCEPT:
            return np.ones(regions.J)
        if name in derived:
            return derived[name]
        return regions.covariate_column(name)

    matrices = []
    for names in spec.covariates:
        cols = []
        for name in names:
            try:
                cols.append(column(name))
            except MissingCovariateError:
                raise MissingCovariateError(
                    f"covariate {name!r} not found among region covariates "
                    f"or transform outputs"
                ) from None
        matrices.append(np.column_stack(cols))
    nu = regions.populations * float(exposure_scale)
    zero = nu == 0
    offset = np.full(regions.J, -math.inf)
    offset[~zero] = np.log(nu[~zero])
    # re-derive the exposure from the offset so exp(offset) == nu holds
    # exactly (the pair must stay consistent to the last ulp)
    nu = np.where(zero, 0.0, np.exp(offset))
    return DesignMatrices(
        spec=spec,
        matrices=tuple(matrices),
        nu=nu,
        offset=offset,
        zero_population=zero,
        region_ids=regions.ids,
    )
