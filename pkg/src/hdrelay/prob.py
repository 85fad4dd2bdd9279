"""Dense joint pmf construction and exact information measures.

A joint distribution is an ndarray with one axis per named discrete
variable.  Joints are assembled by multiplying conditional factors (and
optionally a multi-output channel block) in topological order.  All
information quantities use base-2 logarithms, so every rate in the
package is in bits per channel use.

Tolerances are centralized here: ``ROW_TOL`` guards structural objects
(conditional rows, simplex blocks), ``MASS_TOL`` guards aggregates
(total mass of an assembled joint).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CardinalityMismatch,
    CycleError,
    NormalizationError,
    OverlapError,
    UnknownVariable,
)

ROW_TOL = 1e-12
MASS_TOL = 1e-9
CMI_CLAMP = 1e-12


@dataclass(frozen=True)
class Var:
    """A named discrete variable with a fixed alphabet size."""

    name: str
    card: int

    def __post_init__(self):
        if self.card < 1:
            raise CardinalityMismatch(f"variable {self.name!r} needs card >= 1")


def _as_table(table, shape, what: str) -> np.ndarray:
    arr = np.asarray(table, dtype=float)
    if arr.shape != tuple(shape):
        raise CardinalityMismatch(
            f"{what}: table shape {arr.shape} does not match declared {tuple(shape)}"
        )
    if np.any(arr < -ROW_TOL):
        raise NormalizationError(f"{what}: negative probability entry")
    arr = np.clip(arr, 0.0, None)
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Factor:
    """Conditional pmf p(target | given) with the target on the last axis.

    ``table`` has shape ``(*[g.card for g in given], target.card)`` and every
    conditional slice must sum to one within ``ROW_TOL``.
    """

    target: Var
    given: tuple[Var, ...]
    table: np.ndarray

    def __init__(self, target: Var, given: Iterable[Var], table):
        given = tuple(given)
        shape = [g.card for g in given] + [target.card]
        arr = _as_table(table, shape, f"factor {target.name}")
        sums = arr.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > ROW_TOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise NormalizationError(
                f"factor {target.name}: conditional rows off by up to {worst:.3e}"
            )
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "given", given)
        object.__setattr__(self, "table", arr)


@dataclass(frozen=True, eq=False)
class ChannelBlock:
    """Multi-output conditional pmf, e.g. the physical channel p(y... | x..., m...).

    ``table`` has shape ``(*given cards, *output cards)``; for every given
    configuration the mass over the joint output space must be one.
    """

    outputs: tuple[Var, ...]
    given: tuple[Var, ...]
    table: np.ndarray

    def __init__(self, outputs: Iterable[Var], given: Iterable[Var], table):
        outputs = tuple(outputs)
        given = tuple(given)
        shape = [g.card for g in given] + [o.card for o in outputs]
        arr = _as_table(table, shape, "channel block")
        sums = arr.sum(axis=tuple(range(len(given), arr.ndim)))
        if np.any(np.abs(sums - 1.0) > ROW_TOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise NormalizationError(f"channel block rows off by up to {worst:.3e}")
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "given", given)
        object.__setattr__(self, "table", arr)


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense probability table over named discrete variables."""

    variables: tuple[Var, ...]
    table: np.ndarray

    def __init__(self, variables: Iterable[Var], table):
        variables = tuple(variables)
        arr = _as_table(table, [v.card for v in variables], "joint")
        mass = float(arr.sum())
        if abs(mass - 1.0) > MASS_TOL:
            raise NormalizationError(f"joint mass {mass!r} is not 1")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise CardinalityMismatch("duplicate variable names in joint")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "table", arr)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def var(self, name: str) -> Var:
        for v in self.variables:
            if v.name == name:
                return v
        raise UnknownVariable(f"no variable named {name!r}")

    def axes_of(self, names: Iterable[str]) -> tuple[int, ...]:
        lookup = {v.name: i for i, v in enumerate(self.variables)}
        axes = []
        for n in names:
            if n not in lookup:
                raise UnknownVariable(f"no variable named {n!r}")
            axes.append(lookup[n])
        return tuple(axes)


def _multiply_in(table: np.ndarray, vars_so_far: list[Var],
                 block_table: np.ndarray, given: tuple[Var, ...],
                 targets: tuple[Var, ...]) -> np.ndarray:
    """Broadcast-multiply a conditional block into the running product."""
    pos = {v.name: i for i, v in enumerate(vars_so_far)}
    gaxes = [pos[g.name] for g in given]
    order = sorted(range(len(gaxes)), key=lambda i: gaxes[i])
    nt = len(targets)
    ft = np.transpose(block_table,
                      axes=[*order, *range(len(given), block_table.ndim)])
    shape = [1] * len(vars_so_far) + [t.card for t in targets]
    for o in order:
        shape[gaxes[o]] = given[o].card
    ft = ft.reshape(shape)
    return table.reshape(*table.shape, *([1] * nt)) * ft


def build_joint(factors: Sequence[Factor],
                channel: ChannelBlock | None = None) -> JointPmf:
    """Multiply conditional factors (and an optional channel block) into a joint.

    The inputs may be given in any order; a topological order is derived from
    the given/target dependencies.  Raises :class:`CycleError` when no such
    order exists and :class:`CardinalityMismatch` when the same variable name
    is produced twice or reused with a different cardinality.
    """
    pending: list[tuple[str, object]] = [("factor", f) for f in factors]
    if channel is not None:
        pending.append(("channel", channel))

    seen: dict[str, int] = {}

    def note(v: Var):
        if v.name in seen and seen[v.name] != v.card:
            raise CardinalityMismatch(
                f"variable {v.name!r} used with cards {seen[v.name]} and {v.card}"
            )
        seen[v.name] = v.card

    produced: set[str] = set()
    for kind, item in pending:
        targets = item.outputs if kind == "channel" else (item.target,)
        for t in targets:
            if t.name in produced:
                raise CardinalityMismatch(f"variable {t.name!r} produced twice")
            produced.add(t.name)
            note(t)
        for g in item.given:
            note(g)

    table = np.ones(())
    vars_so_far: list[Var] = []
    have: set[str] = set()
    while pending:
        for i, (kind, item) in enumerate(pending):
            if all(g.name in have for g in item.given):
                break
        else:
            missing = sorted(
                {g.name for _, it in pending for g in it.given} - have
            )
            raise CycleError(
                f"factor dependencies cannot be ordered; unresolved: {missing}"
            )
        kind, item = pending.pop(i)
        targets = item.outputs if kind == "channel" else (item.target,)
        table = _multiply_in(table, vars_so_far, item.table, item.given, targets)
        vars_so_far.extend(targets)
        have.update(t.name for t in targets)
    return JointPmf(vars_so_far, table)


def marginalize(joint: JointPmf, keep: Iterable[str]) -> JointPmf:
    """Sum out every variable not in ``keep``; variable order is preserved."""
    keep = set(keep)
    joint.axes_of(keep)  # raises UnknownVariable on bad names
    drop = tuple(i for i, v in enumerate(joint.variables) if v.name not in keep)
    kept = tuple(v for v in joint.variables if v.name in keep)
    return JointPmf(kept, joint.table.sum(axis=drop))


def _entropy_bits(table: np.ndarray) -> float:
    p = table[table > 0.0]
    return float(-np.sum(p * np.log2(p)))


def entropy(joint: JointPmf, vars: Iterable[str],
            given: Iterable[str] = ()) -> float:
    """Conditional entropy H(vars | given) in bits, with 0 log 0 = 0."""
    vs, gs = set(vars), set(given)
    if vs & gs:
        raise OverlapError(f"vars and given overlap: {sorted(vs & gs)}")
    sub = marginalize(joint, vs | gs)
    h = _entropy_bits(sub.table)
    if gs:
        h -= _entropy_bits(marginalize(sub, gs).table)
    return h


def conditional_mutual_information(joint: JointPmf, a: Iterable[str],
                                   b: Iterable[str],
                                   c: Iterable[str] = ()) -> float:
    """I(A; B | C) in bits, clamped to zero for round-off negatives.

    Raises :class:`OverlapError` if the three groups are not pairwise
    disjoint.  A value below ``-MASS_TOL`` before clamping would indicate a
    corrupt joint and raises :class:`ArithmeticError`.
    """
    A, B, C = set(a), set(b), set(c)
    for x, y, lbl in ((A, B, "A/B"), (A, C, "A/C"), (B, C, "B/C")):
        if x & y:
            raise OverlapError(f"{lbl} overlap: {sorted(x & y)}")
    sub = marginalize(joint, A | B | C)
    h_ac = _entropy_bits(marginalize(sub, A | C).table)
    h_bc = _entropy_bits(marginalize(sub, B | C).table)
    h_abc = _entropy_bits(sub.table)
    h_c = _entropy_bits(marginalize(sub, C).table) if C else 0.0
    value = h_ac + h_bc - h_abc - h_c
    if value < -MASS_TOL:
        raise ArithmeticError(f"conditional MI {value} below tolerance")
    return max(value, 0.0)


cmi = conditional_mutual_information


def uniform_factor(target: Var, given: Iterable[Var] = ()) -> Factor:
    given = tuple(given)
    shape = [g.card for g in given] + [target.card]
    return Factor(target, given, np.full(shape, 1.0 / target.card))


def point_mass_factor(target: Var, index: int,
                      given: Iterable[Var] = ()) -> Factor:
    given = tuple(given)
    shape = [g.card for g in given] + [target.card]
    table = np.zeros(shape)
    table[..., index] = 1.0
    return Factor(target, given, table)


def deterministic_factor(target: Var, given: Iterable[Var],
                         mapping: np.ndarray) -> Factor:
    """Factor for target = f(given); ``mapping`` holds target indices."""
    given = tuple(given)
    mapping = np.asarray(mapping, dtype=int)
    shape = tuple(g.card for g in given)
    if mapping.shape != shape:
        raise CardinalityMismatch(
            f"mapping shape {mapping.shape} does not match given {shape}"
        )
    if mapping.size and (mapping.min() < 0 or mapping.max() >= target.card):
        raise CardinalityMismatch(f"mapping values outside [0, {target.card})")
    table = np.zeros(shape + (target.card,))
    grid = np.indices(shape).reshape(len(shape), -1) if shape else np.zeros((0, 1), int)
    table[(*grid, mapping.ravel())] = 1.0
    return Factor(target, given, table)
