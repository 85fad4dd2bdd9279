"""Decode-and-forward achievable rates.

Two evaluators share one distribution type:

* :func:`eval_partial_df` computes the multilevel partial DF rate, where
  the source message is split into levels 1..N+1, the relay at level l
  decodes levels [1, l] and emits support messages for each of them.
* :func:`eval_multilevel_df` computes the single-message-level rate in
  terms of the channel inputs directly.

Both support a random schedule (node states carry information; the
level-1 terms measure the states themselves) and a fixed schedule known
to all nodes (every information term is additionally conditioned on all
states).  Conditioning sets are assembled literally from the index sets
of the rate expressions; overlapping sets are deduplicated because
conditioning on a multiset equals conditioning on the set.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import optimize as opt
from .errors import (
    CardinalityMismatch,
    OrderingMismatch,
    StructureMismatch,
    TooManyRelays,
)
from .model import (
    L,
    LeveledChannel,
    Ordering,
    STATE_INDEX,
    STATES,
    T,
    ValidatedChannel,
    enumerate_state_vectors,
    format_states,
    m_name,
    x_name,
    y_name,
)
from .prob import (
    Factor,
    JointPmf,
    Var,
    build_joint,
    cmi,
    deterministic_factor,
)

MODES = ("random", "fixed")
TIE_TOL = 1e-12


def _check_mode(mode: str):
    if mode not in MODES:
        raise StructureMismatch(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class FactorSlot:
    """One conditional factor in the canonical DF factorization."""

    target: str
    given: tuple[str, ...]
    card: int


def df_layout(n_relays: int, u_cards: Sequence[int],
              v_cards: Sequence[Sequence[int]]) -> tuple[FactorSlot, ...]:
    """Canonical factor list of the DF joint for N relays.

    Order: states M_N..M_0, then relay messages V_l^k for l = N..1 and
    k = 1..l, then source messages U_s^k for k = 1..N+1.  Given-lists are
    in canonical order (own lower levels, same level from higher relays,
    states ascending), and tables must use exactly these axis orders.
    """
    n = n_relays
    if len(u_cards) != n + 1:
        raise StructureMismatch(f"need {n + 1} source level cards")
    if len(v_cards) != n or any(len(v_cards[l - 1]) != l for l in range(1, n + 1)):
        raise StructureMismatch("relay level cards must be a ragged [1..N] list")
    slots = []
    for l in range(n, -1, -1):
        slots.append(FactorSlot(m_name(l),
                                tuple(m_name(i) for i in range(l + 1, n + 1)), 2))
    for l in range(n, 0, -1):
        for k in range(1, l + 1):
            given = tuple(f"V_{l}^{m}" for m in range(1, k))
            given += tuple(f"V_{j}^{k}" for j in range(l + 1, n + 1))
            given += tuple(m_name(i) for i in range(l, n + 1))
            slots.append(FactorSlot(f"V_{l}^{k}", given, v_cards[l - 1][k - 1]))
    for k in range(1, n + 2):
        given = tuple(f"U_s^{m}" for m in range(1, k))
        given += tuple(f"V_{j}^{k}" for j in range(k, n + 1))
        given += (m_name(0),) + tuple(m_name(i) for i in range(k, n + 1))
        slots.append(FactorSlot(f"U_s^{k}", given, u_cards[k - 1]))
    return tuple(slots)


@dataclass(frozen=True, eq=False)
class DfDistribution:
    """Auxiliary-variable distribution for the DF evaluators.

    ``tables[name]`` is the conditional table of the factor with that
    target, axes in the canonical given order with the target last.
    ``encoders`` optionally maps a level to {(aux indices..., state
    letters...): input symbol}; without an entry the channel input of a
    transmitting node is the mixed-radix index of its auxiliary tuple,
    which requires the product of aux cardinalities to equal the node's
    input alphabet size.
    """

    n_relays: int
    u_cards: tuple[int, ...]
    v_cards: tuple[tuple[int, ...], ...]
    tables: Mapping[str, np.ndarray]
    encoders: Mapping[int, Mapping[tuple, str]] | None = None

    def layout(self) -> tuple[FactorSlot, ...]:
        return df_layout(self.n_relays, self.u_cards, self.v_cards)

    def card_of(self, name: str) -> int:
        for slot in self.layout():
            if slot.target == name:
                return slot.card
        raise StructureMismatch(f"no factor named {name!r}")

    def factors(self) -> tuple[Factor, ...]:
        cards = {s.target: s.card for s in self.layout()}
        out = []
        for slot in self.layout():
            if slot.target not in self.tables:
                raise StructureMismatch(f"missing table for {slot.target}")
            table = self.tables[slot.target]
            out.append(Factor(Var(slot.target, slot.card),
                              tuple(Var(g, cards[g]) for g in slot.given),
                              table))
        extra = set(self.tables) - {s.target for s in self.layout()}
        if extra:
            raise StructureMismatch(f"unexpected factor tables: {sorted(extra)}")
        return tuple(out)

    def with_tables(self, updates: Mapping[str, np.ndarray]) -> "DfDistribution":
        tables = dict(self.tables)
        for k, v in updates.items():
            if k not in tables:
                raise StructureMismatch(f"no factor named {k!r}")
            tables[k] = np.asarray(v, dtype=float)
        return replace(self, tables=tables)

    @classmethod
    def uniform(cls, n_relays: int, u_cards, v_cards,
                encoders=None) -> "DfDistribution":
        u_cards = tuple(u_cards)
        v_cards = tuple(tuple(v) for v in v_cards)
        tables = {}
        for slot in df_layout(n_relays, u_cards, v_cards):
            cards = [2 if g.startswith("M_") else None for g in slot.given]
            # resolve aux cards from the layout itself
            resolved = []
            for g, c in zip(slot.given, cards):
                if c is not None:
                    resolved.append(c)
                elif g.startswith("U_s^"):
                    resolved.append(u_cards[int(g.split("^")[1]) - 1])
                else:
                    lvl, k = _parse_v(g)
                    resolved.append(v_cards[lvl - 1][k - 1])
            shape = (*resolved, slot.card)
            tables[slot.target] = np.full(shape, 1.0 / slot.card)
        return cls(n_relays, u_cards, v_cards, tables, encoders)

    @classmethod
    def single_level(cls, n_relays: int, u_card: int, v_cards: Sequence[int],
                     encoders=None) -> "DfDistribution":
        """Uniform distribution whose levels above 1 are all singletons."""
        u = (u_card,) + (1,) * n_relays
        v = tuple((v_cards[l - 1],) + (1,) * (l - 1) for l in range(1, n_relays + 1))
        return cls.uniform(n_relays, u, v, encoders)

    def is_single_level(self) -> bool:
        if any(c != 1 for c in self.u_cards[1:]):
            return False
        return all(all(c == 1 for c in vc[1:]) for vc in self.v_cards)

    def aux_names(self, level: int) -> tuple[str, ...]:
        if level == 0:
            return tuple(f"U_s^{k}" for k in range(1, self.n_relays + 2))
        return tuple(f"V_{level}^{k}" for k in range(1, level + 1))

    def aux_cards(self, level: int) -> tuple[int, ...]:
        if level == 0:
            return self.u_cards
        return self.v_cards[level - 1]

    def schedule_table(self) -> np.ndarray:
        """Dense pmf over state vectors implied by the state factors."""
        n = self.n_relays
        table = np.ones((2,) * (n + 1))
        for l in range(n, -1, -1):
            factor = np.asarray(self.tables[m_name(l)], dtype=float)
            grid = np.zeros((2,) * (n + 1))
            for sv in itertools.product((0, 1), repeat=n + 1):
                cond = tuple(sv[i] for i in range(l + 1, n + 1))
                grid[sv] = factor[cond + (sv[l],)]
            table = table * grid
        return table

    def schedule_support(self) -> list[tuple]:
        table = self.schedule_table()
        out = []
        for sv in itertools.product((0, 1), repeat=self.n_relays + 1):
            if table[sv] > 0.0:
                out.append(tuple(STATES[i] for i in sv))
        return out


def _parse_v(name: str) -> tuple[int, int]:
    body = name[2:]
    lvl, k = body.split("^")
    return int(lvl), int(k)


def _encoder_factor(dist: DfDistribution, lev: LeveledChannel,
                    level: int) -> Factor:
    """Deterministic channel-input factor X_level = f(aux, states)."""
    n = dist.n_relays
    aux_names = dist.aux_names(level)
    aux_cards = dist.aux_cards(level)
    x_var = lev.x_vars[level]
    given = tuple(Var(a, c) for a, c in zip(aux_names, aux_cards))
    given += lev.m_vars
    alphabet = lev.input_alphabets[level]
    explicit = (dist.encoders or {}).get(level)
    if explicit is None and math.prod(aux_cards) != x_var.card:
        raise CardinalityMismatch(
            f"level {level}: aux cards {aux_cards} do not multiply to the "
            f"input alphabet size {x_var.card}; supply an explicit encoder"
        )
    sym_index = {s: i for i, s in enumerate(alphabet)}
    shape = tuple(aux_cards) + (2,) * (n + 1)
    mapping = np.zeros(shape, dtype=int)
    for aux in itertools.product(*(range(c) for c in aux_cards)):
        for m in itertools.product((0, 1), repeat=n + 1):
            if m[level] == STATE_INDEX[L]:
                val = lev.psi_index[level]
            elif explicit is not None:
                key = aux + tuple(STATES[i].value for i in m)
                if key not in explicit:
                    raise CardinalityMismatch(
                        f"encoder for level {level} misses key {key}"
                    )
                val = sym_index[explicit[key]]
            else:
                val = int(np.ravel_multi_index(aux, aux_cards)) if aux_cards else 0
            mapping[aux + m] = val
    return deterministic_factor(x_var, given, mapping)


def build_df_joint(channel: ValidatedChannel, ordering: Ordering | None,
                   dist: DfDistribution) -> JointPmf:
    """Joint over states, messages, channel inputs and outputs."""
    if dist.n_relays != channel.n_relays:
        raise StructureMismatch(
            f"distribution is for N={dist.n_relays}, channel has N={channel.n_relays}"
        )
    lev = channel.leveled(ordering)
    factors = list(dist.factors())
    for level in range(dist.n_relays + 1):
        factors.append(_encoder_factor(dist, lev, level))
    return build_joint(factors, channel=lev.block)


@dataclass(frozen=True)
class RateBreakdown:
    """Per-message-level rates with the binding level of each min.

    ``binding_level[k-1]`` is the smallest level attaining the minimum for
    message level k (ties resolved within 1e-12).  ``total`` is the exact
    sum of the components.
    """

    per_level: tuple[float, ...]
    binding_level: tuple[int, ...]
    total: float

    @classmethod
    def from_levels(cls, per_level, binding) -> "RateBreakdown":
        per_level = tuple(float(r) for r in per_level)
        return cls(per_level, tuple(binding), math.fsum(per_level))


def _v_first(l: int, n: int) -> set[str]:
    return {f"V_{j}^{i}" for i in range(1, min(l, n) + 1)
            for j in range(i, n + 1)}


def _v_between(j: int, l: int, n: int) -> set[str]:
    return {f"V_{i}^{m}" for i in range(j + 1, min(l, n) + 1)
            for m in range(1, i + 1)}


def _v_tail(l: int, n: int) -> set[str]:
    return {f"V_{jp}^{m}" for jp in range(l, n + 1) for m in range(1, l + 1)}


def _m_range(a: int, b: int) -> set[str]:
    return {m_name(i) for i in range(a, b + 1)}


def _pdf_level_value(joint: JointPmf, k: int, l: int, n: int,
                     mode: str) -> float:
    y = {y_name(l, n)}
    if mode == "random" and k == 1:
        a = {m_name(0), "U_s^1"}
        c = _v_first(l, n) | _m_range(1, n)
    else:
        a = {f"U_s^{k}"}
        c = {f"U_s^{i}" for i in range(1, k)} | _v_first(l, n) | _m_range(0, n)
    value = cmi(joint, a, y, c)
    for j in range(k, l):
        between = _v_between(j, l, n)
        tail = _v_tail(l, n)
        if mode == "random" and k == 1:
            a = {m_name(j), f"V_{j}^1"}
            c = between | tail | _m_range(j + 1, n)
        else:
            a = {f"V_{j}^{k}"}
            own = {f"V_{j}^{m}" for m in range(1, k)}
            m_set = _m_range(0, n) if mode == "fixed" else _m_range(j, n)
            c = own | between | tail | m_set
        value += cmi(joint, a, y, c)
    return value


def _argmin_levels(values: dict[int, float]) -> tuple[float, int]:
    best = min(values.values())
    level = min(l for l, v in values.items() if v <= best + TIE_TOL)
    return best, level


def _check_reuse(dist: DfDistribution, reuse_k: int | None):
    if reuse_k is None:
        return
    allowed = set(enumerate_state_vectors(dist.n_relays, reuse_k))
    bad = [sv for sv in dist.schedule_support() if sv not in allowed]
    if bad:
        raise StructureMismatch(
            "schedule support violates the reuse-1/%d constraint at states: %s"
            % (reuse_k, ", ".join(format_states(sv) for sv in bad))
        )


def eval_partial_df(channel: ValidatedChannel, ordering: Ordering | None,
                    dist: DfDistribution, mode: str = "fixed",
                    reuse_k: int | None = None) -> RateBreakdown:
    """Partial decode-and-forward rate of a given distribution.

    ``mode="random"`` lets the node states carry information (the level-1
    terms measure the states themselves); ``mode="fixed"`` conditions every
    term on all states.  The per-level rate R_k is the minimum over
    decoding levels l in [k, N+1] of the level's information terms, and the
    total is the sum over message levels.
    """
    _check_mode(mode)
    _check_reuse(dist, reuse_k)
    n = channel.n_relays
    joint = build_df_joint(channel, ordering, dist)
    rates, binding = [], []
    for k in range(1, n + 2):
        values = {l: _pdf_level_value(joint, k, l, n, mode)
                  for l in range(k, n + 2)}
        best, lvl = _argmin_levels(values)
        rates.append(best)
        binding.append(lvl)
    return RateBreakdown.from_levels(rates, binding)


def eval_multilevel_df(channel: ValidatedChannel, ordering: Ordering | None,
                       dist: DfDistribution, mode: str = "fixed",
                       reuse_k: int | None = None) -> RateBreakdown:
    """Single-message-level DF rate, expressed through the channel inputs.

    Requires a distribution whose levels above 1 are singletons.  Each
    decoding level l measures the inputs (and, with a random schedule, the
    states) of all lower levels against Y_l, conditioned on the inputs of
    the remaining levels.
    """
    _check_mode(mode)
    if not dist.is_single_level():
        raise StructureMismatch(
            "multilevel DF needs a single message level (extra levels must "
            "have cardinality 1)"
        )
    _check_reuse(dist, reuse_k)
    n = channel.n_relays
    joint = build_df_joint(channel, ordering, dist)
    values = {}
    for l in range(1, n + 2):
        y = {y_name(l, n)}
        xs_low = {x_name(i) for i in range(l)}
        xs_high = {x_name(i) for i in range(l, n + 1)}
        if mode == "random":
            a = _m_range(0, l - 1) | xs_low
            c = xs_high | _m_range(l, n)
        else:
            a = xs_low
            c = xs_high | _m_range(0, n)
        values[l] = cmi(joint, a, y, c)
    best, lvl = _argmin_levels(values)
    return RateBreakdown.from_levels([best], [lvl])


_EVALUATORS: dict[str, Callable] = {
    "partial": eval_partial_df,
    "multilevel": eval_multilevel_df,
}


def df_problem(channel: ValidatedChannel, ordering: Ordering | None,
               dist: DfDistribution, mode: str = "fixed",
               evaluator: str = "multilevel",
               free: Sequence[str] | None = None,
               reuse_k: int | None = None) -> opt.FunctionProblem:
    """Optimization problem over the free factor tables of ``dist``.

    ``free`` lists factor targets whose conditional columns become simplex
    blocks (default: every factor with a target cardinality above one).
    Schedules that violate the reuse constraint score minus infinity.
    """
    if evaluator not in _EVALUATORS:
        raise StructureMismatch(f"evaluator must be one of {sorted(_EVALUATORS)}")
    eval_fn = _EVALUATORS[evaluator]
    layout = {s.target: s for s in dist.layout()}
    if free is None:
        free = [s.target for s in dist.layout() if s.card > 1]
    for name in free:
        if name not in layout:
            raise StructureMismatch(f"no factor named {name!r}")

    blocks: list[opt.BlockSpec] = []
    index: list[tuple[str, tuple[int, ...]]] = []
    for name in free:
        slot = layout[name]
        if slot.card <= 1:
            continue
        table = np.asarray(dist.tables[name])
        for col in itertools.product(*(range(s) for s in table.shape[:-1])):
            label = f"{name}[{','.join(map(str, col))}]" if col else name
            blocks.append(opt.BlockSpec(label, slot.card))
            index.append((name, col))

    def evaluate(values: Sequence[np.ndarray]):
        updates: dict[str, np.ndarray] = {}
        for (name, col), v in zip(index, values):
            if name not in updates:
                updates[name] = np.array(dist.tables[name], dtype=float)
            updates[name][col] = v
        candidate = dist.with_tables(updates) if updates else dist
        try:
            result = eval_fn(channel, ordering, candidate, mode, reuse_k)
        except StructureMismatch:
            return opt.Evaluation(-np.inf, False, None)
        return opt.Evaluation(result.total, True, result)

    return opt.FunctionProblem(tuple(blocks), evaluate)


def best_ordering(channel: ValidatedChannel,
                  dist_builder: Callable[[Ordering], DfDistribution] | None = None,
                  evaluator: str = "multilevel", mode: str = "fixed",
                  free: Sequence[str] | None = None,
                  config: opt.OptimizerConfig | None = None,
                  reuse_k: int | None = None):
    """Exhaustive ordering search, optimizing the distribution per ordering.

    Returns ``(ordering, breakdown, params)`` with ties broken toward the
    lexicographically smallest permutation.  Capped at six relays.
    """
    n = channel.n_relays
    if n > 6:
        raise TooManyRelays(f"{n} relays exceed the factorial search cap")
    if config is None:
        config = opt.OptimizerConfig(method="coordinate", restarts=2,
                                     max_iters=40)
    if dist_builder is None:
        def dist_builder(ordering: Ordering) -> DfDistribution:
            lev = channel.leveled(ordering)
            return DfDistribution.single_level(
                n, lev.input_card(0),
                [lev.input_card(l) for l in range(1, n + 1)]
            )

    best = None
    for relays in sorted(itertools.permutations(range(1, n + 1))):
        ordering = Ordering(tuple(relays) + (n + 1,))
        problem = df_problem(channel, ordering, dist_builder(ordering),
                             mode=mode, evaluator=evaluator, free=free,
                             reuse_k=reuse_k)
        params, result, _ = opt.optimize(problem, config)
        key = (-result.total, ordering.perm)
        if best is None or key < best[0]:
            best = (key, ordering, result, params)
    _, ordering, result, params = best
    return ordering, result, params
