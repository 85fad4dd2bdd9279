"""Half-duplex multiple-relay channel model.

Nodes: source 0, relays 1..N, destination N+1.  Each node in [0, N] is
either listening (L) or transmitting (T) on a resource; the destination
always listens.  A transmitting node hears only the erasure symbol PHI,
a listening node is forced to feed the silence symbol PSI into the
channel.  The kernel of a :class:`ChannelSpec` is stored per state
vector because the conditional pmf of the physical channel conditions on
the node states explicitly.

All types are immutable after validation and every operation is a pure
function, so concurrent use needs no locking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    CardinalityMismatch,
    HalfDuplexViolation,
    InvalidReuseFactor,
    MissingKernelRow,
    NormalizationError,
    OrderingMismatch,
    ScheduleNotFixed,
    SpecFormatError,
)
from .prob import ChannelBlock, ROW_TOL, Var

PSI = "PSI"  # reserved input symbol: fed to the channel while listening
PHI = "PHI"  # reserved output symbol: received while transmitting


class NodeState(str, Enum):
    LISTEN = "L"
    TRANSMIT = "T"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


L = NodeState.LISTEN
T = NodeState.TRANSMIT
STATES = (L, T)
STATE_INDEX = {L: 0, T: 1}

StateVector = tuple[NodeState, ...]


def state_vector(states: Iterable[str | NodeState]) -> StateVector:
    """Normalize an iterable like "TL" or ["T", "L"] to a StateVector."""
    out = []
    for s in states:
        if isinstance(s, NodeState):
            out.append(s)
        elif s in ("L", "T"):
            out.append(NodeState(s))
        else:
            raise SpecFormatError(f"bad node state {s!r} (want 'L' or 'T')")
    return tuple(out)


def format_states(sv: StateVector) -> str:
    return "".join(s.value for s in sv)


def enumerate_state_vectors(n_relays: int,
                            reuse_k: int | None = None) -> list[StateVector]:
    """All state vectors over nodes 0..N, optionally reuse-filtered.

    With ``reuse_k = k`` a vector is excluded when some node at level l
    transmits while another node within the k-1 preceding levels (clipped to
    [0, N]) also transmits.  ``k = 1`` leaves the enumeration unfiltered.
    """
    if n_relays < 1:
        raise SpecFormatError("need at least one relay")
    if reuse_k is not None and reuse_k < 1:
        raise InvalidReuseFactor(f"reuse factor {reuse_k} must be >= 1")
    vectors = [tuple(sv) for sv in itertools.product(STATES, repeat=n_relays + 1)]
    if reuse_k is None or reuse_k == 1:
        return vectors
    return [sv for sv in vectors if not _violates_reuse(sv, reuse_k)]


def _violates_reuse(sv: StateVector, k: int) -> bool:
    for lvl, st in enumerate(sv):
        if st is not T:
            continue
        for j in range(1, k):
            if lvl - j >= 0 and sv[lvl - j] is T:
                return True
    return False


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    """Raw description of a half-duplex multiple-relay channel.

    ``input_alphabets`` maps node 0..N to its symbol tuple (must contain
    PSI); ``output_alphabets`` maps node 1..N+1 (relay lists must contain
    PHI).  ``kernel`` maps a state vector to {input tuple: {output tuple:
    probability}} and is only defined for admissible input tuples, i.e.
    listening nodes feed PSI.
    """

    n_relays: int
    input_alphabets: Mapping[int, tuple[str, ...]]
    output_alphabets: Mapping[int, tuple[str, ...]]
    kernel: Mapping[StateVector, Mapping[tuple[str, ...], Mapping[tuple[str, ...], float]]]


@dataclass(frozen=True)
class Ordering:
    """Permutation of [1, N+1] fixing the decoding hierarchy; level l is
    served by relay ``perm[l-1]`` and the last level is the destination."""

    perm: tuple[int, ...]

    def __post_init__(self):
        n = len(self.perm)
        if sorted(self.perm) != list(range(1, n + 1)):
            raise OrderingMismatch(f"{self.perm} is not a permutation of 1..{n}")
        if self.perm[-1] != n:
            raise OrderingMismatch("an ordering must end at the destination")

    @classmethod
    def identity(cls, n_relays: int) -> "Ordering":
        return cls(tuple(range(1, n_relays + 2)))

    @property
    def n_relays(self) -> int:
        return len(self.perm) - 1

    def relay_at_level(self, level: int) -> int:
        return self.perm[level - 1]


@dataclass(frozen=True, eq=False)
class Schedule:
    """Distribution over state vectors; ``fixed`` means known to all nodes
    (a point mass, or time-sharing weights over several slots)."""

    kind: str  # "fixed" | "random"
    weights: tuple[tuple[StateVector, float], ...]

    def __init__(self, kind: str, weights):
        if kind not in ("fixed", "random"):
            raise SpecFormatError(f"schedule kind {kind!r}")
        pairs = []
        total = 0.0
        for sv, w in dict(weights).items():
            sv = state_vector(sv)
            w = float(w)
            if w < 0:
                raise NormalizationError("negative schedule weight")
            if w > 0:
                pairs.append((sv, w))
            total += w
        if abs(total - 1.0) > ROW_TOL:
            raise NormalizationError(f"schedule weights sum to {total!r}")
        if not pairs:
            raise NormalizationError("schedule support is empty")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "weights", tuple(pairs))

    @classmethod
    def fixed(cls, sv) -> "Schedule":
        return cls("fixed", {state_vector(sv): 1.0})

    @classmethod
    def fixed_mixture(cls, weights) -> "Schedule":
        return cls("fixed", weights)

    @property
    def support(self) -> tuple[StateVector, ...]:
        return tuple(sv for sv, _ in self.weights)

    def require_fixed(self):
        if self.kind != "fixed":
            raise ScheduleNotFixed("a fixed schedule is required here")

    def dense(self, n_relays: int) -> np.ndarray:
        table = np.zeros((2,) * (n_relays + 1))
        for sv, w in self.weights:
            if len(sv) != n_relays + 1:
                raise CardinalityMismatch(
                    f"state vector {format_states(sv)} has wrong length"
                )
            table[tuple(STATE_INDEX[s] for s in sv)] += w
        return table


def m_name(level: int) -> str:
    return f"M_{level}"


def x_name(level: int) -> str:
    return "X_s" if level == 0 else f"X_{level}"


def y_name(level: int, n_relays: int) -> str:
    return "Y_d" if level == n_relays + 1 else f"Y_{level}"


@dataclass(frozen=True, eq=False)
class LeveledChannel:
    """A validated channel re-indexed by decoding level for one ordering."""

    n_relays: int
    input_alphabets: tuple[tuple[str, ...], ...]   # levels 0..N
    output_alphabets: tuple[tuple[str, ...], ...]  # levels 1..N+1
    m_vars: tuple[Var, ...]
    x_vars: tuple[Var, ...]
    y_vars: tuple[Var, ...]
    block: ChannelBlock
    psi_index: tuple[int, ...]
    phi_index: tuple[int, ...]  # relays only, levels 1..N

    def input_card(self, level: int) -> int:
        return len(self.input_alphabets[level])


class ValidatedChannel:
    """Checked channel handle with a dense kernel array.

    The dense array has axes (m_0..m_N, x_0..x_N, y_1..y_{N+1}); rows for
    inadmissible input tuples (a listening node feeding anything but PSI)
    carry an arbitrary valid pmf because they are always weighted by zero
    probability downstream.
    """

    def __init__(self, spec: ChannelSpec, dense: np.ndarray,
                 report: dict):
        self.spec = spec
        self.n_relays = spec.n_relays
        self._dense = dense
        self._dense.setflags(write=False)
        self.report = report

    @property
    def state_vector_count(self) -> int:
        return 2 ** (self.n_relays + 1)

    def input_alphabet(self, node: int) -> tuple[str, ...]:
        return tuple(self.spec.input_alphabets[node])

    def output_alphabet(self, node: int) -> tuple[str, ...]:
        return tuple(self.spec.output_alphabets[node])

    def leveled(self, ordering: Ordering | None = None) -> LeveledChannel:
        n = self.n_relays
        if ordering is None:
            ordering = Ordering.identity(n)
        if ordering.n_relays != n:
            raise OrderingMismatch(
                f"ordering over {ordering.n_relays} relays applied to N={n}"
            )
        phys = [0] + [ordering.relay_at_level(l) for l in range(1, n + 1)]
        in_alpha = tuple(self.input_alphabet(p) for p in phys)
        out_alpha = tuple(
            self.output_alphabet(ordering.relay_at_level(l))
            for l in range(1, n + 1)
        ) + (self.output_alphabet(n + 1),)

        m_axis = list(phys)
        x_axis = [n + 1 + p for p in phys]
        y_axis = [2 * n + 1 + ordering.relay_at_level(l) for l in range(1, n + 1)]
        y_axis.append(3 * n + 2)
        dense = np.transpose(self._dense, axes=m_axis + x_axis + y_axis)

        m_vars = tuple(Var(m_name(l), 2) for l in range(n + 1))
        x_vars = tuple(Var(x_name(l), len(in_alpha[l])) for l in range(n + 1))
        y_vars = tuple(
            Var(y_name(l, n), len(out_alpha[l - 1])) for l in range(1, n + 2)
        )
        block = ChannelBlock(y_vars, m_vars + x_vars, dense)
        psi = tuple(a.index(PSI) for a in in_alpha)
        phi = tuple(out_alpha[l - 1].index(PHI) for l in range(1, n + 1))
        return LeveledChannel(n, in_alpha, out_alpha, m_vars, x_vars, y_vars,
                              block, psi, phi)


def _admissible_inputs(sv: StateVector, alphabets) -> list[tuple[str, ...]]:
    per_node = [
        alphabets[t] if sv[t] is T else (PSI,) for t in range(len(sv))
    ]
    return [tuple(x) for x in itertools.product(*per_node)]


def validate_channel(spec: ChannelSpec) -> ValidatedChannel:
    """Check all structural invariants of a channel and build its dense kernel.

    Raises :class:`NormalizationError` on bad row sums,
    :class:`HalfDuplexViolation` when a transmitting node's output is not a
    point mass on PHI or a row exists for a non-PSI input of a listening
    node, and :class:`MissingKernelRow` when an admissible row is absent.
    """
    n = spec.n_relays
    if n < 1:
        raise SpecFormatError("need at least one relay")
    in_alpha = []
    for t in range(n + 1):
        if t not in spec.input_alphabets:
            raise SpecFormatError(f"missing input alphabet for node {t}")
        a = tuple(spec.input_alphabets[t])
        if PSI not in a:
            raise SpecFormatError(f"input alphabet of node {t} lacks {PSI}")
        if len(set(a)) != len(a):
            raise SpecFormatError(f"duplicate symbols in input alphabet {t}")
        in_alpha.append(a)
    out_alpha = []
    for t in range(1, n + 2):
        if t not in spec.output_alphabets:
            raise SpecFormatError(f"missing output alphabet for node {t}")
        a = tuple(spec.output_alphabets[t])
        if t <= n and PHI not in a:
            raise SpecFormatError(f"output alphabet of relay {t} lacks {PHI}")
        if len(set(a)) != len(a):
            raise SpecFormatError(f"duplicate symbols in output alphabet {t}")
        out_alpha.append(a)

    kernel = {state_vector(sv): rows for sv, rows in spec.kernel.items()}
    in_index = [{s: i for i, s in enumerate(a)} for a in in_alpha]
    out_index = [{s: i for i, s in enumerate(a)} for a in out_alpha]
    in_cards = [len(a) for a in in_alpha]
    out_cards = [len(a) for a in out_alpha]

    dense = np.zeros((2,) * (n + 1) + tuple(in_cards) + tuple(out_cards))
    y_rank = len(out_cards)

    for sv in enumerate_state_vectors(n):
        rows = kernel.get(sv, {})
        admissible = set(_admissible_inputs(sv, in_alpha))
        for x in rows:
            if tuple(x) not in admissible:
                raise HalfDuplexViolation(
                    f"kernel row for state {format_states(sv)} defined at "
                    f"input {x}, but listening nodes must feed {PSI}"
                )
        m_idx = tuple(STATE_INDEX[s] for s in sv)
        for x in admissible:
            if x not in rows:
                raise MissingKernelRow(
                    f"no kernel row for state {format_states(sv)}, input {x}"
                )
            row = rows[x]
            total = 0.0
            x_idx = tuple(in_index[t][x[t]] for t in range(n + 1))
            for y, p in row.items():
                y = tuple(y)
                if len(y) != y_rank:
                    raise SpecFormatError(f"output tuple {y} has wrong length")
                p = float(p)
                if p < 0:
                    raise NormalizationError("negative kernel probability")
                try:
                    y_idx = tuple(out_index[i][y[i]] for i in range(y_rank))
                except KeyError as exc:
                    raise SpecFormatError(f"unknown output symbol {exc}") from exc
                for lvl in range(1, n + 1):
                    if sv[lvl] is T and y[lvl - 1] != PHI and p > 0.0:
                        raise HalfDuplexViolation(
                            f"state {format_states(sv)}: relay {lvl} transmits "
                            f"but P(Y_{lvl}={y[lvl-1]!r}) = {p}"
                        )
                dense[m_idx + x_idx + y_idx] += p
                total += p
            if abs(total - 1.0) > ROW_TOL:
                raise NormalizationError(
                    f"kernel row for state {format_states(sv)}, input {x} "
                    f"sums to {total!r}"
                )
        # inadmissible rows: any valid pmf works, they carry zero mass
        for x in itertools.product(*in_alpha):
            if x in admissible:
                continue
            x_idx = tuple(in_index[t][x[t]] for t in range(n + 1))
            forced = tuple(
                out_index[lvl - 1][PHI] if sv[lvl] is T else 0
                for lvl in range(1, n + 1)
            ) + (0,)
            dense[m_idx + x_idx + forced] = 1.0

    report = {
        "n_relays": n,
        "state_vectors": 2 ** (n + 1),
        "input_alphabet_sizes": {t: in_cards[t] for t in range(n + 1)},
        "output_alphabet_sizes": {t + 1: out_cards[t] for t in range(n + 1)},
    }
    return ValidatedChannel(spec, dense, report)
