"""Slot accounting for one level of the three-phase cooperation scheme.

Phase 1 spreads each source's message over relays inside its cluster,
phase 2 runs the cluster-to-cluster MIMO transmissions, and phase 3 ships
the quantized observations to the destinations. Phases 1 and 3 run under
9-TDMA reuse. Node indices are 1-based, as in the pairing rules.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .errors import InvalidArgument
from .geometry import tdma9_slot
from .hc_planner import HierarchyPlan


def _check(n_prev, m):
    if int(n_prev) != n_prev or n_prev < 1:
        raise InvalidArgument("cluster size must be a positive integer")
    if not 1 <= m <= n_prev:
        raise InvalidArgument(f"need 1 <= m <= {n_prev}, got {m}")


def subphase_pairing(n_prev, m):
    """Source-destination pairs of each subphase.

    Entry ``i-1`` lists ``(s, ((s + i) mod n_prev) + 1)`` for ``s = 1..n_prev``.
    """
    _check(n_prev, m)
    return [[(s, (s + i) % n_prev + 1) for s in range(1, n_prev + 1)]
            for i in range(1, m + 1)]


def relay_set(n_prev, s, m):
    """Relays ``((s + i) mod n_prev) + 1`` for ``i = 1..m``, in that order."""
    _check(n_prev, m)
    if not 1 <= s <= n_prev:
        raise InvalidArgument(f"node {s} outside [1, {n_prev}]")
    return tuple((s + i) % n_prev + 1 for i in range(1, m + 1))


def tdma_assignment(nrows, ncols):
    """``{(row, col): slot}`` for every cluster of an ``nrows x ncols`` grid."""
    return {(r, c): tdma9_slot(r, c) for r in range(nrows) for c in range(ncols)}


def tdma_conflicts(assignment):
    """Pairs of distinct clusters closer than 3 (Chebyshev) sharing a slot."""
    cells = sorted(assignment)
    bad = []
    for a in range(len(cells)):
        for b in range(a + 1, len(cells)):
            (r0, c0), (r1, c1) = cells[a], cells[b]
            if max(abs(r0 - r1), abs(c0 - c1)) < 3 and assignment[cells[a]] == assignment[cells[b]]:
                bad.append((cells[a], cells[b]))
    return bad


@dataclass(frozen=True)
class PhaseSchedule:
    """Slots spent by each phase at one level, and the resulting throughput.

    With ``accounting="real"`` the counts are the fractional slot totals;
    with ``"ceil"`` every TDMA frame is rounded up to whole slots.
    ``pairings`` and ``ledger`` are only filled when requested; ``ledger``
    maps ``(source, destination)`` to the number of subblocks handled in
    each phase.
    """

    k: int
    accounting: str
    phase1: float
    phase2: float
    phase3: float
    messages: int
    pairings: tuple
    slots: dict
    ledger: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.phase1 + self.phase2 + self.phase3

    @property
    def throughput(self):
        return self.messages / self.total


def level_inputs(plan, k):
    """``(T_prev, n_prev, n_cur, m, R_k)`` of level `k` in `plan`."""
    if not isinstance(plan, HierarchyPlan):
        raise InvalidArgument("plan must be a HierarchyPlan")
    if not 1 <= k <= plan.h:
        raise InvalidArgument(f"level must lie in [1, {plan.h}]")
    return (plan.throughputs[k - 1], plan.n_seq[k - 1], plan.n_seq[k],
            plan.m_seq[k - 1], plan.rates[k - 1])


def simulate_level(k, plan, Q=None, *, accounting="real", ledger=False):
    """Count the slots of level `k` and return a :class:`PhaseSchedule`.

    ``n_k m`` messages are delivered per level-k block: every node of the
    cluster sources ``m`` subphase messages. Real accounting reproduces the
    closed-form throughput recursion term by term.
    """
    T, n_prev, n_cur, m, R = level_inputs(plan, k)
    Q = plan.Q if Q is None else Q
    if Q < 0:
        raise InvalidArgument("Q must be nonnegative")
    if accounting == "real":
        p1 = 9 * m * n_prev / T
        p2 = n_cur * m / R
        p3 = 9 * Q * m * m * n_prev / (R * T)
    elif accounting == "ceil":
        p1 = 9 * m * math.ceil(n_prev / T)
        p2 = n_cur * math.ceil(m / R)
        p3 = 9 * Q * m * math.ceil(m * n_prev / (R * T)) if Q else 0
    else:
        raise InvalidArgument(f"unknown accounting {accounting!r}")

    side = max(1, int(round(math.sqrt(plan.n / n_cur))))
    # the pairing table has m * n_prev entries, so build it only on request
    pairings, book = (), {}
    if ledger:
        pairings = tuple(tuple(p) for p in subphase_pairing(n_prev, m))
        book = _ledger(n_prev, m, pairings)
    return PhaseSchedule(k, accounting, p1, p2, p3, n_cur * m, pairings,
                         tdma_assignment(side, side), book)


def _ledger(n_prev, m, pairings):
    # subblock j of a message is handed to the j-th relay of its source,
    # sent on by that relay, then collected once at the destination
    book = {}
    for sub in pairings:
        for s, d in sub:
            held = {(j, r) for j, r in enumerate(relay_set(n_prev, s, m))}
            sent = set()
            for j, r in sorted(held):
                sent.add(j)
            got = len(sent)
            p1, p2, p3 = book.get((s, d), (0, 0, 0))
            book[(s, d)] = (p1 + len(held), p2 + len(sent), p3 + got)
    return book


def ledger_balanced(schedule):
    """Every pair handled ``m`` subblocks per subphase it appears in, in all phases."""
    m = len(schedule.pairings)
    per_pair = Counter(p for sub in schedule.pairings for p in sub)
    return all(v == (m * per_pair[key],) * 3 for key, v in schedule.ledger.items())
