"""Exact most-likely-error decoding by memoized branch and bound.

Decoding is 0/1 optimization: choose a subset of error mechanisms whose
detector sets XOR to the observed syndrome, minimizing the total log-odds
weight w_e = ln((1-p_e)/p_e).  The solver is a depth-first search on the
residual set of unsatisfied detectors: the lowest unsatisfied detector must
be covered by some incident mechanism, so the branch set is its incidence
list.  Pruning uses an admissible bound charging every unsatisfied detector
min_e w_e/|det(e)| over its incident mechanisms.  Subproblem results are
memoized in a transposition table keyed on the residual set, which makes
the search solve well-separated syndrome clusters independently (once a
cluster is cleared its residual never reappears) and lets the table pay off
across an entire batch of shots.

Circuit distance reuses the same engine: the observable is appended as one
extra parity constraint and all weights are set to 1, so the optimum is the
smallest mechanism set that flips the logical without firing any detector.

The search needs a tight incumbent to prune well.  Because physical error
rates are small, the optimal mechanism set almost always splits into tiny
connected clusters near the fired detectors, so the incumbent is built by
exact-cover dynamic programming over "columns": connected mechanism sets of
size one or two whose net symptom lies inside the fired detector set.  The
fired detectors partition into independent clusters under those columns and
each cluster is solved by a subset DP.  The incumbent is then certified (or
improved) by the branch and bound, so correctness never depends on the DP.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dem import DetectorErrorModel, ErrorMechanism

DEFAULT_TIMEOUT = 10.0  # seconds per decoded syndrome
_TABLE_CAP = 4_000_000  # memoization entries; bounds search memory

CERTIFIED = "Certified"
HEURISTIC = "HeuristicUpperBound"


class InfeasibleSyndromeError(ValueError):
    """No mechanism subset reproduces the syndrome."""


_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


class _VectorSearch:
    """Breadth-first branch and bound over numpy frontiers of residuals.

    Residual syndromes are packed into rows of uint64 words.  Each level
    expands every frontier row by the mechanisms incident to its lowest set
    bit (a canonical order: any cover contains a mechanism clearing that
    bit), prunes rows whose accumulated weight plus an admissible bound
    cannot beat the best known solution, and deduplicates residuals keeping
    the lightest path — a dynamic program over reachable residuals.  The
    result is certified optimal when the frontier exhausts without hitting
    the row cap or the deadline.
    """

    _CHUNK = 1 << 17

    def __init__(self, det_masks: list[int], weights: np.ndarray, num_bits: int):
        self.num_bits = num_bits
        self.n_words = max(1, (num_bits + 63) // 64)
        self.weights = np.asarray(weights, dtype=np.float64)
        n = len(det_masks)
        self.vmask = np.zeros((n, self.n_words), dtype=np.uint64)
        low64 = (1 << 64) - 1
        for e, mask in enumerate(det_masks):
            for w in range(self.n_words):
                self.vmask[e, w] = (mask >> (64 * w)) & low64
        incident: list[list[int]] = [[] for _ in range(num_bits)]
        for e, mask in enumerate(det_masks):
            m = mask
            while m:
                b = (m & -m).bit_length() - 1
                incident[b].append(e)
                m &= m - 1
        for lst in incident:
            lst.sort(key=lambda e: self.weights[e])
        self.incident = [np.asarray(lst, dtype=np.int64) for lst in incident]
        charge = np.full(self.n_words * 64, 1e18)
        for b in range(num_bits):
            if incident[b]:
                charge[b] = min(
                    self.weights[e] / det_masks[e].bit_count() for e in incident[b]
                )
        self.charge = charge
        finite = charge[charge < 1e17]
        self.min_charge = float(finite.min()) if len(finite) else 0.0

    def pack(self, syndrome: int) -> np.ndarray:
        row = np.zeros(self.n_words, dtype=np.uint64)
        low64 = (1 << 64) - 1
        for w in range(self.n_words):
            row[w] = (syndrome >> (64 * w)) & low64
        return row

    def _popcount(self, rows: np.ndarray) -> np.ndarray:
        return _POP8[rows.view(np.uint8)].sum(axis=1).astype(np.int64)

    def _charge_bound(self, rows: np.ndarray) -> np.ndarray:
        out = np.empty(len(rows))
        for lo in range(0, len(rows), self._CHUNK):
            chunk = rows[lo : lo + self._CHUNK]
            bits = np.unpackbits(chunk.view(np.uint8), axis=1, bitorder="little")
            out[lo : lo + self._CHUNK] = bits @ self.charge
        return out

    def _lowest_bit(self, rows: np.ndarray) -> np.ndarray:
        nz = rows != 0
        word = nz.argmax(axis=1)
        vals = rows[np.arange(len(rows)), word]
        iso = vals & (~vals + np.uint64(1))
        return word * 64 + np.log2(iso.astype(np.float64)).astype(np.int64)

    def search(
        self,
        start: np.ndarray,
        ub: float,
        deadline: float,
        cap: int,
    ) -> tuple[float, tuple[int, ...] | None, bool]:
        """Best solution strictly lighter than ``ub``; certified if exhaustive."""
        eps = 1e-9
        rows = start[None, :].copy()
        acc = np.zeros(1)
        trail: list[tuple[np.ndarray, np.ndarray]] = []
        best_w = math.inf
        best_path: tuple[int, ...] | None = None
        certified = True
        if not rows.any():
            return 0.0, (), True
        while len(rows):
            if time.monotonic() > deadline:
                certified = False
                break
            limit = min(ub, best_w)
            pivots = self._lowest_bit(rows)
            order = np.argsort(pivots, kind="stable")
            sorted_pivots = pivots[order]
            uniq, starts = np.unique(sorted_pivots, return_index=True)
            bounds_idx = np.append(starts, len(order))
            parts: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
            for u, lo, hi in zip(uniq, bounds_idx[:-1], bounds_idx[1:]):
                if time.monotonic() > deadline:
                    certified = False
                    break
                mechs = self.incident[u]
                if not len(mechs):
                    continue  # residual bit no mechanism can clear: dead end
                group = order[lo:hi]
                # expand in blocks so the pre-pruning child arrays stay small
                block = max(1, self._CHUNK // len(mechs))
                for glo in range(0, len(group), block):
                    sub = group[glo : glo + block]
                    par = np.repeat(sub, len(mechs))
                    mech = np.tile(mechs, len(sub))
                    cg = acc[par] + self.weights[mech]
                    keep = cg < limit - eps
                    par, mech, cg = par[keep], mech[keep], cg[keep]
                    if not len(par):
                        continue
                    child = rows[par] ^ self.vmask[mech]
                    pc = self._popcount(child)
                    solved = pc == 0
                    if solved.any():
                        pos = np.nonzero(solved)[0]
                        idx = pos[np.argmin(cg[pos])]
                        if cg[idx] < best_w:
                            best_w = float(cg[idx])
                            best_path = self._walk(
                                trail, int(par[idx]), int(mech[idx])
                            )
                            limit = min(ub, best_w)
                    keep = ~solved & (cg + pc * self.min_charge < limit - eps)
                    par, mech, cg, child = (
                        par[keep], mech[keep], cg[keep], child[keep]
                    )
                    if len(par):
                        keep = cg + self._charge_bound(child) < limit - eps
                        parts.append(
                            (child[keep], cg[keep], par[keep], mech[keep])
                        )
            if time.monotonic() > deadline:
                certified = False
                break
            if not parts:
                break
            child = np.concatenate([p[0] for p in parts])
            cg = np.concatenate([p[1] for p in parts])
            par = np.concatenate([p[2] for p in parts])
            mech = np.concatenate([p[3] for p in parts])
            # re-prune against the limit updated by late solutions
            limit = min(ub, best_w)
            keep = cg < limit - eps
            child, cg, par, mech = child[keep], cg[keep], par[keep], mech[keep]
            if not len(child):
                break
            # dedup residuals, keeping the lightest accumulated weight
            by_weight = np.argsort(cg, kind="stable")
            child, cg, par, mech = (
                child[by_weight],
                cg[by_weight],
                par[by_weight],
                mech[by_weight],
            )
            flat = np.ascontiguousarray(child).view(
                np.dtype((np.void, child.dtype.itemsize * child.shape[1]))
            ).ravel()
            _, first = np.unique(flat, return_index=True)
            first.sort()
            child, cg, par, mech = child[first], cg[first], par[first], mech[first]
            if len(child) > cap:
                certified = False
                top = np.argsort(cg + self._charge_bound(child), kind="stable")[:cap]
                top.sort()
                child, cg, par, mech = child[top], cg[top], par[top], mech[top]
            trail.append((par.astype(np.int32), mech.astype(np.int32)))
            rows, acc = child, cg
        return best_w, best_path, certified

    def _walk(
        self, trail: list[tuple[np.ndarray, np.ndarray]], parent: int, mech: int
    ) -> tuple[int, ...]:
        path = [mech]
        i = parent
        for par, mechs in reversed(trail):
            path.append(int(mechs[i]))
            i = int(par[i])
        return tuple(sorted(path))


@dataclass(frozen=True)
class DecodeProblem:
    dem: DetectorErrorModel
    syndrome: tuple[int, ...]  # detector bits
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if len(self.syndrome) != self.dem.num_detectors:
            raise ValueError(
                f"syndrome length {len(self.syndrome)} != "
                f"{self.dem.num_detectors} detectors"
            )


@dataclass(frozen=True)
class DecodeResult:
    observables: tuple[int, ...]
    mechanisms: tuple[int, ...]
    weight: float
    optimality: str


def mechanism_weight(p: float) -> float:
    return math.log((1.0 - p) / p)


class MLEDecoder:
    """Reusable exact decoder for one detector error model.

    ``weights`` overrides the log-odds weights (used for unit-weight
    distance computation); ``extra_observable_constraint`` appends the
    observable bit as a final detector.
    """

    def __init__(
        self,
        dem: DetectorErrorModel,
        weights: np.ndarray | None = None,
        observable_as_detector: bool = False,
    ):
        self.dem = dem
        self.num_detectors = dem.num_detectors + (
            dem.num_observables if observable_as_detector else 0
        )
        self.observable_as_detector = observable_as_detector
        if weights is None:
            weights = np.array(
                [mechanism_weight(m.probability) for m in dem.mechanisms]
            )
        self.weights = np.asarray(weights, dtype=float)
        if len(self.weights) != len(dem.mechanisms):
            raise ValueError("one weight per mechanism required")
        if (self.weights < 0).any():
            raise ValueError("weights must be non-negative (p <= 1/2)")
        self.det_masks: list[int] = []
        self.obs_masks: list[int] = []
        for m in dem.mechanisms:
            dmask = 0
            for d in m.detectors:
                dmask |= 1 << d
            omask = 0
            for o in m.observables:
                omask |= 1 << o
            if observable_as_detector:
                dmask |= omask << dem.num_detectors
            self.det_masks.append(dmask)
            self.obs_masks.append(omask)
        self.incident: list[list[int]] = [[] for _ in range(self.num_detectors)]
        for e, mask in enumerate(self.det_masks):
            m = mask
            while m:
                d = (m & -m).bit_length() - 1
                self.incident[d].append(e)
                m &= m - 1
        # admissible per-detector charge: any selected mechanism e covering a
        # detector costs w_e spread over at most |det(e)| detectors
        self.charge = [
            min(
                (
                    self.weights[e] / self.det_masks[e].bit_count()
                    for e in self.incident[d]
                ),
                default=math.inf,
            )
            for d in range(self.num_detectors)
        ]
        # packing bound ingredients: detectors that share no mechanism must be
        # covered by distinct mechanisms, each costing at least its cheapest
        # incident weight
        self._min_incident = [
            min((self.weights[e] for e in self.incident[d]), default=math.inf)
            for d in range(self.num_detectors)
        ]
        self._conflict = [0] * self.num_detectors
        for e, mask in enumerate(self.det_masks):
            m = mask
            while m:
                d = (m & -m).bit_length() - 1
                self._conflict[d] |= mask
                m &= m - 1
        self._pack_order = sorted(
            range(self.num_detectors), key=lambda d: -self._min_incident[d]
        )
        # incidents sorted cheapest-first so greedy and branching try likely
        # mechanisms early
        for d in range(self.num_detectors):
            self.incident[d].sort(key=lambda e: (self.weights[e], e))
        # transposition table: residual unsat set -> (value, chosen, exact)
        # where exact=True means value is the true optimum (chosen holds it)
        # and exact=False means value is a certified lower bound
        self._table: dict[int, tuple[float, tuple[int, ...] | None, bool]] = {}
        self._deadline = math.inf
        self._timed_out = False
        self._check_counter = 0
        # finite fallback budget: a minimal cover never repeats a mechanism
        self._weight_cap = float(self.weights.sum()) + 1.0
        self._mask_index: dict[int, int] | None = None  # det mask -> cheapest mech
        self._vector: _VectorSearch | None = None
        self._adj2: list[int] | None = None  # two-hop detector adjacency
        self._basis: dict[int, tuple[int, int]] | None = None  # GF(2) column basis

    # -- helpers ------------------------------------------------------------

    def _charge_sum(self, mask: int) -> float:
        total = 0.0
        m = mask
        while m:
            d = (m & -m).bit_length() - 1
            total += self.charge[d]
            m &= m - 1
        return total

    def _bound(self, unsat: int) -> float:
        charge_total = self._charge_sum(unsat)
        # greedy packing: detectors sharing no mechanism need distinct covers
        pack_total = 0.0
        blocked = 0
        for d in self._pack_order:
            bit = 1 << d
            if unsat & bit and not blocked & bit:
                pack_total += self._min_incident[d]
                blocked |= self._conflict[d]
        return max(charge_total, pack_total)

    def _greedy(self, syndrome: int) -> tuple[float, list[int]] | None:
        unsat = syndrome
        chosen: list[int] = []
        weight = 0.0
        used = set()
        for _ in range(4 * len(self.det_masks) + 4):
            if not unsat:
                return weight, chosen
            d = (unsat & -unsat).bit_length() - 1
            best, best_score = None, math.inf
            for e in self.incident[d]:
                if e in used:
                    continue
                cleared = (self.det_masks[e] & unsat).bit_count()
                added = (self.det_masks[e] & ~unsat).bit_count()
                score = self.weights[e] / max(cleared - added, 0.25)
                if score < best_score:
                    best, best_score = e, score
            if best is None:
                return None
            used.add(best)
            chosen.append(best)
            weight += self.weights[best]
            unsat ^= self.det_masks[best]
        return None

    # -- exact search -------------------------------------------------------

    def _expired(self) -> bool:
        if self._timed_out:
            return True
        self._check_counter += 1
        if self._check_counter >= 256:
            self._check_counter = 0
            if time.monotonic() > self._deadline:
                self._timed_out = True
        return self._timed_out

    def _solve(self, unsat: int, budget: float) -> tuple[float, tuple[int, ...] | None]:
        """Optimal cover of ``unsat`` if its weight is <= budget.

        Returns (value, chosen): chosen is the optimal mechanism tuple when
        value <= budget, otherwise None and value is a lower bound.  Results
        are memoized; exact entries are reusable at any budget, bound
        entries whenever they already exceed the asked budget.
        """
        if unsat == 0:
            return 0.0, ()
        hit = self._table.get(unsat)
        if hit is not None:
            value, chosen, exact = hit
            if exact:
                return value, (chosen if value <= budget + 1e-12 else None)
            if value > budget + 1e-12:
                return value, None
        lb = self._bound(unsat)
        if lb > budget + 1e-12:
            self._store_bound(unsat, lb)
            return lb, None
        if self._expired():
            return math.inf, None
        # pivot on the unsat detector with the fewest incident mechanisms
        d = -1
        fanout = -1
        m = unsat
        while m:
            cand = (m & -m).bit_length() - 1
            if fanout < 0 or len(self.incident[cand]) < fanout:
                d, fanout = cand, len(self.incident[cand])
            m &= m - 1
        best_val, best_set = math.inf, None
        floor = math.inf  # smallest certified lower bound among pruned branches
        complete = True
        for e in self.incident[d]:
            w = self.weights[e]
            remaining_budget = min(budget, best_val - 1e-12) - w
            sub_val, sub_set = self._solve(unsat ^ self.det_masks[e], remaining_budget)
            if self._timed_out:
                complete = False
                break
            if sub_set is not None and w + sub_val < best_val - 1e-12:
                best_val, best_set = w + sub_val, (e,) + sub_set
            elif sub_set is None:
                floor = min(floor, w + sub_val)
        if not complete:
            if best_set is not None:
                return best_val, (best_set if best_val <= budget + 1e-12 else None)
            return math.inf, None
        if best_set is not None and (floor == math.inf or best_val <= floor + 1e-12):
            # all other branches certified worse: global optimum for unsat
            if unsat in self._table or len(self._table) < _TABLE_CAP:
                self._table[unsat] = (best_val, best_set, True)
            return best_val, (best_set if best_val <= budget + 1e-12 else None)
        if best_set is not None and best_val <= budget + 1e-12:
            # every pruned branch was cut at min(budget, best_val), so none
            # can beat best_set within the budget that contains it: optimal
            if unsat in self._table or len(self._table) < _TABLE_CAP:
                self._table[unsat] = (best_val, best_set, True)
            return best_val, best_set
        # withholding the solution: report only what is certified from below.
        # best_val may exceed the budget (found through a zero-residual branch)
        # and is then an upper bound, never a valid lower bound on its own.
        value = floor if best_set is None else min(floor, best_val)
        if value == math.inf:
            # exhaustive and infeasible
            if unsat in self._table or len(self._table) < _TABLE_CAP:
                self._table[unsat] = (math.inf, None, True)
            return math.inf, None
        self._store_bound(unsat, min(value, budget))
        return value, None

    def _store_bound(self, unsat: int, lb: float) -> None:
        hit = self._table.get(unsat)
        if hit is None and len(self._table) >= _TABLE_CAP:
            return  # bounded memoization: long searches stay within memory
        if hit is None or (not hit[2] and hit[0] < lb):
            self._table[unsat] = (lb, None, False)

    # -- cluster exact-cover incumbent ----------------------------------------

    def _columns(
        self, syndrome: int, include_triples: bool = False
    ) -> list[tuple[int, float, tuple[int, ...]]]:
        """Connected mechanism sets (size 1-2) with net symptom inside ``syndrome``.

        Each column is (symptom_mask, weight, mechanisms).  Pairs are either
        two mechanisms whose out-of-syndrome detectors coincide (the overlap
        cancels, connecting them) or two fully-inside mechanisms sharing a
        fired detector (the shared detector cancels).
        """
        cols: dict[int, tuple[float, tuple[int, ...]]] = {}

        def offer(sym: int, weight: float, mechs: tuple[int, ...]) -> None:
            old = cols.get(sym)
            if old is None or weight < old[0] - 1e-12:
                cols[sym] = (weight, mechs)

        inside: list[int] = []
        touching: list[int] = []
        by_out: dict[int, list[int]] = {}
        for e, mask in enumerate(self.det_masks):
            if not mask & syndrome:
                continue
            touching.append(e)
            out = mask & ~syndrome
            if out == 0:
                offer(mask, self.weights[e], (e,))
                inside.append(e)
            else:
                by_out.setdefault(out, []).append(e)
        for group in by_out.values():
            for i, e in enumerate(group):
                for f in group[i + 1:]:
                    sym = self.det_masks[e] ^ self.det_masks[f]
                    if sym:
                        offer(sym, self.weights[e] + self.weights[f], (e, f))
        for i, e in enumerate(inside):
            for f in inside[i + 1:]:
                if self.det_masks[e] & self.det_masks[f]:
                    sym = self.det_masks[e] ^ self.det_masks[f]
                    if sym:
                        offer(sym, self.weights[e] + self.weights[f], (e, f))
        if include_triples:
            self._offer_triples(syndrome, touching, by_out, inside, offer)
        return [(sym, w, mechs) for sym, (w, mechs) in cols.items()]

    def _offer_triples(self, syndrome, touching, by_out, inside, offer) -> None:
        """Connected three-mechanism components with symptom inside the syndrome.

        Cases by out-of-syndrome parts (which must XOR to zero): two equal
        nonzero parts plus one fully-inside mechanism sharing a fired
        detector; or a chain where a third mechanism's detector set equals
        the leftover out-of-syndrome bits of a partially-overlapping pair.
        """
        if self._mask_index is None:
            self._mask_index = {}
            for e, mask in enumerate(self.det_masks):
                old = self._mask_index.get(mask)
                if old is None or self.weights[e] < self.weights[old]:
                    self._mask_index[mask] = e
        # cancelled pair + an inside mechanism attached through a fired detector
        for group in by_out.values():
            for i, e in enumerate(group):
                for f in group[i + 1:]:
                    pair_sym = self.det_masks[e] ^ self.det_masks[f]
                    pair_w = self.weights[e] + self.weights[f]
                    for g in inside:
                        if g == e or g == f:
                            continue
                        if self.det_masks[g] & pair_sym:
                            sym = pair_sym ^ self.det_masks[g]
                            if sym:
                                offer(sym, pair_w + self.weights[g], (e, f, g))
        # chain: e and f leave out-of-syndrome leftovers matched by a third
        # mechanism g living entirely on those leftover detectors
        for i, e in enumerate(touching):
            mask_e = self.det_masks[e]
            out_e = mask_e & ~syndrome
            for f in touching[i + 1:]:
                mask_f = self.det_masks[f]
                leftovers = (out_e ^ mask_f) & ~syndrome
                if not leftovers or leftovers == out_e or not mask_f & ~syndrome:
                    continue
                candidates = []
                g = self._mask_index.get(leftovers)
                if g is not None:
                    candidates.append(g)
                candidates.extend(by_out.get(leftovers, ()))
                for g in candidates:
                    if g == e or g == f:
                        continue
                    sym = mask_e ^ mask_f ^ self.det_masks[g]
                    if sym and not sym & ~syndrome:
                        offer(
                            sym,
                            self.weights[e] + self.weights[f] + self.weights[g],
                            (e, f, g),
                        )

    _DP_NODE_CAP = 40000  # memo states before the cover search gives up

    def _dp_incumbent(
        self, syndrome: int
    ) -> tuple[float, list[int], list[tuple[int, tuple[int, ...]]]] | None:
        """Near-optimal cover by exact-cover search over small connected columns.

        Returns (weight, mechanisms, columns) where each column is its
        (symptom, mechanisms) choice — the grouping is reused to split large
        syndromes into independent clusters.
        """
        if syndrome == 0:
            return 0.0, [], []
        result = self._cover(syndrome, self._columns(syndrome))
        if result is None:
            # retry with three-mechanism components in the column pool
            result = self._cover(syndrome, self._columns(syndrome, True))
        return result

    def _cover(
        self, syndrome, columns
    ) -> tuple[float, list[int], list[tuple[int, tuple[int, ...]]]] | None:
        by_low: dict[int, list[tuple[int, float, tuple[int, ...]]]] = {}
        for sym, w, mechs in columns:
            by_low.setdefault(sym & -sym, []).append((sym, w, mechs))
        for group in by_low.values():
            group.sort(key=lambda col: col[1])
        memo: dict[int, tuple[float, tuple[tuple[int, tuple[int, ...]], ...] | None]] = {}

        def cover(mask: int):
            if mask == 0:
                return 0.0, ()
            hit = memo.get(mask)
            if hit is not None:
                return hit
            if len(memo) >= self._DP_NODE_CAP:
                return math.inf, None
            best_w, best_c = math.inf, None
            for sym, w, mechs in by_low.get(mask & -mask, ()):
                if sym & ~mask or w >= best_w:
                    continue
                sub_w, sub_c = cover(mask ^ sym)
                if sub_c is not None and w + sub_w < best_w:
                    best_w, best_c = w + sub_w, ((sym, mechs),) + sub_c
            memo[mask] = (best_w, best_c)
            return best_w, best_c

        weight, chosen = cover(syndrome)
        if chosen is None:
            return None
        mechs = [e for _, col in chosen for e in col]
        # columns may rarely reuse a mechanism across disjoint symptoms; the
        # doubled mechanism cancels, invalidating the cover
        check = 0
        for e in mechs:
            check ^= self.det_masks[e]
        if check != syndrome or len(set(mechs)) != len(mechs):
            return None
        return weight, mechs, list(chosen)

    def decode(self, syndrome_bits, timeout: float = DEFAULT_TIMEOUT) -> DecodeResult:
        syndrome = 0
        for i, bit in enumerate(syndrome_bits):
            if bit:
                syndrome |= 1 << i
        hit = self._table.get(syndrome)
        if hit is not None and hit[2]:
            if hit[1] is None:
                raise InfeasibleSyndromeError("syndrome has no mechanism cover")
            return self._result(syndrome, hit[0], hit[1], CERTIFIED)

        self._deadline = time.monotonic() + timeout
        self._timed_out = False
        if len(self.det_masks) > 200:
            return self._decode_vector(syndrome, timeout)
        incumbent = self._dp_incumbent(syndrome)
        if incumbent is None:
            incumbent = self._greedy(syndrome)
        budget = incumbent[0] if incumbent is not None else self._weight_cap
        value, chosen = self._solve(syndrome, budget)
        if chosen is not None and not self._timed_out:
            return self._result(syndrome, value, chosen, CERTIFIED)
        if chosen is None and not self._timed_out:
            if incumbent is None:
                raise InfeasibleSyndromeError("syndrome has no mechanism cover")
            # the incumbent itself was optimal (search proved nothing beats it)
            return self._result(
                syndrome, incumbent[0], tuple(sorted(incumbent[1])), CERTIFIED
            )
        # timed out: fall back to the best feasible answer available
        if chosen is not None and (incumbent is None or value <= incumbent[0]):
            return self._result(syndrome, value, chosen, HEURISTIC)
        if incumbent is not None:
            return self._result(
                syndrome, incumbent[0], tuple(sorted(incumbent[1])), HEURISTIC
            )
        raise InfeasibleSyndromeError("no feasible cover found before timeout")

    _BEAM_CAP = 20_000
    _EXACT_CAP = 400_000

    def _adjacency2(self) -> list[int]:
        if self._adj2 is None:
            adj2 = []
            for d in range(self.num_detectors):
                ball = self._conflict[d]
                m = ball
                while m:
                    b = (m & -m).bit_length() - 1
                    ball |= self._conflict[b]
                    m &= m - 1
                adj2.append(ball)
            self._adj2 = adj2
        return self._adj2

    def _split_clusters(self, syndrome: int) -> list[int]:
        """Partition fired detectors into independent clusters.

        Detectors within two mechanism hops of each other may interact
        through shared error chains and stay together; farther groups are
        decoded separately.
        """
        adj2 = self._adjacency2()
        bits = []
        m = syndrome
        while m:
            bits.append((m & -m).bit_length() - 1)
            m &= m - 1
        parent = {b: b for b in bits}

        def find(b: int) -> int:
            while parent[b] != b:
                parent[b] = parent[parent[b]]
                b = parent[b]
            return b

        for i, b in enumerate(bits):
            for c in bits[i + 1:]:
                if (adj2[b] >> c) & 1:
                    parent[find(b)] = find(c)
        groups: dict[int, int] = {}
        for b in bits:
            root = find(b)
            groups[root] = groups.get(root, 0) | (1 << b)
        return list(groups.values())

    def _dual_bound(self, unsat: int) -> float:
        """Admissible dual-ascent bound for the covering relaxation."""
        used: dict[int, float] = {}
        total = 0.0
        for d in self._pack_order:
            if not (unsat >> d) & 1:
                continue
            cap = math.inf
            for e in self.incident[d]:
                cap = min(cap, self.weights[e] - used.get(e, 0.0))
            if cap == math.inf:
                return math.inf  # detector no mechanism can clear
            if cap <= 0.0:
                continue
            total += cap
            for e in self.incident[d]:
                used[e] = used.get(e, 0.0) + cap
        return max(total, self._bound(unsat))

    def _vector_single(
        self,
        syndrome: int,
        incumbent: tuple[float, tuple[int, ...]] | None,
        deadline: float,
    ) -> tuple[float, tuple[int, ...] | None, bool]:
        """Iterative-deepening probes: raise a certified lower bound until the
        incumbent is proven optimal, a better solution is found and proven, or
        the probe becomes inconclusive (row cap / deadline)."""
        vec = self._vector
        start = vec.pack(syndrome)
        best_w, best_m = incumbent if incumbent is not None else (math.inf, None)
        lb = self._dual_bound(syndrome)
        if lb == math.inf:
            return math.inf, None, True  # provably infeasible
        delta = max(2.0, 0.4 * lb)
        while time.monotonic() < deadline:
            if best_m is not None and best_w <= lb + 1e-9:
                return best_w, best_m, True
            ub = min(lb + delta, best_w, self._weight_cap)
            w, m, exhaustive = vec.search(start, ub, deadline, self._EXACT_CAP)
            if not exhaustive:
                if m is not None and w < best_w:
                    best_w, best_m = w, m
                if time.monotonic() < deadline and delta > 1.0:
                    # the row cap, not the clock, stopped the probe; a tighter
                    # bound keeps the frontier smaller
                    delta /= 2.0
                    continue
                return best_w, best_m, False
            if m is not None:
                # exhaustive probe: nothing beats the solution it found
                return w, m, True
            lb = ub
            if lb >= min(best_w, self._weight_cap) - 1e-9:
                if best_m is not None:
                    return best_w, best_m, True
                return math.inf, None, True  # exhausted all budgets: infeasible
        return best_w, best_m, False

    def _linear_basis(self) -> dict[int, tuple[int, int]]:
        """GF(2) column basis of the detector/mechanism matrix.

        Maps a pivot detector bit to (reduced detector mask, mechanism bitset
        that produces it). Mechanisms enter in increasing weight order so
        solutions lean on light mechanisms.
        """
        if self._basis is None:
            basis: dict[int, tuple[int, int]] = {}
            for e in np.argsort(self.weights):
                mask = self.det_masks[e]
                combo = 1 << int(e)
                while mask:
                    low = mask & -mask
                    hit = basis.get(low)
                    if hit is None:
                        basis[low] = (mask, combo)
                        break
                    mask ^= hit[0]
                    combo ^= hit[1]
            self._basis = basis
        return self._basis

    def _linear_cover(
        self, syndrome: int
    ) -> tuple[float, tuple[int, ...]] | None:
        """Some feasible cover from the linear basis, or None if the syndrome
        is outside the column space (provably infeasible)."""
        basis = self._linear_basis()
        combo = 0
        mask = syndrome
        while mask:
            hit = basis.get(mask & -mask)
            if hit is None:
                return None
            mask ^= hit[0]
            combo ^= hit[1]
        mechs = []
        while combo:
            mechs.append((combo & -combo).bit_length() - 1)
            combo &= combo - 1
        weight = float(sum(self.weights[e] for e in mechs))
        return weight, tuple(mechs)

    def _cluster_incumbent(
        self, cluster: int
    ) -> tuple[float, tuple[int, ...]] | None:
        covered = self._cover(cluster, self._columns(cluster))
        if covered is None:
            covered = self._cover(cluster, self._columns(cluster, True))
        if covered is None:
            return None
        return covered[0], tuple(sorted(covered[1]))

    def _refine(
        self,
        inc: tuple[float, tuple[int, ...]],
        deadline: float,
    ) -> tuple[float, tuple[int, ...]]:
        """Local improvement: re-solve each connected component of the cover
        (and merged pairs of nearby components) exactly. The component net
        symptoms partition the syndrome, so swaps stay feasible."""
        best_w, best_m = inc
        adj2 = self._adjacency2()
        improved = True
        while improved and time.monotonic() < deadline:
            improved = False
            # connected components of the current cover
            parent = {e: e for e in best_m}

            def find(e: int) -> int:
                while parent[e] != e:
                    parent[e] = parent[parent[e]]
                    e = parent[e]
                return e

            for i, e in enumerate(best_m):
                for f in best_m[i + 1:]:
                    if self.det_masks[e] & self.det_masks[f]:
                        parent[find(e)] = find(f)
            groups: dict[int, list[int]] = {}
            for e in best_m:
                groups.setdefault(find(e), []).append(e)
            comps = []
            for members in groups.values():
                target = 0
                for e in members:
                    target ^= self.det_masks[e]
                comps.append(
                    (target,
                     float(sum(self.weights[e] for e in members)),
                     tuple(sorted(members)))
                )

            def solve(target, w_old, members) -> tuple[float, tuple[int, ...]]:
                slice_end = min(deadline, time.monotonic() + 0.05)
                w, m, _ = self._vector_single(
                    target, (w_old, members), slice_end
                )
                return w, m

            for k, (target, w_old, members) in enumerate(comps):
                if not target:
                    continue
                w, m = solve(target, w_old, members)
                if w < w_old - 1e-9:
                    comps[k] = (target, w, m)
                    improved = True
            # 2-opt: merge nearby components and re-solve jointly
            balls = []
            for target, _, _ in comps:
                ball, mask = 0, target
                while mask:
                    ball |= adj2[(mask & -mask).bit_length() - 1]
                    mask &= mask - 1
                balls.append(ball)
            for i in range(len(comps)):
                for j in range(i + 1, len(comps)):
                    ti, wi, mi = comps[i]
                    tj, wj, mj = comps[j]
                    if not ti or not tj or not (balls[i] & tj):
                        continue
                    if time.monotonic() >= deadline:
                        break
                    joint = tuple(sorted(mi + mj))
                    w, m = solve(ti ^ tj, wi + wj, joint)
                    if w < wi + wj - 1e-9:
                        comps[i] = (ti ^ tj, w, m)
                        comps[j] = (0, 0.0, ())
                        improved = True
            best_w = float(sum(w for _, w, _ in comps))
            best_m = tuple(sorted(e for _, _, m in comps for e in m))
        return best_w, best_m

    def _decode_vector(self, syndrome: int, timeout: float) -> DecodeResult:
        if self._vector is None:
            self._vector = _VectorSearch(
                self.det_masks, self.weights, self.num_detectors
            )
        deadline = time.monotonic() + timeout
        clusters = sorted(self._split_clusters(syndrome), key=lambda c: c.bit_count())
        results: list[tuple[float, tuple[int, ...], bool]] = []
        for i, cluster in enumerate(clusters):
            inc = self._cluster_incumbent(cluster)
            # always leave a grace period so late clusters get a real search
            sub_deadline = max(deadline, time.monotonic() + 0.1)
            if inc is None:
                greedy = self._greedy(cluster)
                if greedy is not None:
                    inc = greedy[0], tuple(sorted(greedy[1]))
                else:
                    linear = self._linear_cover(cluster)
                    if linear is None:
                        self._table[syndrome] = (math.inf, None, True)
                        raise InfeasibleSyndromeError(
                            "syndrome has no mechanism cover"
                        )
                    inc = linear[0], tuple(sorted(linear[1]))
            if cluster.bit_count() > 8:
                half = time.monotonic() + 0.5 * max(
                    sub_deadline - time.monotonic(), 0.0
                )
                inc = self._refine(inc, half)
            w, m, certified = self._vector_single(cluster, inc, sub_deadline)
            if m is None:
                self._table[syndrome] = (math.inf, None, True)
                raise InfeasibleSyndromeError("syndrome has no mechanism cover")
            results.append((w, m, certified))
        total_w = float(sum(r[0] for r in results))
        total_m = [e for r in results for e in r[1]]
        certified = all(r[2] for r in results) and len(clusters) == 1
        check = 0
        for e in total_m:
            check ^= self.det_masks[e]
        inc = (total_w, tuple(sorted(total_m)))
        collided = check != syndrome or len(set(total_m)) != len(total_m)
        if collided:
            # per-cluster covers collided on a shared mechanism; restart from
            # a whole-syndrome cover
            certified = False
            greedy = self._greedy(syndrome) or self._linear_cover(syndrome)
            if greedy is None:
                self._table[syndrome] = (math.inf, None, True)
                raise InfeasibleSyndromeError("syndrome has no mechanism cover")
            inc = self._refine(
                (greedy[0], tuple(sorted(greedy[1]))),
                max(deadline, time.monotonic() + 0.1),
            )
            total_w, total_m = inc[0], list(inc[1])
        if not certified and (collided or syndrome.bit_count() <= 16):
            # clusters only bound the optimum from above (a long error chain
            # could couple them); certify globally with the remaining time
            total_w, m, certified = self._vector_single(
                syndrome, inc, max(deadline, time.monotonic() + 0.05)
            )
            if m is None:
                self._table[syndrome] = (math.inf, None, True)
                raise InfeasibleSyndromeError("syndrome has no mechanism cover")
            total_m = list(m)
        if certified:
            self._table[syndrome] = (total_w, tuple(sorted(total_m)), True)
        return self._result(
            syndrome, total_w, tuple(sorted(total_m)),
            CERTIFIED if certified else HEURISTIC,
        )

    def _result(
        self, syndrome: int, weight: float, mechanisms: tuple[int, ...], optimality: str
    ) -> DecodeResult:
        mechanisms = tuple(sorted(mechanisms))
        obs = 0
        check = 0
        for e in mechanisms:
            obs ^= self.obs_masks[e]
            check ^= self.det_masks[e]
        # feasibility assertion (spec invariant): exact syndrome reproduction
        assert check == syndrome, "decoder returned an infeasible mechanism set"
        return DecodeResult(self._obs_bits(obs), mechanisms, weight, optimality)

    def _obs_bits(self, obs_mask: int) -> tuple[int, ...]:
        return tuple(
            (obs_mask >> i) & 1 for i in range(self.dem.num_observables)
        )


def decode_mle(problem: DecodeProblem, decoder: MLEDecoder | None = None) -> DecodeResult:
    if decoder is None:
        decoder = MLEDecoder(problem.dem)
    return decoder.decode(problem.syndrome, timeout=problem.timeout)


def decode_batch(
    dem: DetectorErrorModel,
    detector_bits: np.ndarray,
    timeout: float = DEFAULT_TIMEOUT,
) -> tuple[np.ndarray, list[DecodeResult]]:
    """Decode many shots; returns (observable predictions, per-shot results)."""
    decoder = MLEDecoder(dem)
    results = [decoder.decode(row, timeout=timeout) for row in detector_bits]
    preds = np.array([r.observables for r in results], dtype=np.uint8)
    return preds, results


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def decode_brute(problem: DecodeProblem) -> DecodeResult:
    dem = problem.dem
    n = len(dem.mechanisms)
    if n > 24:
        raise ValueError(f"brute force limited to 24 mechanisms, got {n}")
    target = 0
    for i, bit in enumerate(problem.syndrome):
        if bit:
            target |= 1 << i
    det_masks, obs_masks, weights = [], [], []
    for m in dem.mechanisms:
        dmask = 0
        for d in m.detectors:
            dmask |= 1 << d
        omask = 0
        for o in m.observables:
            omask |= 1 << o
        det_masks.append(dmask)
        obs_masks.append(omask)
        weights.append(mechanism_weight(m.probability))
    best = None  # (weight, sorted index tuple, obs mask)
    for subset in range(1 << n):
        sym = 0
        w = 0.0
        obs = 0
        s = subset
        while s:
            e = (s & -s).bit_length() - 1
            sym ^= det_masks[e]
            obs ^= obs_masks[e]
            w += weights[e]
            s &= s - 1
        if sym != target:
            continue
        key = (w, tuple(i for i in range(n) if subset >> i & 1))
        if best is None or key[0] < best[0] - 1e-12 or (
            abs(key[0] - best[0]) <= 1e-12 and key[1] < best[1]
        ):
            best = (key[0], key[1], obs)
    if best is None:
        raise InfeasibleSyndromeError("syndrome has no mechanism cover")
    obs_bits = tuple(
        (best[2] >> i) & 1 for i in range(dem.num_observables)
    )
    return DecodeResult(obs_bits, best[1], best[0], CERTIFIED)


def coset_likelihoods(problem: DecodeProblem) -> dict[tuple[int, ...], float]:
    """Total likelihood of each observable coset (exhaustive; <= 24 mechs)."""
    dem = problem.dem
    n = len(dem.mechanisms)
    if n > 24:
        raise ValueError(f"exhaustive cosets limited to 24 mechanisms, got {n}")
    target = 0
    for i, bit in enumerate(problem.syndrome):
        if bit:
            target |= 1 << i
    probs = [m.probability for m in dem.mechanisms]
    base = math.prod(1.0 - p for p in probs) if n else 1.0
    det_masks, obs_masks = [], []
    for m in dem.mechanisms:
        dmask = 0
        for d in m.detectors:
            dmask |= 1 << d
        omask = 0
        for o in m.observables:
            omask |= 1 << o
        det_masks.append(dmask)
        obs_masks.append(omask)
    totals: dict[int, float] = {}
    for subset in range(1 << n):
        sym, obs, like = 0, 0, base
        s = subset
        while s:
            e = (s & -s).bit_length() - 1
            sym ^= det_masks[e]
            obs ^= obs_masks[e]
            like *= probs[e] / (1.0 - probs[e])
            s &= s - 1
        if sym == target:
            totals[obs] = totals.get(obs, 0.0) + like
    return {
        tuple((obs >> i) & 1 for i in range(dem.num_observables)): v
        for obs, v in totals.items()
    }


# ---------------------------------------------------------------------------
# iterative reweighting
# ---------------------------------------------------------------------------

def reweight_iterative(
    dem: DetectorErrorModel,
    calibration_detectors: np.ndarray,
    iterations: int,
    alpha: float = 0.5,
    timeout: float = DEFAULT_TIMEOUT,
) -> DetectorErrorModel:
    """Re-estimate mechanism priors from decoded calibration shots.

    Each round decodes every calibration syndrome with the current priors and
    sets p_e = (uses_e + alpha) / (shots + 2*alpha); stops early once the
    decoded logical predictions stop changing between rounds.
    """
    if not 1 <= iterations <= 10:
        raise ValueError("iterations must be in [1, 10]")
    shots = len(calibration_detectors)
    if shots == 0:
        raise ValueError("empty calibration set")
    cap = 0.5 - 1e-9
    current = dem
    prev_preds = None
    for _ in range(iterations):
        decoder = MLEDecoder(current)
        counts = np.zeros(len(current.mechanisms))
        preds = np.zeros((shots, dem.num_observables), dtype=np.uint8)
        for i, row in enumerate(calibration_detectors):
            res = decoder.decode(row, timeout=timeout)
            preds[i] = res.observables
            for e in res.mechanisms:
                counts[e] += 1
        probs = (counts + alpha) / (shots + 2 * alpha)
        current = DetectorErrorModel(
            dem.num_detectors,
            dem.num_observables,
            tuple(
                ErrorMechanism(
                    min(float(p), cap), m.detectors, m.observables, m.provenance
                )
                for p, m in zip(probs, current.mechanisms)
            ),
            silent_components=dem.silent_components,
        )
        if prev_preds is not None and np.array_equal(preds, prev_preds):
            break
        prev_preds = preds
    return current


# ---------------------------------------------------------------------------
# circuit distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistanceResult:
    distance: int
    witness: tuple[int, ...]
    certified: bool


def circuit_distance(
    dem: DetectorErrorModel,
    mode: str = "exact",
    observable: int = 0,
    timeout: float = 600.0,
) -> DistanceResult:
    """Smallest mechanism set flipping the observable with a silent syndrome.

    The observable is appended as one extra parity constraint and all
    mechanism weights are set to 1, so the unit-weight optimum of the
    augmented problem is the circuit distance.  ``mode="heuristic"`` (or an
    exact-mode timeout) returns the best incumbent as an upper bound.
    """
    if dem.num_observables <= observable:
        raise ValueError("observable index out of range")
    if mode not in ("exact", "heuristic"):
        raise ValueError(f"unknown mode {mode!r}")
    decoder = MLEDecoder(
        dem, weights=np.ones(len(dem.mechanisms)), observable_as_detector=True
    )
    syndrome = [0] * dem.num_detectors + [
        1 if i == observable else 0 for i in range(dem.num_observables)
    ]
    budget = 30.0 if mode == "heuristic" else timeout
    res = decoder.decode(syndrome, timeout=budget)
    return DistanceResult(
        distance=int(round(res.weight)),
        witness=res.mechanisms,
        certified=(res.optimality == CERTIFIED and mode == "exact"),
    )


def distance_lower_bound(
    dem: DetectorErrorModel, limit: int = 3, observable: int = 0
) -> int:
    """Certified lower bound on the circuit distance by exhaustion.

    Proves that no mechanism set of size <= ``limit`` (at most 3) flips the
    observable while leaving every detector silent, via meet-in-the-middle
    over single mechanisms and XORed pairs; returns ``limit + 1`` on
    success and the size of the smallest violating set otherwise.
    """
    if dem.num_observables <= observable:
        raise ValueError("observable index out of range")
    if not 1 <= limit <= 3:
        raise ValueError("exhaustive bound supports limits 1 to 3")
    obs_bit = dem.num_detectors
    sym = []
    for m in dem.mechanisms:
        mask = 0
        for d in m.detectors:
            mask |= 1 << d
        if observable in m.observables:
            mask |= 1 << obs_bit
        sym.append(mask)
    target = 1 << obs_bit
    if target in sym:
        return 1
    if limit >= 2:
        singles = set(sym)
        if any((target ^ s) in singles for s in sym):
            return 2
    if limit >= 3:
        n = len(sym)
        words = (obs_bit // 64) + 1
        arr = np.zeros((n, words), dtype=np.uint64)
        low64 = (1 << 64) - 1
        for e, mask in enumerate(sym):
            for w in range(words):
                arr[e, w] = (mask >> (64 * w)) & low64
        # all pairwise XORs, built in row blocks to bound memory
        blocks = []
        for lo in range(0, n, 256):
            blk = arr[lo : lo + 256]
            pairs = blk[:, None, :] ^ arr[None, lo + 1 :, :]
            # row r is mechanism lo+r, column c is mechanism lo+1+c; c >= r
            # keeps exactly the ordered pairs
            tri = np.triu_indices(len(blk), k=0, m=n - lo - 1)
            blocks.append(pairs[tri])
        allpairs = np.concatenate(blocks) if blocks else np.zeros((0, words))
        void = np.ascontiguousarray(allpairs).view(
            np.dtype((np.void, allpairs.dtype.itemsize * words))
        ).ravel()
        void.sort()
        probes = np.zeros((n, words), dtype=np.uint64)
        for w in range(words):
            probes[:, w] = np.uint64((target >> (64 * w)) & low64)
        probes ^= arr
        pv = np.ascontiguousarray(probes).view(
            np.dtype((np.void, probes.dtype.itemsize * words))
        ).ravel()
        pos = np.searchsorted(void, pv)
        pos = np.minimum(pos, len(void) - 1)
        if len(void) and (void[pos] == pv).any():
            return 3
    return limit + 1
