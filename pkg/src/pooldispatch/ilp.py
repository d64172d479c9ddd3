"""Exact solver for binary linear programs.

Branch and bound with LP-relaxation bounds (scipy/HiGHS). Optimality is
decided with exact arithmetic on the given cost vector: the LP only guides
the search. For integral cost vectors (the planner emits milli-cents) bound
pruning uses integer rounding, so equal-cost boundaries are never decided by
floating point.

Deterministic contract: fixed variable ordering, best-bound node selection
with creation-id tie-break, and among equal-optimum assignments the
lexicographically smallest 0/1 vector is returned. The last part is
implemented by per-component lexicographic refinement: independent
constraint components are solved separately, small components by direct
lexicographic enumeration, large ones by reduced-cost fixing plus a
depth-first descent at the proven optimal value.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

INT_COST_EPS = 1e-9     # objective coefficients closer than this to integers are exact
LP_TOL = 1e-6           # slack for LP-derived bounds
SMALL_COMPONENT = 12    # components up to this size are enumerated directly
LEX_ENUM_LIMIT = 16     # free-variable sets up to this size are enumerated in phase 2


class IlpError(ValueError):
    pass


class SolverBudgetError(RuntimeError):
    """Node or time budget exhausted before optimality was proven."""


@dataclass(frozen=True, slots=True)
class Constraint:
    coeffs: Dict[int, float]
    sense: str  # "<=" or "=="
    rhs: float


@dataclass(slots=True)
class BinaryProgram:
    num_vars: int
    objective: List[float]
    constraints: List[Constraint]
    branch_groups: Optional[List[List[int]]] = None
    names: Optional[List[str]] = None

    def __post_init__(self):
        if len(self.objective) != self.num_vars:
            raise IlpError("objective length does not match num_vars")
        for c in self.objective:
            if not math.isfinite(c):
                raise IlpError("objective coefficients must be finite")
        for con in self.constraints:
            if con.sense not in ("<=", "=="):
                raise IlpError(f"unsupported constraint sense {con.sense!r}")
            if not math.isfinite(con.rhs):
                raise IlpError("constraint rhs must be finite")
            for j, a in con.coeffs.items():
                if not (0 <= j < self.num_vars):
                    raise IlpError(f"constraint references undeclared variable {j}")
                if not math.isfinite(a):
                    raise IlpError("constraint coefficients must be finite")


@dataclass(frozen=True, slots=True)
class Solution:
    status: str  # "optimal" | "infeasible"
    values: Tuple[int, ...]
    objective: float

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _integral_costs(objective: Sequence[float]) -> bool:
    return all(abs(c - round(c)) <= INT_COST_EPS for c in objective)


def _exact_objective(objective: Sequence[float], values: Sequence[int], integral: bool) -> float:
    if integral:
        return float(sum(int(round(objective[j])) * values[j] for j in range(len(values))))
    return float(sum(objective[j] * values[j] for j in range(len(values))))


def _satisfies(constraints: Sequence[Constraint], values: Sequence[int]) -> bool:
    for con in constraints:
        lhs = sum(a * values[j] for j, a in con.coeffs.items())
        if con.sense == "<=":
            if lhs > con.rhs + LP_TOL:
                return False
        else:
            if abs(lhs - con.rhs) > LP_TOL:
                return False
    return True


def _components(program: BinaryProgram) -> List[List[int]]:
    """Variable groups connected through shared constraints, ascending order."""
    parent = list(range(program.num_vars))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for con in program.constraints:
        ids = sorted(con.coeffs)
        for a, b in zip(ids, ids[1:]):
            union(a, b)
    groups: Dict[int, List[int]] = {}
    for j in range(program.num_vars):
        groups.setdefault(find(j), []).append(j)
    return [groups[root] for root in sorted(groups)]


class _ComponentSolver:
    """Solves one connected component; variable ids are component-local."""

    def __init__(self, objective: List[float], constraints: List[Constraint],
                 branch_groups: List[List[int]], integral: bool,
                 node_budget: int):
        self.c = objective
        self.n = len(objective)
        self.constraints = constraints
        self.branch_groups = branch_groups
        self.integral = integral
        self.node_budget = node_budget
        self.nodes_used = 0
        self._lp_matrices = self._build_lp()

    # -- LP relaxation ----------------------------------------------------

    def _build_lp(self):
        a_ub, b_ub, a_eq, b_eq = [], [], [], []
        for con in self.constraints:
            row = np.zeros(self.n)
            for j, a in con.coeffs.items():
                row[j] = a
            if con.sense == "<=":
                a_ub.append(row)
                b_ub.append(con.rhs)
            else:
                a_eq.append(row)
                b_eq.append(con.rhs)
        return (np.array(a_ub) if a_ub else None, np.array(b_ub) if b_ub else None,
                np.array(a_eq) if a_eq else None, np.array(b_eq) if b_eq else None)

    def _lp(self, fixed: Dict[int, int]):
        """LP relaxation with some variables pinned. Returns (value, x, reduced_costs) or None."""
        a_ub, b_ub, a_eq, b_eq = self._lp_matrices
        bounds = [(float(fixed[j]), float(fixed[j])) if j in fixed else (0.0, 1.0)
                  for j in range(self.n)]
        res = linprog(self.c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                      bounds=bounds, method="highs")
        if res.status == 2:  # infeasible
            return None
        if not res.success:
            raise IlpError(f"LP relaxation failed with status {res.status}: {res.message}")
        reduced = None
        if res.lower is not None and res.upper is not None:
            reduced = np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals)
        return res.fun, np.asarray(res.x), reduced

    def _bound_excludes(self, lp_value: float, incumbent: float) -> bool:
        """True when no completion below the incumbent can exist under this node."""
        if self.integral:
            return math.ceil(lp_value - LP_TOL) >= round(incumbent)
        return lp_value >= incumbent - LP_TOL * max(1.0, abs(incumbent))

    def _bound_exceeds_optimum(self, lp_value: float, optimum: float) -> bool:
        """True when no completion can reach the proven optimal value."""
        if self.integral:
            return math.ceil(lp_value - LP_TOL) > round(optimum)
        return lp_value > optimum + LP_TOL * max(1.0, abs(optimum))

    def _charge_node(self):
        self.nodes_used += 1
        if self.nodes_used > self.node_budget:
            raise SolverBudgetError(f"node budget {self.node_budget} exhausted")

    # -- small components ---------------------------------------------------

    def solve_by_enumeration(self) -> Optional[Tuple[float, Tuple[int, ...]]]:
        best = None
        for bits in itertools.product((0, 1), repeat=self.n):
            if not _satisfies(self.constraints, bits):
                continue
            val = _exact_objective(self.c, bits, self.integral)
            if best is None or val < best[0]:
                best = (val, bits)  # first hit in lexicographic order wins ties
        return best

    # -- large components ---------------------------------------------------

    def _branch_variable(self, x: np.ndarray, fixed: Dict[int, int]) -> Optional[int]:
        frac = [j for j in range(self.n)
                if j not in fixed and LP_TOL < x[j] < 1.0 - LP_TOL]
        if not frac:
            return None
        frac_set = set(frac)
        for group in self.branch_groups:
            members = [j for j in group if j in frac_set]
            if members:
                # request-coverage branching: most valuable fractional member
                return max(members, key=lambda j: (x[j], -j))
        return frac[0]

    def _best_value(self) -> Optional[Tuple[float, Tuple[int, ...]]]:
        """Phase 1: prove the optimal value (any optimal vector)."""
        root = self._lp({})
        if root is None:
            return None
        incumbent_val: Optional[float] = None
        incumbent_vec: Optional[Tuple[int, ...]] = None
        counter = itertools.count()
        heap = [(root[0], next(counter), {}, root)]
        while heap:
            bound, _, fixed, lp = heapq.heappop(heap)
            if incumbent_val is not None and self._bound_excludes(bound, incumbent_val):
                continue
            self._charge_node()
            value, x, _ = lp
            branch_j = self._branch_variable(x, fixed)
            if branch_j is None:
                vec = tuple(fixed.get(j, int(round(x[j]))) for j in range(self.n))
                if _satisfies(self.constraints, vec):
                    val = _exact_objective(self.c, vec, self.integral)
                    if incumbent_val is None or val < incumbent_val:
                        incumbent_val, incumbent_vec = val, vec
                    continue
                # near-integral LP whose rounding broke a constraint:
                # force progress on the first unfixed variable
                unfixed = [j for j in range(self.n) if j not in fixed]
                if not unfixed:
                    continue
                branch_j = unfixed[0]
            for v in (1, 0):
                child_fixed = dict(fixed)
                child_fixed[branch_j] = v
                child_lp = self._lp(child_fixed)
                if child_lp is None:
                    continue
                if incumbent_val is not None and self._bound_excludes(child_lp[0], incumbent_val):
                    continue
                heapq.heappush(heap, (child_lp[0], next(counter), child_fixed, child_lp))
        if incumbent_val is None:
            return None
        return incumbent_val, incumbent_vec

    def _lex_refine(self, optimum: float) -> Tuple[int, ...]:
        """Phase 2: lexicographically smallest vector achieving the optimum."""
        root = self._lp({})
        assert root is not None
        z_root, x_root, reduced = root
        gap = optimum - z_root
        fixed: Dict[int, int] = {}
        if reduced is not None:
            margin = gap + LP_TOL * max(1.0, abs(optimum))
            for j in range(self.n):
                if x_root[j] < 0.5 and reduced[j] > margin:
                    fixed[j] = 0
                elif x_root[j] > 0.5 and reduced[j] < -margin:
                    fixed[j] = 1
        free = [j for j in range(self.n) if j not in fixed]
        if len(free) <= LEX_ENUM_LIMIT:
            for bits in itertools.product((0, 1), repeat=len(free)):
                vec = [0] * self.n
                for j, v in fixed.items():
                    vec[j] = v
                for j, v in zip(free, bits):
                    vec[j] = v
                if not _satisfies(self.constraints, vec):
                    continue
                val = _exact_objective(self.c, vec, self.integral)
                if self._values_equal(val, optimum):
                    return tuple(vec)
            raise IlpError("lexicographic refinement lost the optimum (fixing bug)")
        return self._lex_dfs(fixed, free, optimum)

    def _values_equal(self, a: float, b: float) -> bool:
        if self.integral:
            return round(a) == round(b)
        return abs(a - b) <= LP_TOL * max(1.0, abs(b))

    def _lex_dfs(self, fixed: Dict[int, int], free: List[int], optimum: float) -> Tuple[int, ...]:
        assignment = dict(fixed)

        def descend(idx: int) -> Optional[Tuple[int, ...]]:
            if idx == len(free):
                vec = tuple(assignment[j] for j in range(self.n))
                if _satisfies(self.constraints, vec) and self._values_equal(
                        _exact_objective(self.c, vec, self.integral), optimum):
                    return vec
                return None
            j = free[idx]
            for v in (0, 1):
                assignment[j] = v
                self._charge_node()
                lp = self._lp(assignment)
                if lp is not None and not self._bound_exceeds_optimum(lp[0], optimum):
                    found = descend(idx + 1)
                    if found is not None:
                        return found
                del assignment[j]
                if v == 0:
                    continue
            return None

        found = descend(0)
        if found is None:
            raise IlpError("lexicographic refinement lost the optimum (fixing bug)")
        return found

    def solve(self) -> Optional[Tuple[float, Tuple[int, ...]]]:
        if self.n <= SMALL_COMPONENT:
            return self.solve_by_enumeration()
        best = self._best_value()
        if best is None:
            return None
        value, _ = best
        return value, self._lex_refine(value)


def solve(program: BinaryProgram, node_budget: int = 200_000) -> Solution:
    """Solve a binary program to proven optimality.

    :param node_budget: limit on branch-and-bound nodes per component;
        exceeding it raises :class:`SolverBudgetError` (never a silent
        suboptimal answer)
    :return: optimal assignment with exact objective, or proven-infeasible
    """
    if program.num_vars == 0:
        for con in program.constraints:
            if not _satisfies([con], ()):
                return Solution("infeasible", (), 0.0)
        return Solution("optimal", (), 0.0)
    # constraints without variables are constants
    for con in program.constraints:
        if not con.coeffs:
            lhs = 0.0
            bad = lhs > con.rhs + LP_TOL if con.sense == "<=" else abs(lhs - con.rhs) > LP_TOL
            if bad:
                return Solution("infeasible", (), 0.0)

    integral = _integral_costs(program.objective)
    values = [0] * program.num_vars
    total = 0.0
    for comp in _components(program):
        local_of = {g: i for i, g in enumerate(comp)}
        objective = [program.objective[g] for g in comp]
        constraints = []
        comp_set = set(comp)
        for con in program.constraints:
            if con.coeffs and next(iter(con.coeffs)) in comp_set:
                constraints.append(Constraint({local_of[j]: a for j, a in con.coeffs.items()},
                                              con.sense, con.rhs))
        groups = []
        if program.branch_groups:
            for g in program.branch_groups:
                local = [local_of[j] for j in g if j in comp_set]
                if local:
                    groups.append(sorted(local))
        solver = _ComponentSolver(objective, constraints, groups, integral, node_budget)
        result = solver.solve()
        if result is None:
            return Solution("infeasible", (), 0.0)
        val, vec = result
        total += val
        for g, v in zip(comp, vec):
            values[g] = v
    return Solution("optimal", tuple(values), total)
