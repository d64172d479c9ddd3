import random
import sys

import numpy as np
import pytest

from pooldispatch.ilp import (BinaryProgram, Constraint, IlpError, Solution,
                              SolverBudgetError, solve)
from pooldispatch.lp_io import (ExternalSolverHook, LpFormatError, read_lp,
                                read_solution, solve_with_hook, write_lp,
                                write_solution)


def enumerate_optimum(program):
    """Exhaustive oracle: optimal value and lexicographically smallest optimum.

    Assignments are enumerated with variable 0 as the most significant bit, so
    ascending integer order is lexicographic order over the 0/1 vectors.
    """
    n = program.num_vars
    count = 1 << n
    bits = ((np.arange(count)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.float64)
    feasible = np.ones(count, dtype=bool)
    for con in program.constraints:
        row = np.zeros(n)
        for j, a in con.coeffs.items():
            row[j] = a
        lhs = bits @ row
        if con.sense == "<=":
            feasible &= lhs <= con.rhs + 1e-9
        else:
            feasible &= np.abs(lhs - con.rhs) <= 1e-9
    if not feasible.any():
        return None
    obj = bits @ np.array(program.objective, dtype=np.float64)
    obj[~feasible] = np.inf
    best = obj.min()
    ties = np.flatnonzero(obj == best)
    lex_first = ties[0]  # ascending index = lexicographic order
    vec = tuple(int(b) for b in bits[lex_first])
    return float(best), vec


def random_program(rng, max_vars=20):
    n = rng.randint(1, max_vars)
    objective = [float(rng.randint(-500, 500)) for _ in range(n)]
    constraints = []
    for _ in range(rng.randint(0, max(2, n))):
        size = rng.randint(1, min(n, 4))
        members = rng.sample(range(n), size)
        kind = rng.random()
        if kind < 0.6:
            constraints.append(Constraint({j: 1.0 for j in members}, "<=", 1.0))
        elif kind < 0.85:
            coeffs = {j: float(rng.choice([-2, -1, 1, 2, 3])) for j in members}
            constraints.append(Constraint(coeffs, "<=", float(rng.randint(-1, 4))))
        else:
            constraints.append(Constraint({j: 1.0 for j in members}, "==", 1.0))
    return BinaryProgram(n, objective, constraints)


def test_empty_program():
    sol = solve(BinaryProgram(0, [], []))
    assert sol.ok and sol.values == () and sol.objective == 0.0


def test_single_variable():
    assert solve(BinaryProgram(1, [-5.0], [])).values == (1,)
    assert solve(BinaryProgram(1, [5.0], [])).values == (0,)
    assert solve(BinaryProgram(1, [0.0], [])).values == (0,)  # lex tie-break


def test_proven_infeasible():
    program = BinaryProgram(1, [1.0], [Constraint({0: 1.0}, "==", 1.0),
                                       Constraint({0: 1.0}, "<=", 0.0)])
    assert solve(program).status == "infeasible"


def test_set_packing_matches_enumeration():
    rng = random.Random(4242)
    for _ in range(60):
        program = random_program(rng, max_vars=10)
        expected = enumerate_optimum(program)
        sol = solve(program)
        if expected is None:
            assert sol.status == "infeasible"
        else:
            assert sol.ok
            assert sol.objective == expected[0]
            assert sol.values == expected[1]


def test_larger_instances_lexicographic_and_optimal():
    rng = random.Random(99)
    for _ in range(25):
        program = random_program(rng, max_vars=18)
        expected = enumerate_optimum(program)
        sol = solve(program)
        if expected is None:
            assert sol.status == "infeasible"
        else:
            assert sol.objective == expected[0]
            assert sol.values == expected[1]


def test_determinism():
    rng = random.Random(7)
    program = random_program(rng, max_vars=15)
    first = solve(program)
    for _ in range(3):
        again = solve(program)
        assert again == first


def test_branch_groups_do_not_change_result():
    rng = random.Random(31)
    for _ in range(20):
        program = random_program(rng, max_vars=12)
        groups = [[j for j in range(program.num_vars) if j % 2 == 0]]
        grouped = BinaryProgram(program.num_vars, program.objective,
                                program.constraints, branch_groups=groups)
        assert solve(grouped) == solve(program)


def test_budget_error():
    # an odd cycle has a fractional LP root, so branching is unavoidable;
    # a starved budget must raise, never return junk
    n = 13
    objective = [-1.0] * n
    cons = [Constraint({j: 1.0, (j + 1) % n: 1.0}, "<=", 1.0) for j in range(n)]
    program = BinaryProgram(n, objective, cons)
    with pytest.raises(SolverBudgetError):
        solve(program, node_budget=1)
    sol = solve(program)
    assert sol.ok and sol.objective == -6.0


def test_lp_roundtrip(tmp_path):
    rng = random.Random(11)
    for i in range(10):
        program = random_program(rng, max_vars=12)
        path = tmp_path / f"p{i}.lp"
        write_lp(program, path)
        back = read_lp(path)
        assert back.num_vars == program.num_vars
        assert back.objective == program.objective
        assert [(sorted(c.coeffs.items()), c.sense, c.rhs) for c in back.constraints] == \
               [(sorted(c.coeffs.items()), c.sense, c.rhs) for c in program.constraints]


def test_hook_disabled_falls_back():
    program = BinaryProgram(2, [-1.0, 2.0], [Constraint({0: 1.0, 1: 1.0}, "<=", 1.0)])
    assert solve_with_hook(program, hook=None) == solve(program)


def test_external_hook_cross_check():
    hook = ExternalSolverHook([sys.executable, "-m", "pooldispatch.lp_io", "{lp}", "{sol}"])
    rng = random.Random(2024)
    for _ in range(50):
        program = random_program(rng, max_vars=12)
        builtin = solve(program)
        external = hook.solve(program)
        assert external.status == builtin.status
        if builtin.ok:
            assert external.objective == pytest.approx(builtin.objective, abs=1e-9)


def test_malformed_external_response(tmp_path):
    program = BinaryProgram(2, [1.0, 1.0], [])
    bad = tmp_path / "bad.sol"
    bad.write_text("status optimal\nx0 maybe\n")
    with pytest.raises(LpFormatError):
        read_solution(bad, program)
    bad.write_text("x0 1\n")
    with pytest.raises(LpFormatError, match="status"):
        read_solution(bad, program)
    # reported objective inconsistent with assignment
    bad.write_text("status optimal\nobjective 5.0\nx0 1\nx1 0\n")
    with pytest.raises(LpFormatError, match="objective"):
        read_solution(bad, program)
