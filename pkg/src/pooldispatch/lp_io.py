"""LP-format text exchange for the optional external solver hook.

Writes/reads the CPLEX-LP subset this package emits (Minimize, Subject To,
Binaries) plus a small solution-file format:

    status optimal
    objective -123.0
    x0 1
    x1 0

Running ``python -m pooldispatch.lp_io in.lp out.sol`` solves the program
with the built-in solver, which doubles as a subprocess backend for tests
and as a template for wiring a real external solver.
"""
from __future__ import annotations

import subprocess
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .ilp import BinaryProgram, Constraint, Solution, solve


class LpFormatError(ValueError):
    pass


def _var_name(program: BinaryProgram, j: int) -> str:
    if program.names:
        return program.names[j]
    return f"x{j}"


def _format_terms(coeffs: Dict[int, float], program: BinaryProgram) -> str:
    parts: List[str] = []
    for j in sorted(coeffs):
        a = coeffs[j]
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        term = f"{mag!r} {_var_name(program, j)}"
        if not parts and sign == "+":
            parts.append(term)
        else:
            parts.append(f"{sign} {term}")
    if not parts:
        return "0 " + _var_name(program, 0)
    return " ".join(parts)


def write_lp(program: BinaryProgram, path: Path) -> None:
    lines = ["Minimize"]
    obj = {j: c for j, c in enumerate(program.objective) if c != 0}
    if obj:
        lines.append(" obj: " + _format_terms(obj, program))
    else:
        lines.append(" obj: 0 " + _var_name(program, 0) if program.num_vars else " obj:")
    lines.append("Subject To")
    for i, con in enumerate(program.constraints):
        sense = "<=" if con.sense == "<=" else "="
        lines.append(f" c{i}: {_format_terms(con.coeffs, program)} {sense} {con.rhs!r}")
    lines.append("Binaries")
    lines.append(" " + " ".join(_var_name(program, j) for j in range(program.num_vars)))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_lp(path: Path) -> BinaryProgram:
    """Parse the LP subset produced by :func:`write_lp`."""
    text = Path(path).read_text(encoding="utf-8")
    section = None
    objective_tokens: List[str] = []
    constraint_lines: List[str] = []
    binary_names: List[str] = []
    for raw in text.splitlines():
        line = raw.split("\\")[0].strip()
        if not line:
            continue
        lowered = line.lower()
        if lowered in ("minimize", "subject to", "binaries", "end", "binary"):
            section = lowered if lowered != "binary" else "binaries"
            continue
        if section == "minimize":
            objective_tokens.append(line)
        elif section == "subject to":
            constraint_lines.append(line)
        elif section == "binaries":
            binary_names.extend(line.split())
    if not binary_names:
        return BinaryProgram(0, [], [])
    index = {name: j for j, name in enumerate(binary_names)}

    def parse_terms(expr: str) -> Dict[int, float]:
        # tokens are space separated: sign tokens, coefficients, variable names
        coeffs: Dict[int, float] = {}
        sign = 1.0
        pending: Optional[float] = None
        for tok in expr.split():
            if tok == "+":
                sign = 1.0
            elif tok == "-":
                sign = -1.0
            elif tok in index:
                coeffs[index[tok]] = coeffs.get(index[tok], 0.0) + sign * (1.0 if pending is None else pending)
                pending = None
                sign = 1.0
            else:
                try:
                    value = float(tok)
                except ValueError:
                    raise LpFormatError(f"unexpected token {tok!r}") from None
                if pending is not None:
                    raise LpFormatError(f"two coefficients in a row in {expr!r}")
                pending = value
        if pending is not None:
            raise LpFormatError(f"dangling coefficient in {expr!r}")
        return coeffs

    objective = [0.0] * len(binary_names)
    obj_expr = " ".join(objective_tokens)
    if ":" in obj_expr:
        obj_expr = obj_expr.split(":", 1)[1]
    for j, a in parse_terms(obj_expr).items():
        objective[j] = a

    constraints: List[Constraint] = []
    for line in constraint_lines:
        body = line.split(":", 1)[1] if ":" in line else line
        if "<=" in body:
            lhs, rhs = body.split("<=")
            sense = "<="
        elif ">=" in body:
            raise LpFormatError(">= constraints are not part of the exchanged subset")
        elif "=" in body:
            lhs, rhs = body.split("=", 1)
            sense = "=="
        else:
            raise LpFormatError(f"constraint without relation: {line!r}")
        constraints.append(Constraint(parse_terms(lhs), sense, float(rhs.strip())))
    return BinaryProgram(len(binary_names), objective, constraints, names=list(binary_names))


def write_solution(solution: Solution, program: BinaryProgram, path: Path) -> None:
    lines = [f"status {solution.status}"]
    if solution.ok:
        lines.append(f"objective {solution.objective!r}")
        for j, v in enumerate(solution.values):
            lines.append(f"{_var_name(program, j)} {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_solution(path: Path, program: BinaryProgram) -> Solution:
    values: Dict[str, int] = {}
    status = None
    objective = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition(" ")
        if key == "status":
            status = val.strip()
        elif key == "objective":
            objective = float(val)
        else:
            try:
                values[key] = int(round(float(val)))
            except ValueError:
                raise LpFormatError(f"malformed solution line {line!r}") from None
    if status is None:
        raise LpFormatError("solution file lacks a status line")
    if status == "infeasible":
        return Solution("infeasible", (), 0.0)
    if status != "optimal":
        raise LpFormatError(f"unexpected solver status {status!r}")
    try:
        vec = tuple(values[_var_name(program, j)] for j in range(program.num_vars))
    except KeyError as exc:
        raise LpFormatError(f"solution file misses variable {exc}") from None
    if any(v not in (0, 1) for v in vec):
        raise LpFormatError("solution contains non-binary values")
    recomputed = sum(program.objective[j] * vec[j] for j in range(program.num_vars))
    if objective is not None and abs(recomputed - objective) > 1e-6 * max(1.0, abs(objective)):
        raise LpFormatError("reported objective does not match the returned assignment")
    return Solution("optimal", vec, float(recomputed))


class ExternalSolverHook:
    """Runs an external solver process over LP-format files.

    The command is a list of arguments where the placeholders ``{lp}`` and
    ``{sol}`` are replaced with the exchange file paths.
    """

    def __init__(self, command: Sequence[str]):
        self.command = list(command)

    def solve(self, program: BinaryProgram) -> Solution:
        with tempfile.TemporaryDirectory(prefix="pooldispatch_lp_") as tmp:
            lp_path = Path(tmp) / "program.lp"
            sol_path = Path(tmp) / "solution.sol"
            write_lp(program, lp_path)
            cmd = [arg.format(lp=str(lp_path), sol=str(sol_path)) for arg in self.command]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            if proc.returncode != 0:
                raise RuntimeError(f"external solver failed ({proc.returncode}): {proc.stderr.strip()}")
            if not sol_path.exists():
                raise RuntimeError("external solver produced no solution file")
            return read_solution(sol_path, program)


def solve_with_hook(program: BinaryProgram, hook: Optional[ExternalSolverHook] = None) -> Solution:
    """Solve with the external hook when configured, else the built-in solver."""
    if hook is None:
        return solve(program)
    return hook.solve(program)


def _main(argv: List[str]) -> int:
    if len(argv) != 2:
        print("usage: python -m pooldispatch.lp_io <in.lp> <out.sol>", file=sys.stderr)
        return 2
    program = read_lp(Path(argv[0]))
    solution = solve(program)
    write_solution(solution, program, Path(argv[1]))
    return 0


if __name__ == "__main__":
    raise SystemExit(_main(sys.argv[1:]))
