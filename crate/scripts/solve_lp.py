#!/usr/bin/env python3
"""Solve an exported episode MIP with scipy's HiGHS backend.

Reads the LP files written by `echelon solve --export-ip`, solves the exact
model, and prints the objective. With --out, writes the optimal order matrix
in the plain-text certificate format that `echelon solve --import` accepts,
so the round trip

    echelon solve --scenario const-uni --export-ip model.lp
    python scripts/solve_lp.py model.lp --out orders.txt
    echelon solve --scenario const-uni --import orders.txt

cross-checks the built-in solver against an independent MIP solver.

Only the LP subset the exporter emits is supported: Maximize / Subject To /
Bounds (`VAR <= ub`) / General / Binary / End, with `\\` comment lines.
"""

import argparse
import re
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _is_number(tok: str) -> bool:
    return bool(_NUMBER.match(tok))


def _parse_terms(tokens):
    """Yield (coefficient, variable) pairs from a sign/number/name stream."""
    sign = 1.0
    coef = None
    for tok in tokens:
        if tok == "+":
            sign, coef = 1.0, None
        elif tok == "-":
            sign, coef = -1.0, None
        elif _is_number(tok):
            coef = float(tok)
        else:
            yield (sign * (1.0 if coef is None else coef), tok)
            sign, coef = 1.0, None


def parse_lp(text: str):
    """Parse the exporter's LP subset.

    Returns (objective: dict var->coef, constraints: list of
    (terms, op, rhs), upper_bounds: dict var->float, integers: set,
    binaries: set).
    """
    objective = {}
    constraints = []
    upper = {}
    integers = set()
    binaries = set()

    section = None
    # Constraint rows can wrap; accumulate until an operator shows up.
    pending = []

    def flush_constraint(tokens):
        # tokens look like: name: term... op rhs
        try:
            op_idx = next(i for i, t in enumerate(tokens) if t in ("<=", ">=", "="))
        except StopIteration:
            return False
        label_end = 0
        if tokens and tokens[0].endswith(":"):
            label_end = 1
        terms = list(_parse_terms(tokens[label_end:op_idx]))
        rhs = float(tokens[op_idx + 1])
        constraints.append((terms, tokens[op_idx], rhs))
        return True

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        lowered = line.lower()
        if lowered in ("maximize", "minimize"):
            section = "objective"
            if lowered == "minimize":
                raise ValueError("only Maximize models are produced by the exporter")
            continue
        if lowered == "subject to":
            section = "constraints"
            continue
        if lowered == "bounds":
            section = "bounds"
            continue
        if lowered == "general":
            section = "general"
            continue
        if lowered == "binary":
            section = "binary"
            continue
        if lowered == "end":
            break

        tokens = line.split()
        if section == "objective":
            if tokens and tokens[0].endswith(":"):
                tokens = tokens[1:]
            for coef, var in _parse_terms(tokens):
                objective[var] = objective.get(var, 0.0) + coef
        elif section == "constraints":
            pending.extend(tokens)
            if any(t in ("<=", ">=", "=") for t in tokens):
                if not flush_constraint(pending):
                    raise ValueError(f"unparsable constraint: {' '.join(pending)}")
                pending = []
        elif section == "bounds":
            # Exporter emits only `VAR <= ub`.
            if len(tokens) == 3 and tokens[1] == "<=":
                upper[tokens[0]] = float(tokens[2])
            else:
                raise ValueError(f"unsupported bound line: {line}")
        elif section == "general":
            integers.update(tokens)
        elif section == "binary":
            binaries.update(tokens)

    if pending:
        raise ValueError(f"dangling constraint fragment: {' '.join(pending)}")
    return objective, constraints, upper, integers, binaries


def solve(text: str):
    objective, constraints, upper, integers, binaries = parse_lp(text)

    names = set(objective)
    for terms, _, _ in constraints:
        names.update(var for _, var in terms)
    names.update(upper)
    names.update(integers)
    names.update(binaries)
    order = sorted(names)
    index = {name: i for i, name in enumerate(order)}
    n = len(order)

    # scipy minimizes: negate the Maximize objective.
    c = np.zeros(n)
    for var, coef in objective.items():
        c[index[var]] = -coef

    rows, lo, hi = [], [], []
    for terms, op, rhs in constraints:
        row = np.zeros(n)
        for coef, var in terms:
            row[index[var]] += coef
        rows.append(row)
        if op == "<=":
            lo.append(-np.inf)
            hi.append(rhs)
        elif op == ">=":
            lo.append(rhs)
            hi.append(np.inf)
        else:
            lo.append(rhs)
            hi.append(rhs)

    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for var, bound in upper.items():
        ub[index[var]] = bound
    for var in binaries:
        ub[index[var]] = 1.0
    integrality = np.zeros(n)
    for var in integers | binaries:
        integrality[index[var]] = 1

    result = milp(
        c=c,
        constraints=LinearConstraint(np.vstack(rows), np.array(lo), np.array(hi)),
        bounds=Bounds(lb, ub),
        integrality=integrality,
    )
    if not result.success:
        raise RuntimeError(f"MIP solve failed: {result.message}")
    values = {name: result.x[index[name]] for name in order}
    return -result.fun, values


def order_matrix(values):
    """Collect O_{m}_{t} values into stage-major rows."""
    cells = {}
    for name, value in values.items():
        match = re.match(r"^O_(\d+)_(\d+)$", name)
        if match:
            cells[(int(match.group(1)), int(match.group(2)))] = int(round(value))
    if not cells:
        raise RuntimeError("model has no O_{m}_{t} variables")
    stages = 1 + max(m for m, _ in cells)
    periods = 1 + max(t for _, t in cells)  # t is 1-based
    return [[cells.get((m, t), 0) for t in range(1, periods)] for m in range(stages)]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model", help="LP file written by `echelon solve --export-ip`")
    ap.add_argument("--out", help="write the optimal order matrix here (certificate format)")
    args = ap.parse_args()

    with open(args.model) as fh:
        text = fh.read()
    objective, values = solve(text)
    print(f"objective {objective:.6g}")

    if args.out:
        matrix = order_matrix(values)
        with open(args.out, "w") as fh:
            fh.write("# optimal orders recovered from the MIP, one row per stage\n")
            for row in matrix:
                fh.write(" ".join(str(v) for v in row) + "\n")
        print(f"wrote order matrix to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
