"""Exact Gaussian elimination over the rationals."""

from fractions import Fraction


class SingularSystem(ArithmeticError):
    pass


def solve(a, b):
    """Solve ``a x = b`` exactly.

    ``a`` is a square list of rows and ``b`` a list whose entries are scalars
    or equal-length tuples (several right-hand sides at once).  Inputs are not
    modified.
    """
    n = len(a)
    multi = bool(b) and isinstance(b[0], (tuple, list))
    width = len(b[0]) if multi else 1
    m = [[Fraction(x) for x in row] + ([Fraction(y) for y in rhs] if multi else [Fraction(rhs)])
         for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise SingularSystem(f"singular matrix at column {col}")
        m[col], m[piv] = m[piv], m[col]
        prow = m[col]
        inv = 1 / prow[col]
        nz = [j for j in range(col, n + width) if prow[j]]
        for j in nz:
            prow[j] *= inv
        for r in range(n):
            if r != col:
                f = m[r][col]
                if f:
                    row = m[r]
                    for j in nz:
                        row[j] -= f * prow[j]
    if multi:
        return [tuple(row[n:]) for row in m]
    return [row[n] for row in m]
