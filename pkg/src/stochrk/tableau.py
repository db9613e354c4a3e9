"""
Explicit Butcher tableaus and embedded pairs.

A tableau with classical ODE order q_ode, when its stages are evaluated on
the effective increment of an SDE with strong solution, gives a scheme of
strong order q_ode / 2.

Tableau files are line oriented:

    name <label>
    order <q_ode> <q_embedded|0>
    stages <s>
    c <s decimals>
    a 1
    a 2 <1 decimal>
    ...
    a s <s-1 decimals>
    b <s decimals>
    bhat <s decimals>        (optional)

Blank lines and lines starting with '#' are ignored.

Classes:
    ButcherTableau: Coefficients of an explicit Runge-Kutta method
    TableauError: Raised for parse errors and invariant violations

Functions:
    builtin_rk4: Classical fourth order method
    builtin_tableau: Load one of the tableaus shipped with the package
    resolve_tableau: Builtin name or path to a tableau file
    load_tableau: Parse tableau file contents
    serialize_tableau: Render a tableau in the file format
    validate_tableau: Check structural invariants
    validate_quadrature: Quadrature order residuals
    tableau_summary: Residual table for reporting

Dependencies:
    - numpy: Coefficient arrays
    - pandas: Residual tables
"""

import os
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .constants import Constants

BUILTIN_TABLEAUS = ('rk4', 'dopri5', 'rk87')

class TableauError(ValueError):
    """Raised when a tableau file cannot be parsed or violates an invariant."""

@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """
    Coefficients of an explicit Runge-Kutta method.

    Attributes:
        name: Label
        c: Nodes, shape (s,)
        A: Strictly lower triangular coupling matrix, shape (s, s)
        b: Weights of order q_ode, shape (s,)
        q_ode: Classical order of b
        b_hat: Optional embedded weights, shape (s,)
        q_embedded: Classical order of b_hat, 0 when absent
    """
    name: str
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    q_ode: int
    b_hat: Optional[np.ndarray] = None
    q_embedded: int = 0

    @property
    def s(self) -> int:
        return len(self.b)

    @property
    def q_sde(self) -> float:
        """Strong order of the lifted scheme."""
        return self.q_ode / 2

    @property
    def has_embedded(self) -> bool:
        return self.b_hat is not None

    def __repr__(self):
        embedded = f", embedded order {self.q_embedded}" if self.has_embedded else ""
        return f"ButcherTableau('{self.name}', stages={self.s}, order {self.q_ode}{embedded})"

def builtin_rk4() -> ButcherTableau:
    """
    Classical fourth order Runge-Kutta method.

    Returns:
        Tableau with c = (0, 1/2, 1/2, 1), A21 = A32 = 1/2, A43 = 1,
        b = (1/6, 1/3, 1/3, 1/6) and no embedded weights.
    """
    A = np.zeros((4, 4))
    A[1, 0] = 0.5
    A[2, 1] = 0.5
    A[3, 2] = 1.0
    return ButcherTableau(
        name='rk4',
        c=np.array([0.0, 0.5, 0.5, 1.0]),
        A=A,
        b=np.array([1 / 6, 1 / 3, 1 / 3, 1 / 6]),
        q_ode=4,
    )

def builtin_tableau(name: str) -> ButcherTableau:
    """
    Load a tableau shipped with the package.

    Args:
        name: One of 'rk4', 'dopri5' (Dormand-Prince 5(4)) or 'rk87'
              (Prince-Dormand 8(7))

    Returns:
        Validated tableau

    Raises:
        KeyError: If the name is not a builtin tableau
    """
    if name not in BUILTIN_TABLEAUS:
        raise KeyError(f"Unknown builtin tableau '{name}'. Available: {', '.join(BUILTIN_TABLEAUS)}")
    text = resources.files('stochrk').joinpath('tableaus', f'{name}.txt').read_text()
    return load_tableau(text)

def resolve_tableau(name_or_path: str) -> ButcherTableau:
    """
    Resolve a builtin tableau name or read a tableau file.

    Raises:
        FileNotFoundError: If the argument is neither a builtin name nor an
            existing file
        TableauError: If the file is invalid
    """
    if name_or_path in BUILTIN_TABLEAUS:
        return builtin_tableau(name_or_path)
    if not os.path.isfile(name_or_path):
        raise FileNotFoundError(f"Tableau file not found: {name_or_path}")
    with open(name_or_path, 'r') as f:
        return load_tableau(f.read())

def _parse_floats(tokens: List[str], lineno: int) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in tokens], dtype=float)
    except ValueError:
        raise TableauError(f"line {lineno}: cannot parse decimals {' '.join(tokens)}")

def _expect(lines: List[Tuple[int, List[str]]], pos: int, keyword: str) -> Tuple[int, List[str]]:
    if pos >= len(lines):
        raise TableauError(f"unexpected end of file, expected '{keyword}'")
    lineno, tokens = lines[pos]
    if tokens[0] != keyword:
        raise TableauError(f"line {lineno}: expected '{keyword}', got '{tokens[0]}'")
    return lineno, tokens[1:]

def load_tableau(text: str, validate: bool = True) -> ButcherTableau:
    """
    Parse tableau file contents.

    Args:
        text: Contents in the tableau file format
        validate: Check the structural invariants after parsing

    Returns:
        Parsed tableau

    Raises:
        TableauError: With the line number for parse errors, or naming the
            failed condition and its residual for invariant violations
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped and not stripped.startswith('#'):
            lines.append((lineno, stripped.split()))

    lineno, rest = _expect(lines, 0, Constants.TAB_NAME)
    if len(rest) != 1:
        raise TableauError(f"line {lineno}: expected a single name")
    name = rest[0]

    lineno, rest = _expect(lines, 1, Constants.TAB_ORDER)
    try:
        q_ode, q_embedded = (int(tok) for tok in rest)
    except ValueError:
        raise TableauError(f"line {lineno}: expected 'order <q_ode> <q_embedded|0>'")

    lineno, rest = _expect(lines, 2, Constants.TAB_STAGES)
    try:
        (s,) = (int(tok) for tok in rest)
    except ValueError:
        raise TableauError(f"line {lineno}: expected 'stages <s>'")
    if s < 1:
        raise TableauError(f"line {lineno}: stage count must be positive, got {s}")

    lineno, rest = _expect(lines, 3, Constants.TAB_NODES)
    c = _parse_floats(rest, lineno)
    if len(c) != s:
        raise TableauError(f"line {lineno}: expected {s} nodes, got {len(c)}")

    A = np.zeros((s, s))
    for i in range(s):
        lineno, rest = _expect(lines, 4 + i, Constants.TAB_ROW)
        if not rest or rest[0] != str(i + 1):
            raise TableauError(f"line {lineno}: expected row 'a {i + 1}'")
        row = _parse_floats(rest[1:], lineno)
        if len(row) != i:
            raise TableauError(f"line {lineno}: row {i + 1} needs {i} coefficients, got {len(row)}")
        A[i, :i] = row

    lineno, rest = _expect(lines, 4 + s, Constants.TAB_WEIGHTS)
    b = _parse_floats(rest, lineno)
    if len(b) != s:
        raise TableauError(f"line {lineno}: expected {s} weights, got {len(b)}")

    b_hat = None
    pos = 5 + s
    if pos < len(lines):
        lineno, rest = _expect(lines, pos, Constants.TAB_EMBEDDED)
        b_hat = _parse_floats(rest, lineno)
        if len(b_hat) != s:
            raise TableauError(f"line {lineno}: expected {s} embedded weights, got {len(b_hat)}")
        pos += 1
    if pos < len(lines):
        raise TableauError(f"line {lines[pos][0]}: unexpected content after weights")
    if (b_hat is None) != (q_embedded == 0):
        raise TableauError(f"embedded order {q_embedded} does not match presence of 'bhat'")

    tab = ButcherTableau(name=name, c=c, A=A, b=b, q_ode=q_ode, b_hat=b_hat,
                         q_embedded=q_embedded)
    if validate:
        validate_tableau(tab)
    return tab

def serialize_tableau(tab: ButcherTableau) -> str:
    """Render a tableau in the file format with 25 significant digits."""
    def fmt(values) -> str:
        return ' '.join(f"{v:.25g}" for v in values)

    lines = [
        f"{Constants.TAB_NAME} {tab.name}",
        f"{Constants.TAB_ORDER} {tab.q_ode} {tab.q_embedded}",
        f"{Constants.TAB_STAGES} {tab.s}",
        f"{Constants.TAB_NODES} {fmt(tab.c)}",
    ]
    for i in range(tab.s):
        lines.append(f"{Constants.TAB_ROW} {i + 1} {fmt(tab.A[i, :i])}".rstrip())
    lines.append(f"{Constants.TAB_WEIGHTS} {fmt(tab.b)}")
    if tab.has_embedded:
        lines.append(f"{Constants.TAB_EMBEDDED} {fmt(tab.b_hat)}")
    return '\n'.join(lines) + '\n'

def validate_tableau(tab: ButcherTableau, tol: float = Constants.RESIDUAL_TOL) -> None:
    """
    Check the structural invariants of a tableau.

    Raises:
        TableauError: Naming the failed condition and its residual
    """
    if np.any(np.triu(tab.A) != 0):
        raise TableauError(f"Tableau '{tab.name}': A is not strictly lower triangular")
    if np.any(tab.c < 0) or np.any(tab.c > 1):
        raise TableauError(f"Tableau '{tab.name}': nodes must lie in [0, 1]")
    row_residuals = np.abs(tab.A.sum(axis=1) - tab.c)
    worst = int(np.argmax(row_residuals))
    if row_residuals[worst] > tol:
        raise TableauError(f"Tableau '{tab.name}': row-sum condition fails for row {worst + 1}, "
                           f"residual {row_residuals[worst]:.3e}")
    for label, weights in (('b', tab.b), ('bhat', tab.b_hat)):
        if weights is None:
            continue
        residual = abs(weights.sum() - 1.0)
        if residual > tol:
            raise TableauError(f"Tableau '{tab.name}': weights {label} do not sum to 1, "
                               f"residual {residual:.3e}")
    if tab.has_embedded and tab.q_embedded >= tab.q_ode:
        raise TableauError(f"Tableau '{tab.name}': embedded order {tab.q_embedded} "
                           f"must be below {tab.q_ode}")

def validate_quadrature(tab: ButcherTableau, max_order: int,
                        embedded: bool = False) -> List[Tuple[int, float]]:
    """
    Quadrature residuals |sum_i b_i c_i^(q-1) - 1/q| for q = 1..max_order.

    Args:
        tab: Tableau
        max_order: Highest order to check
        embedded: Use the embedded weights instead of b

    Returns:
        List of (order, residual)

    Raises:
        ValueError: If max_order < 1 or embedded weights are requested but absent
    """
    if max_order < 1:
        raise ValueError(f"max_order must be at least 1, got {max_order}")
    weights = tab.b_hat if embedded else tab.b
    if weights is None:
        raise ValueError(f"Tableau '{tab.name}' has no embedded weights")
    return [(q, float(abs(np.dot(weights, tab.c ** (q - 1)) - 1.0 / q)))
            for q in range(1, max_order + 1)]

def tableau_summary(tab: ButcherTableau) -> pd.DataFrame:
    """
    Residual table for a tableau: row sums and quadrature residuals up to the
    declared order of each weight set.

    Returns:
        DataFrame with columns weights, order, residual
    """
    rows = [{Constants.WEIGHTS_COL: 'row-sum', Constants.ORDER_COL: 0,
             Constants.RESIDUAL_COL: float(np.max(np.abs(tab.A.sum(axis=1) - tab.c)))}]
    for q, residual in validate_quadrature(tab, tab.q_ode):
        rows.append({Constants.WEIGHTS_COL: 'b', Constants.ORDER_COL: q,
                     Constants.RESIDUAL_COL: residual})
    if tab.has_embedded:
        for q, residual in validate_quadrature(tab, tab.q_embedded, embedded=True):
            rows.append({Constants.WEIGHTS_COL: 'bhat', Constants.ORDER_COL: q,
                         Constants.RESIDUAL_COL: residual})
    return pd.DataFrame(rows)
