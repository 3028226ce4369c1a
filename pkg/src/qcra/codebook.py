"""Circulant tables and their expansion into quasi-cyclic repeat-accumulate codes.

A table lists, for each group of 360 message columns, the row indices of the
first column in the group. The remaining columns follow the DVB-S2 address
rule: column ``j`` of a group has its ones at ``(x + j*q) mod M`` for every
listed ``x``, where ``q = M / 360``.

The parity part of every code is the implicit accumulator (lower bidiagonal),
so only ``H1`` is stored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

GROUP_SIZE = 360

BUILTIN_TABLES = {"r1_10": "r1_10.txt"}


class TableError(ValueError):
    """Base class for circulant table problems."""


class TableParseError(TableError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TableRangeError(TableParseError):
    """A row index falls outside ``[0, M)``."""


class TableStructureError(TableParseError):
    """Dimensions incompatible with the 360-column group structure."""


@dataclass(frozen=True)
class CirculantTable:
    n: int
    rate: Fraction
    groups: tuple[tuple[int, ...], ...]
    group_size: int = GROUP_SIZE

    @property
    def k(self) -> int:
        return int(self.n * self.rate)

    @property
    def m(self) -> int:
        return self.n - self.k

    @property
    def q(self) -> int:
        return self.m // self.group_size

    def validate(self) -> "CirculantTable":
        """Check every structural invariant; returns ``self`` for chaining."""
        _check_dimensions(self.n, self.rate, self.group_size)
        expected = self.k // self.group_size
        if len(self.groups) != expected:
            raise TableStructureError(
                f"expected K/{self.group_size} = {expected} groups, got {len(self.groups)}"
            )
        for g, idx in enumerate(self.groups):
            _check_group(idx, self.m, g, line=None)
        return self

    def fingerprint(self) -> str:
        """SHA-256 over the canonical text form; used as the code id in provenance."""
        return hashlib.sha256(format_table(self).encode()).hexdigest()[:16]


def _check_dimensions(n: int, rate: Fraction, group_size: int, line: int | None = None) -> None:
    if n <= 0:
        raise TableStructureError(f"codeword length must be positive, got {n}", line)
    if not 0 < rate < 1:
        raise TableStructureError(f"rate must lie in (0, 1), got {rate}", line)
    if (n * rate).denominator != 1:
        raise TableStructureError(f"N*R = {n * rate} is not an integer", line)
    k = int(n * rate)
    if k % group_size:
        raise TableStructureError(f"K = {k} is not a multiple of {group_size}", line)
    if (n - k) % group_size:
        raise TableStructureError(f"M = {n - k} is not a multiple of {group_size}", line)


def _check_group(idx: Sequence[int], m: int, g: int, line: int | None) -> None:
    if not idx:
        raise TableStructureError(f"group {g} is empty", line)
    for x in idx:
        if not 0 <= x < m:
            raise TableRangeError(f"row index {x} outside [0, {m})", line)
    if len(set(idx)) != len(idx):
        raise TableStructureError(f"group {g} has duplicate row indices", line)


def parse_circulant_table(text: str) -> CirculantTable:
    """Parse the text table format.

    Header ``N <int> RATE <num>/<den>``, then one line of row indices per
    column group. Blank lines and lines starting with ``#`` are ignored.
    """
    header: tuple[int, Fraction] | None = None
    header_line = 0
    groups: list[tuple[int, ...]] = []
    m = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            tokens = line.split()
            if len(tokens) != 4 or tokens[0] != "N" or tokens[2] != "RATE":
                raise TableParseError("expected header 'N <int> RATE <num>/<den>'", lineno)
            try:
                n = int(tokens[1])
                num, den = tokens[3].split("/")
                rate = Fraction(int(num), int(den))
            except (ValueError, ZeroDivisionError) as exc:
                raise TableParseError(f"bad header: {exc}", lineno) from None
            _check_dimensions(n, rate, GROUP_SIZE, lineno)
            header = (n, rate)
            header_line = lineno
            m = n - int(n * rate)
            continue
        try:
            idx = tuple(int(tok) for tok in line.split())
        except ValueError:
            raise TableParseError(f"non-integer token in {line!r}", lineno) from None
        _check_group(idx, m, len(groups), lineno)
        groups.append(idx)
    if header is None:
        raise TableParseError("missing header line")
    expected = int(header[0] * header[1]) // GROUP_SIZE
    if len(groups) != expected:
        raise TableStructureError(
            f"header implies {expected} groups, found {len(groups)}", header_line
        )
    return CirculantTable(header[0], header[1], tuple(groups))


def load_table(path: str | Path) -> CirculantTable:
    return parse_circulant_table(Path(path).read_text(encoding="utf-8"))


def format_table(table: CirculantTable, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append(f"N {table.n} RATE {table.rate.numerator}/{table.rate.denominator}")
    lines += [" ".join(str(x) for x in g) for g in table.groups]
    return "\n".join(lines) + "\n"


def builtin_table(name: str) -> CirculantTable:
    try:
        fname = BUILTIN_TABLES[name]
    except KeyError:
        raise KeyError(f"unknown builtin table {name!r}; have {sorted(BUILTIN_TABLES)}") from None
    text = resources.files("qcra").joinpath("tables", fname).read_text(encoding="utf-8")
    return parse_circulant_table(text)


def builtin_rate_one_tenth() -> CirculantTable:
    """The embedded rate-1/10, N=64800 table (18 groups: 7 of weight 19, 11 of weight 3)."""
    return builtin_table("r1_10")


def random_table(
    n: int,
    rate: Fraction | str,
    weights: Sequence[int],
    seed: int = 0,
    group_size: int = GROUP_SIZE,
) -> CirculantTable:
    """Draw a table with the given per-group column weights.

    Indices within a group get distinct residues mod ``q``, so the columns of
    one group never share a row. Meant for small test codes and DVB-S2-like
    degree profiles; no girth or threshold optimisation is attempted.
    """
    rate = Fraction(rate)
    _check_dimensions(n, rate, group_size)
    k = int(n * rate)
    m = n - k
    if len(weights) != k // group_size:
        raise TableStructureError(f"need {k // group_size} group weights, got {len(weights)}")
    q = m // group_size
    rng = np.random.default_rng(seed)
    groups = []
    for w in weights:
        if w > q:
            raise TableStructureError(f"column weight {w} exceeds q = {q}")
        residues = rng.choice(q, size=w, replace=False)
        offsets = rng.integers(0, group_size, size=w)
        groups.append(tuple(int(r + o * q) for r, o in zip(residues, offsets)))
    return CirculantTable(n, rate, tuple(groups), group_size).validate()


@dataclass(frozen=True, eq=False)
class QcRaCode:
    """Expanded code ``H = [H1 | A]`` with the accumulator ``A`` left implicit.

    ``H1`` is kept both row-major (``h1_row_ptr``/``h1_row_cols``) and
    column-major (``h1_col_ptr``/``h1_col_rows``). All arrays are read-only.
    """

    n: int
    k: int
    m: int
    expansion_step_q: int
    h1_row_ptr: NDArray[np.int64]
    h1_row_cols: NDArray[np.int64]
    h1_col_ptr: NDArray[np.int64]
    h1_col_rows: NDArray[np.int64]
    table: CirculantTable = field(repr=False)
    name: str = ""

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    @property
    def m_checks(self) -> int:
        return self.m

    @property
    def h1_ones(self) -> int:
        return int(self.h1_row_cols.size)

    def h1_row(self, i: int) -> NDArray[np.int64]:
        return self.h1_row_cols[self.h1_row_ptr[i] : self.h1_row_ptr[i + 1]]

    def h1_col(self, j: int) -> NDArray[np.int64]:
        return self.h1_col_rows[self.h1_col_ptr[j] : self.h1_col_ptr[j + 1]]

    @property
    def h1_rows(self) -> list[NDArray[np.int64]]:
        return [self.h1_row(i) for i in range(self.m)]

    def column_weights(self) -> NDArray[np.int64]:
        return np.diff(self.h1_col_ptr)

    def row_weights(self) -> NDArray[np.int64]:
        return np.diff(self.h1_row_ptr)

    @property
    def accumulator(self) -> "AccumulatorView":
        return AccumulatorView(self.m)

    @cached_property
    def h1(self) -> sp.csr_matrix:
        data = np.ones(self.h1_row_cols.size, dtype=np.uint8)
        return sp.csr_matrix((data, self.h1_row_cols, self.h1_row_ptr), shape=(self.m, self.k))

    @cached_property
    def parity_check_matrix(self) -> sp.csr_matrix:
        """Full ``[H1 | A]`` as a CSR matrix with sorted column indices."""
        h = sp.hstack([self.h1, self.accumulator.matrix()], format="csr", dtype=np.uint8)
        h.sort_indices()
        return h

    def fingerprint(self) -> str:
        return self.table.fingerprint()

    def summary(self) -> dict:
        cw = self.column_weights()
        values, counts = np.unique(cw, return_counts=True)
        return {
            "name": self.name,
            "N": self.n,
            "K": self.k,
            "M": self.m,
            "rate": str(self.rate),
            "groups": len(self.table.groups),
            "q": self.expansion_step_q,
            "h1_ones": self.h1_ones,
            "column_weights": {int(v): int(c) for v, c in zip(values, counts)},
            "h_density": (self.h1_ones + 2 * self.m - 1) / (self.n * self.m),
            "table_sha256": self.fingerprint(),
        }


@dataclass(frozen=True)
class AccumulatorView:
    """Lower-bidiagonal ``M x M`` matrix; row ``i`` covers parity columns ``i`` and ``i-1``."""

    m: int

    def row(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < self.m:
            raise IndexError(i)
        return (i,) if i == 0 else (i - 1, i)

    def matrix(self) -> sp.csr_matrix:
        return sp.eye(self.m, dtype=np.uint8, format="csr") + sp.eye(
            self.m, k=-1, dtype=np.uint8, format="csr"
        )


def expand(table: CirculantTable, name: str = "") -> QcRaCode:
    """Expand a validated table into a :class:`QcRaCode`."""
    table.validate()
    k, m, q = table.k, table.m, table.q
    gs = table.group_size
    cols, rows = [], []
    j = np.arange(gs, dtype=np.int64)
    for g, idx in enumerate(table.groups):
        x = np.asarray(idx, dtype=np.int64)
        r = (x[None, :] + j[:, None] * q) % m
        cols.append(np.repeat(g * gs + j, x.size))
        rows.append(r.ravel())
    col_idx = np.concatenate(cols)
    row_idx = np.concatenate(rows)

    by_row = np.lexsort((col_idx, row_idx))
    row_ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(row_idx, minlength=m), out=row_ptr[1:])
    by_col = np.lexsort((row_idx, col_idx))
    col_ptr = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(np.bincount(col_idx, minlength=k), out=col_ptr[1:])

    arrays = [row_ptr, col_idx[by_row], col_ptr, row_idx[by_col]]
    for a in arrays:
        a.setflags(write=False)
    return QcRaCode(n=table.n, k=k, m=m, expansion_step_q=q,
                    h1_row_ptr=arrays[0], h1_row_cols=arrays[1],
                    h1_col_ptr=arrays[2], h1_col_rows=arrays[3],
                    table=table, name=name)


def to_table(code: QcRaCode) -> CirculantTable:
    """Recover the table from column 0 of each group (rows sorted ascending)."""
    gs = code.table.group_size
    groups = tuple(tuple(int(r) for r in code.h1_col(g * gs)) for g in range(code.k // gs))
    return CirculantTable(code.n, code.rate, groups, gs)


def load_code(spec: str) -> QcRaCode:
    """Resolve ``builtin:<name>`` or a table file path into an expanded code."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        return expand(builtin_table(name), name=name)
    path = Path(spec)
    return expand(load_table(path), name=path.stem)


def group_weight_profile(table: CirculantTable) -> dict[int, int]:
    """Map column weight to number of groups with that weight."""
    out: dict[int, int] = {}
    for g in table.groups:
        out[len(g)] = out.get(len(g), 0) + 1
    return dict(sorted(out.items(), reverse=True))


def same_table(a: CirculantTable, b: CirculantTable) -> bool:
    """Equality modulo ordering of indices within each group."""
    return (a.n, a.rate) == (b.n, b.rate) and all(
        sorted(x) == sorted(y) for x, y in zip(a.groups, b.groups)
    ) and len(a.groups) == len(b.groups)
