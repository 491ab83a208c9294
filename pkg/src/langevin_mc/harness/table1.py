"""``table1`` command: planner iteration counts against the printed reference table."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..theory import TABLE1_EPS, TABLE1_KAPPA, round_2sf, table1, table1_csv, table1_text

__all__ = ["PRINTED_TABLE1", "CellComparison", "compare_table1", "cmd_table1"]

_ALGS = ("LMC", "RLMC", "KLMC", "RKLMC")

# mantissa and exponent of the first column of each row; "x100" rows grow by
# a constant factor per column, the others are listed in full
_ROWS = {
    1e-1: {
        "LMC": [(1.2, 4), (1.2, 6), (1.2, 8), (1.2, 10), (1.2, 12), (1.2, 14)],
        "RLMC": [(3.6, 3), (1.1, 6), (4.5, 8), (2.0, 11), (9.3, 13), (4.3, 16)],
        "KLMC": [(8.4, 3), (8.4, 6), (8.4, 9), (8.4, 12), (8.4, 15), (8.4, 18)],
        "RKLMC": [(1.0, 4), (1.1, 6), (1.1, 8), (1.3, 10), (2.2, 12), (4.2, 14)],
    },
    1e-3: {
        "LMC": [(2.2, 8), (2.2, 10), (2.2, 12), (2.2, 14), (2.2, 16), (2.2, 18)],
        "RLMC": [(3.8, 5), (6.8, 7), (2.0, 10), (8.4, 12), (3.8, 15), (1.7, 18)],
        "KLMC": [(1.6, 6), (1.6, 9), (1.6, 12), (1.6, 15), (1.6, 18), (1.6, 21)],
        "RKLMC": [(4.5, 5), (4.5, 7), (4.5, 9), (4.5, 11), (4.7, 13), (5.7, 15)],
    },
    1e-5: {
        "LMC": [(3.2, 12), (3.2, 14), (3.2, 16), (3.2, 18), (3.2, 20), (3.2, 22)],
        "RLMC": [(4.6, 7), (5.5, 9), (9.9, 11), (3.0, 14), (1.2, 17), (5.5, 19)],
        "KLMC": [(2.3, 8), (2.3, 11), (2.3, 14), (2.3, 17), (2.3, 20), (2.3, 23)],
        "RKLMC": [(1.5, 7), (1.5, 9), (1.5, 11), (1.5, 13), (1.5, 15), (1.5, 17)],
    },
}

#: Printed iteration counts keyed by ``(algorithm, eps, kappa)``; 72 cells.
PRINTED_TABLE1 = {
    (alg, eps, kappa): float(f"{mant}e{exp}")
    for eps, rows in _ROWS.items()
    for alg, cells in rows.items()
    for kappa, (mant, exp) in zip(TABLE1_KAPPA, cells)
}


@dataclass(frozen=True)
class CellComparison:
    algorithm: str
    eps: float
    kappa: float
    n_exact: int
    n_2sf: float
    printed: float

    @property
    def match(self) -> bool:
        return self.n_2sf == self.printed

    @property
    def ratio(self) -> float:
        """Printed value over computed value."""
        return self.printed / self.n_exact


def compare_table1():
    cells = table1(TABLE1_EPS, TABLE1_KAPPA)
    out = [CellComparison(c.algorithm, c.eps, c.kappa, c.n_exact, round_2sf(c.n_exact),
                          PRINTED_TABLE1[(c.algorithm, c.eps, c.kappa)]) for c in cells]
    return cells, out


def cmd_table1(csv_path: Optional[str] = None, out=print) -> list:
    """Print the table, marking cells (``*``) whose 2-s.f. value differs from print."""
    cells, comps = compare_table1()
    marks = {(c.algorithm, c.eps, c.kappa): ("" if c.match else "*") for c in comps}
    out(table1_text(cells, marks))
    for alg in _ALGS:
        rows = [c for c in comps if c.algorithm == alg]
        bad = [c for c in rows if not c.match]
        ratios = [c.ratio for c in rows]
        out(f"{alg:<6} mismatches {len(bad):2d}/{len(rows)}  "
            f"printed/computed ratio in [{min(ratios):.3f}, {max(ratios):.3f}]")
        for c in bad:
            out(f"       eps={c.eps:g} kappa={c.kappa:.0e}: computed {c.n_2sf:.1e} "
                f"(exact {c.n_exact}), printed {c.printed:.1e}")
    if csv_path is not None:
        Path(csv_path).write_text(table1_csv(cells))
    return comps
