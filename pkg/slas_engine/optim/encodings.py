"""
Linear encodings of the non-linear pieces of the planning problem: floor,
logical implication between binaries and the two-sided (front or rear)
safety disjunction.
"""

from __future__ import annotations

import math
from typing import Optional

from slas_engine.optim.model import LinearRow, LinExpr, ModelBuilder, VarKind, VarRole


def encode_floor(
    builder: ModelBuilder,
    x: LinExpr,
    epsilon: float,
    name: str,
    lb: float = -math.inf,
    ub: float = math.inf,
    role: VarRole = VarRole.FLOOR,
    step: int = 0,
) -> tuple[int, list[LinearRow]]:
    """
    Integer ``y`` with ``y <= x`` and ``y + 1 >= x + epsilon``.

    ``y`` equals floor(x) whenever the fractional part of x is at most
    ``1 - epsilon``; otherwise no integer satisfies both rows.
    """
    y = builder.add_var(name, VarKind.INTEGER, lb, ub, role=role, step=step)
    ye = LinExpr.var(y)
    rows = [
        builder.add_row(x - ye, lo=0.0, name=f"{name}_below"),
        builder.add_row(ye + 1.0 - x, lo=epsilon, name=f"{name}_above"),
    ]
    return y, rows


def encode_implication(
    builder: ModelBuilder,
    a: LinExpr,
    b: LinExpr,
    epsilon: float,
    big_M: float,
    name: str,
    lazy: bool = False,
) -> LinearRow:
    """``a = 1  =>  b = 1`` for binary-valued expressions: ``b + M(1 - a) >= 1 - epsilon``."""
    return builder.add_row(b + (1.0 - a) * big_M, lo=1.0 - epsilon, name=name, lazy=lazy)


def encode_abs_safety(
    builder: ModelBuilder,
    delta_s: LinExpr,
    L_f: LinExpr | float,
    L_r: LinExpr | float,
    big_M: float,
    name: str,
    gate: Optional[LinExpr] = None,
    selector: Optional[int] = None,
    step: int = 0,
) -> tuple[int, list[LinearRow]]:
    """
    Either ``delta_s >= L_f`` (other vehicle ahead, selector 1) or
    ``delta_s <= -L_r`` (other vehicle behind, selector 0).

    ``gate`` relaxes both rows by ``M(1 - gate)`` so the pair only binds when
    the gate expression is 1. Pass an existing ``selector`` to add a further
    margin pair that must agree on the side.
    """
    if selector is None:
        selector = builder.add_var(f"c_{name}", VarKind.BINARY, role=VarRole.SELECTOR, step=step)
    c = LinExpr.var(selector)
    slack = LinExpr.constant(0.0) if gate is None else (1.0 - gate) * big_M
    front = delta_s - L_f + (1.0 - c) * big_M + slack
    rear = -delta_s - L_r + c * big_M + slack
    rows = [
        builder.add_row(front, lo=0.0, name=f"front_{name}"),
        builder.add_row(rear, lo=0.0, name=f"rear_{name}"),
    ]
    return selector, rows
