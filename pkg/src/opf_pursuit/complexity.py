"""Flop accounting for coordinate updates and the flops-to-error budget.

Counting convention (BSS machine): one flop per add, subtract, multiply,
divide or compare; solving a univariate cubic costs ``CUBIC_ROOT_FLOPS``.
Each coordinate update is charged the cost of evaluating its restriction
coefficients:

=====================  ======================================  ===========
coordinate             arithmetic flops                        cubic solves
=====================  ======================================  ===========
x (each of 2N)         (16p + 51) N + (16p + 58) N_G - 8       3
t_i, g_i, i in G       8p + 38                                 3
t_i, g_i, i not in G   0 (pinned by the box)                   0
h_i                    14 (12 coefficients + 2 solve)          0
z_i                    16 (14 coefficients + 2 solve)          0
multipliers            0                                       0
=====================  ======================================  ===========

Summed over one epoch these reproduce the closed-form per-epoch totals of
:func:`flop_counts`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

CUBIC_ROOT_FLOPS = 31


def update_charges(N: int, NG: int, p: int) -> dict[str, tuple[int, int]]:
    """``kind -> (arithmetic flops, cubic solves)`` for one coordinate update."""
    quartic = 8 * p + 38
    return {
        "x": ((16 * p + 51) * N + (16 * p + 58) * NG - 8, 3),
        "t_gen": (quartic, 3),
        "g_gen": (quartic, 3),
        "t_pinned": (0, 0),
        "g_pinned": (0, 0),
        "h": (14, 0),
        "z": (16, 0),
        "lam": (0, 0),
    }


@dataclass(frozen=True)
class FlopCounts:
    per_epoch: int
    per_epoch_roots: int
    per_coordinate_max: int
    cubic_root_flops: int = CUBIC_ROOT_FLOPS

    @property
    def per_epoch_total(self) -> int:
        """Arithmetic flops plus cubic solves charged at ``cubic_root_flops`` each."""
        return self.per_epoch + self.cubic_root_flops * self.per_epoch_roots


def flop_counts(N: int, NG: int, p: int) -> FlopCounts:
    if not (N >= NG >= 0 and p >= 1):
        raise DomainError("need N >= N_G >= 0 and p >= 1")
    per_epoch = (32 * p + 102) * N * N + (32 * p + 116) * NG * N - 2 * N + (16 * p + 92) * NG
    return FlopCounts(
        per_epoch=per_epoch,
        per_epoch_roots=6 * (N + NG),
        per_coordinate_max=16 * (N + NG) * p + 58 * NG + 144 * N - 8,
    )


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the flops-to-error budget.

    ``sigma_l`` is the initial gap ``L(xi^0) - L*``; ``sigma_p = d L / sigma_L``;
    ``e`` bounds the per-step drift of ``L``; ``E_k`` is the target expected error.
    """

    sigma_l: float
    sigma_p: float
    e: float
    E_k: float
    N: int
    NG: int
    p: int


@dataclass(frozen=True)
class Budget:
    flops: float
    positive: bool


def budget_for_error(inputs: BoundInputs) -> Budget:
    """Flops between two input updates needed for expected error ``E_k``.

    Returns the closed-form value unchanged; ``positive`` is False when the
    formula yields a non-positive count (``E_k - 2 e sigma_p < 1``).
    """
    b = inputs
    if not b.sigma_l > 1:
        raise DomainError(f"sigma_l > 1 required, got {b.sigma_l}")
    arg = b.E_k - 2.0 * b.e * b.sigma_p
    if not arg > 0:
        raise DomainError(f"E_k > 2 e sigma_p required, got E_k={b.E_k}, 2 e sigma_p={2.0 * b.e * b.sigma_p}")
    per_update = flop_counts(b.N, b.NG, b.p).per_coordinate_max
    value = per_update * math.log(arg) / math.log(b.sigma_l)
    return Budget(value, value > 0)
