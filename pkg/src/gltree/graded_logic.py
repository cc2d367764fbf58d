"""Two-input graded conjunction/disjunction (GCD) aggregators.

A GCD node blends between disjunctive and conjunctive behaviour on the
unit interval, steered by its andness ``alpha``:

* ``alpha = 2``        drastic conjunction (1 only when both inputs are 1)
* ``0.75 <= alpha < 2`` weighted-geometric form
* ``0.5 < alpha < 0.75`` linear blend of weighted mean and geometric form
* ``alpha = 0.5``      weighted arithmetic mean (logic neutrality)
* ``-1 <= alpha < 0.5`` De Morgan dual of the conjunctive half

Orness is the complement ``1 - alpha``.  The full trainable range is
``[-1, 2]``; the drastic endpoints are valid for evaluation but are not
differentiable.

Note that the blended region is deliberately not idempotent: just above
neutrality the output of equal inputs can exceed those inputs (e.g.
``gcd2(0.5, 0.5, 0.5, 0.6) ~ 0.5103``), and the pure-conjunction point
``alpha = 1`` gives ``x ** (2 * (sqrt(3) - 1)) != x``.  That is the
defined behaviour of the operator family, not a bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

ALPHA_MIN = -1.0
ALPHA_MAX = 2.0

# Region boundaries for the conjunctive half.
NEUTRAL = 0.5
GEOMETRIC_START = 0.75

#: mandatory / desired / optional / sufficient / neutral role labels
ROLE_MANDATORY = "mandatory"
ROLE_DESIRED = "desired"
ROLE_OPTIONAL = "optional"
ROLE_SUFFICIENT = "sufficient"
ROLE_NEUTRAL = "neutral"


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def _check_alpha(alpha: float) -> None:
    if not (ALPHA_MIN <= alpha <= ALPHA_MAX):
        raise DomainError(f"andness must lie in [-1, 2], got {alpha!r}")


def negate(x: float) -> float:
    """Standard negation 1 - x on the unit interval."""
    _check_unit("x", x)
    return 1.0 - x


def geometric_exponent(alpha: float) -> float:
    """Outer exponent sqrt(3 / (2 - alpha)) - 1 of the geometric form."""
    return math.sqrt(3.0 / (2.0 - alpha)) - 1.0


def _geometric(x: float, y: float, w: float, alpha: float) -> float:
    # 0**0 == 1, so a zero-weight argument is ignored rather than
    # annihilating (matches the weighted-mean limit).
    base = (x ** (2.0 * w)) * (y ** (2.0 * (1.0 - w)))
    return base ** geometric_exponent(alpha)


def _mean(x: float, y: float, w: float) -> float:
    return w * x + (1.0 - w) * y


def _blend(x: float, y: float, w: float, alpha: float) -> float:
    return (3.0 - 4.0 * alpha) * _mean(x, y, w) + (4.0 * alpha - 2.0) * _geometric(
        x, y, w, alpha
    )


def _gcd2_unchecked(x: float, y: float, w: float, alpha: float) -> float:
    if alpha == ALPHA_MAX:
        return 1.0 if (x == 1.0 and y == 1.0) else 0.0
    if alpha >= GEOMETRIC_START:
        return _geometric(x, y, w, alpha)
    if alpha > NEUTRAL:
        return _blend(x, y, w, alpha)
    if alpha == NEUTRAL:
        return _mean(x, y, w)
    # disjunctive half: De Morgan dual of the conjunctive half
    return 1.0 - _gcd2_unchecked(1.0 - x, 1.0 - y, w, 1.0 - alpha)


def gcd2(x: float, y: float, w: float, alpha: float) -> float:
    """Aggregate two degrees of truth.

    ``w`` weighs ``x``; ``y`` receives the complementary weight ``1 - w``.
    Raises ``DomainError`` when any argument is outside its range.
    """
    _check_unit("x", x)
    _check_unit("y", y)
    _check_unit("w", w)
    _check_alpha(alpha)
    return _gcd2_unchecked(x, y, w, alpha)


# ---------------------------------------------------------------------------
# Aggregator code table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AndnessCode:
    """One row of the two-input aggregator code table.

    ``anchor`` is either a single andness value or a ``(low, high)``
    interval for the hyper regions.  ``verbalization`` is the group-level
    reading ("Must have all", ...), ``name`` the per-code one.
    """

    code: str
    name: str
    anchor: float | tuple[float, float]
    gcd_type: str
    subtype: str
    verbalization: str
    anchor_text: str

    @property
    def is_interval(self) -> bool:
        return isinstance(self.anchor, tuple)


def _row(code, name, anchor, gcd_type, subtype, verbalization, anchor_text):
    return AndnessCode(code, name, anchor, gcd_type, subtype, verbalization, anchor_text)


#: Codes in descending order of andness (most conjunctive first).
CODE_TABLE: tuple[AndnessCode, ...] = (
    _row("CC", "Drastic conjunction", 2.0, "Conjunctive", "Hard conjunction", "Must have all", "2"),
    _row("HHC", "High hyper-conjunction", (1.25, 2.0), "Conjunctive", "Hard conjunction", "Must have all", "[5/4, 2]"),
    _row("CP", "Product t-norm", 1.25, "Conjunctive", "Hard conjunction", "Must have all", "5/4"),
    _row("LHC", "Low hyper-conjunction", (1.0, 1.25), "Conjunctive", "Hard conjunction", "Must have all", "[1, 5/4]"),
    _row("C", "Pure conjunction", 1.0, "Conjunctive", "Hard conjunction", "Must have all", "1"),
    _row("HC+", "High hard conjunction", 13 / 14, "Conjunctive", "Hard conjunction", "Must have all", "13/14"),
    _row("HC", "Medium hard conjunction", 12 / 14, "Conjunctive", "Hard conjunction", "Must have all", "12/14"),
    _row("HC-", "Low hard conjunction", 11 / 14, "Conjunctive", "Hard conjunction", "Must have all", "11/14"),
    _row("SC+", "High soft conjunction", 10 / 14, "Conjunctive", "Soft conjunction", "Nice to have most", "10/14"),
    _row("SC", "Medium soft conjunction", 9 / 14, "Conjunctive", "Soft conjunction", "Nice to have most", "9/14"),
    _row("SC-", "Low soft conjunction", 8 / 14, "Conjunctive", "Soft conjunction", "Nice to have most", "8/14"),
    _row("A", "Logic neutrality", 7 / 14, "Neutral", "Arithmetic mean", "Nice to have", "7/14"),
    _row("SD-", "Low soft disjunction", 6 / 14, "Disjunctive", "Soft disjunction", "Nice to have some", "6/14"),
    _row("SD", "Medium soft disjunction", 5 / 14, "Disjunctive", "Soft disjunction", "Nice to have some", "5/14"),
    _row("SD+", "High soft disjunction", 4 / 14, "Disjunctive", "Soft disjunction", "Nice to have some", "4/14"),
    _row("HD-", "Low hard disjunction", 3 / 14, "Disjunctive", "Hard disjunction", "Enough to have any", "3/14"),
    _row("HD", "Medium hard disjunction", 2 / 14, "Disjunctive", "Hard disjunction", "Enough to have any", "2/14"),
    _row("HD+", "High hard disjunction", 1 / 14, "Disjunctive", "Hard disjunction", "Enough to have any", "1/14"),
    _row("D", "Pure disjunction", 0.0, "Disjunctive", "Hard disjunction", "Enough to have any", "0"),
    _row("LHD", "Low hyper-disjunction", (-0.25, 0.0), "Disjunctive", "Hard disjunction", "Enough to have any", "[-1/4, 0]"),
    _row("DP", "Product t-conorm", -0.25, "Disjunctive", "Hard disjunction", "Enough to have any", "-1/4"),
    _row("HHD", "High hyper-disjunction", (-1.0, -0.25), "Disjunctive", "Hard disjunction", "Enough to have any", "[-1, -1/4]"),
    _row("DD", "Drastic disjunction", -1.0, "Disjunctive", "Hard disjunction", "Enough to have any", "-1"),
)

CODES_BY_NAME: dict[str, AndnessCode] = {row.code: row for row in CODE_TABLE}

_POINT_ROWS = tuple(row for row in CODE_TABLE if not row.is_interval)
_INTERVAL_ROWS = tuple(row for row in CODE_TABLE if row.is_interval)


def andness_to_code(alpha: float) -> AndnessCode:
    """Map an andness value to its nearest aggregator code.

    Exact point anchors win; values strictly inside a hyper interval get
    the interval code; everything else snaps to the nearest point anchor
    on the 1/14 grid, ties broken toward the more conjunctive code.
    """
    _check_alpha(alpha)
    for row in _POINT_ROWS:
        if alpha == row.anchor:
            return row
    for row in _INTERVAL_ROWS:
        low, high = row.anchor
        if low < alpha < high:
            return row
    # Remaining values lie strictly inside (0, 1) off the grid; CODE_TABLE
    # is ordered most-conjunctive-first, so min() keeps the conjunctive
    # row on a distance tie.
    candidates = [row for row in _POINT_ROWS if 0.0 <= row.anchor <= 1.0]
    return min(candidates, key=lambda row: (abs(alpha - row.anchor), -row.anchor))


def classify_role(alpha: float) -> str:
    """Classify a node's feature role from its andness band.

    Bands: hard conjunction (>= 11/14) makes the newcomer mandatory, soft
    conjunction [8/14, 10/14] desired, soft disjunction [4/14, 6/14]
    optional, hard disjunction [-1, 3/14] sufficient, and exactly 7/14 is
    neutral.  Values strictly between bands snap to the nearest band
    boundary, ties toward the more conjunctive band.
    """
    _check_alpha(alpha)
    if alpha >= 10.5 / 14:
        return ROLE_MANDATORY
    if alpha >= 7.5 / 14:
        return ROLE_DESIRED
    if alpha >= 6.5 / 14:
        return ROLE_NEUTRAL
    if alpha >= 3.5 / 14:
        return ROLE_OPTIONAL
    return ROLE_SUFFICIENT
