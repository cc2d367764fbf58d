"""Left-associative graded-logic aggregation trees.

An ``LspTree`` is the symbolic model artifact: an ordered feature list
plus one (weight, andness) pair per aggregation node.  Feature 1 is the
deepest leaf; every following feature is a "newcomer" joined to the
running result by its node, so the last feature sits at the top of the
tree and carries the most direct influence.

The node weight ``w`` applies to the running (left) argument; the
newcomer receives ``1 - w``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import graded_logic
from .errors import ConfigError, DomainError, ShapeError, StateError
from .graded_logic import AndnessCode, CODES_BY_NAME, andness_to_code

LAYOUT_LEFT = "left"
LAYOUT_BALANCED = "balanced"


@dataclass(frozen=True)
class LspTree:
    features: tuple[str, ...]
    nodes: tuple[tuple[float, float], ...]  # (weight of running result, andness)
    layout: str = LAYOUT_LEFT

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(
            self, "nodes", tuple((float(w), float(a)) for w, a in self.nodes)
        )
        if self.layout == LAYOUT_BALANCED:
            raise ConfigError(
                "tree_layout 'balanced' is recognized but untested and rejected; "
                "use 'left'"
            )
        if self.layout != LAYOUT_LEFT:
            raise ConfigError(f"unknown tree_layout {self.layout!r}")
        if len(self.features) < 2:
            raise DomainError("a tree needs at least 2 features")
        if len(self.nodes) != len(self.features) - 1:
            raise DomainError(
                f"{len(self.features)} features require {len(self.features) - 1} "
                f"nodes, got {len(self.nodes)}"
            )
        for w, a in self.nodes:
            if not (0.0 <= w <= 1.0):
                raise DomainError(f"node weight {w!r} outside [0, 1]")
            if not (graded_logic.ALPHA_MIN <= a <= graded_logic.ALPHA_MAX):
                raise DomainError(f"node andness {a!r} outside [-1, 2]")

    @property
    def n_features(self) -> int:
        return len(self.features)

    def evaluate(self, sample) -> float:
        """Left fold of gcd2 over the sample, which must be in tree order."""
        if len(sample) != len(self.features):
            raise ShapeError(
                f"sample has {len(sample)} values, tree has {len(self.features)} features"
            )
        result = float(sample[0])
        graded_logic._check_unit("sample[0]", result)
        for i, (w, a) in enumerate(self.nodes):
            newcomer = float(sample[i + 1])
            graded_logic._check_unit(f"sample[{i + 1}]", newcomer)
            result = graded_logic._gcd2_unchecked(result, newcomer, w, a)
        return result

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorized evaluate over rows of X (columns in tree order)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise ShapeError(
                f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
                f"tree has {len(self.features)} features"
            )
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise DomainError("sample values must lie in [0, 1]")
        result = X[:, 0].copy()
        for i, (w, a) in enumerate(self.nodes):
            result = _gcd2_vec(result, X[:, i + 1], w, a)
        return result


def _gcd2_vec(x: np.ndarray, y: np.ndarray, w: float, alpha: float) -> np.ndarray:
    # np.power(0, 0) == 1, matching the scalar zero-weight convention
    if alpha == graded_logic.ALPHA_MAX:
        return np.where((x == 1.0) & (y == 1.0), 1.0, 0.0)
    if alpha >= graded_logic.GEOMETRIC_START:
        e = graded_logic.geometric_exponent(alpha)
        return (np.power(x, 2.0 * w) * np.power(y, 2.0 * (1.0 - w))) ** e
    if alpha > graded_logic.NEUTRAL:
        e = graded_logic.geometric_exponent(alpha)
        geo = (np.power(x, 2.0 * w) * np.power(y, 2.0 * (1.0 - w))) ** e
        mean = w * x + (1.0 - w) * y
        return (3.0 - 4.0 * alpha) * mean + (4.0 * alpha - 2.0) * geo
    if alpha == graded_logic.NEUTRAL:
        return w * x + (1.0 - w) * y
    return 1.0 - _gcd2_vec(1.0 - x, 1.0 - y, w, 1.0 - alpha)


def prune(tree: LspTree, k: int) -> LspTree:
    """Drop the k deepest features and their aggregation nodes.

    The two shallowest surviving features become the new base pair; the
    surviving node parameters are untouched.
    """
    if not (0 <= k <= tree.n_features - 2):
        raise DomainError(
            f"k must lie in [0, {tree.n_features - 2}] for a "
            f"{tree.n_features}-feature tree, got {k}"
        )
    if k == 0:
        return tree
    return LspTree(tree.features[k:], tree.nodes[k:], tree.layout)


# ---------------------------------------------------------------------------
# Simplified (explanation-layer) trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplifiedLeaf:
    feature: str
    weight: float


@dataclass(frozen=True)
class SimplifiedNode:
    """n-ary view node.

    ``andness`` keeps the exact node andness for strict binary nodes so
    the unmerged view evaluates identically to the chain; merged nodes
    (more than one chain node collapsed) store None because their
    displayed weights are only an approximate reading.
    """

    operator: str
    children: tuple
    andness: float | None = None

    @property
    def code(self) -> AndnessCode:
        return CODES_BY_NAME[self.operator]

    def evaluate(self, values: dict[str, float]) -> float:
        """Evaluate a strict binary simplified tree; merged views refuse."""
        if self.andness is None or len(self.children) != 2:
            raise StateError(
                "only strict binary simplified trees are evaluable; the merged "
                "n-ary view is an approximate explanation layer"
            )
        left, right = self.children
        if not isinstance(right, SimplifiedLeaf):
            raise StateError("malformed binary node: newcomer child must be a leaf")
        w = 1.0 - right.weight
        lv = left.evaluate(values) if isinstance(left, SimplifiedNode) else values[left.feature]
        return graded_logic._gcd2_unchecked(lv, values[right.feature], w, self.andness)


def simplify(tree: LspTree, code_merge: bool = True):
    """Convert the chain into a recursive tree for explanation.

    With ``code_merge`` adjacent chain nodes whose andness maps to the
    same aggregator code collapse into one n-ary node; each child then
    carries its normalized chain-weight share (shares at a node sum
    to 1, with the share of a nested subtree implied).  Without merging
    the result is a strict binary tree that evaluates identically to the
    chain.  Children are ordered deepest-first, so the top newcomer
    appears last.
    """
    if not code_merge:
        current = SimplifiedLeaf(tree.features[0], tree.nodes[0][0])
        for i, (w, a) in enumerate(tree.nodes):
            newcomer = SimplifiedLeaf(tree.features[i + 1], 1.0 - w)
            current = SimplifiedNode(
                operator=andness_to_code(a).code,
                children=(current, newcomer),
                andness=a,
            )
        return current

    codes = [andness_to_code(a).code for _, a in tree.nodes]
    runs = []  # (code, start, end) over node indices, end inclusive
    start = 0
    for i in range(1, len(codes)):
        if codes[i] != codes[start]:
            runs.append((codes[start], start, i - 1))
            start = i
    runs.append((codes[start], start, len(codes) - 1))

    current = SimplifiedLeaf(tree.features[0], 1.0)
    for code, s, e in runs:
        ws = [tree.nodes[m][0] for m in range(s, e + 1)]
        # chain share of the running result, then of each newcomer
        shares = [math.prod(ws)]
        for offset, w in enumerate(ws):
            shares.append((1.0 - w) * math.prod(ws[offset + 1 :]))
        total = sum(shares)
        shares = [sh / total for sh in shares]
        children = [_with_share(current, shares[0])]
        for offset in range(s, e + 1):
            children.append(SimplifiedLeaf(tree.features[offset + 1], shares[offset - s + 1]))
        andness = tree.nodes[s][1] if s == e else None
        current = SimplifiedNode(operator=code, children=tuple(children), andness=andness)
    return current


def _with_share(child, share: float):
    if isinstance(child, SimplifiedLeaf):
        return SimplifiedLeaf(child.feature, share)
    return child  # subtree share at its parent is implied


def structurally_equal(a, b, weight_decimals: int = 2) -> bool:
    """Compare operators, features, ordering and (rounded) leaf weights."""
    if isinstance(a, SimplifiedLeaf) and isinstance(b, SimplifiedLeaf):
        return a.feature == b.feature and round(a.weight, weight_decimals) == round(
            b.weight, weight_decimals
        )
    if isinstance(a, SimplifiedNode) and isinstance(b, SimplifiedNode):
        return (
            a.operator == b.operator
            and len(a.children) == len(b.children)
            and all(
                structurally_equal(x, y, weight_decimals)
                for x, y in zip(a.children, b.children)
            )
        )
    return False


# ---------------------------------------------------------------------------
# JSON export / import
# ---------------------------------------------------------------------------

def _to_payload(node):
    if isinstance(node, SimplifiedLeaf):
        return {"feature": node.feature, "weight": round(node.weight, 2)}
    return {
        "operator": node.operator,
        "children": [_to_payload(c) for c in node.children],
    }


def to_json(tree) -> str:
    """Serialize a simplified tree; leaf children carry rounded weights."""
    return json.dumps(_to_payload(tree), indent=4)


def from_json(text: str):
    """Parse the JSON tree format back into a simplified tree."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"malformed tree JSON: {exc}") from exc
    return _from_payload(payload)


def _from_payload(payload):
    if not isinstance(payload, dict):
        raise DomainError("tree JSON nodes must be objects")
    keys = set(payload)
    if keys == {"feature", "weight"}:
        return SimplifiedLeaf(str(payload["feature"]), float(payload["weight"]))
    if keys == {"operator", "children"}:
        op = str(payload["operator"])
        if op not in CODES_BY_NAME:
            raise DomainError(f"unknown operator code {op!r}")
        children = tuple(_from_payload(c) for c in payload["children"])
        if len(children) < 2:
            raise DomainError("operator nodes need at least 2 children")
        row = CODES_BY_NAME[op]
        andness = row.anchor if (len(children) == 2 and not row.is_interval) else None
        return SimplifiedNode(operator=op, children=children, andness=andness)
    raise DomainError(
        f"tree JSON node must have keys feature/weight or operator/children, got {sorted(keys)}"
    )


# ---------------------------------------------------------------------------
# Closed-form expression export
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def _geo_expr(lx: str, rx: str, w: float, alpha: float) -> str:
    e = graded_logic.geometric_exponent(alpha)
    factors = []
    if 2.0 * w != 0.0:
        factors.append(lx if 2.0 * w == 1.0 else f"{lx}**{_fmt(2.0 * w)}")
    if 2.0 * (1.0 - w) != 0.0:
        factors.append(rx if 2.0 * (1.0 - w) == 1.0 else f"{rx}**{_fmt(2.0 * (1.0 - w))}")
    base = "*".join(factors) if factors else "1.0"
    if e == 1.0:
        return f"({base})"
    return f"(({base})**{_fmt(e)})"


def _mean_expr(lx: str, rx: str, w: float) -> str:
    return f"({_fmt(w)}*{lx} + {_fmt(1.0 - w)}*{rx})"


def _gcd2_expr(lx: str, rx: str, w: float, alpha: float) -> str:
    if alpha == graded_logic.ALPHA_MAX:
        return f"(1.0 if ({lx} == 1.0 and {rx} == 1.0) else 0.0)"
    if alpha >= graded_logic.GEOMETRIC_START:
        return _geo_expr(lx, rx, w, alpha)
    if alpha > graded_logic.NEUTRAL:
        c_mean = 3.0 - 4.0 * alpha
        c_geo = 4.0 * alpha - 2.0
        return (
            f"({_fmt(c_mean)}*{_mean_expr(lx, rx, w)} + "
            f"{_fmt(c_geo)}*{_geo_expr(lx, rx, w, alpha)})"
        )
    if alpha == graded_logic.NEUTRAL:
        return _mean_expr(lx, rx, w)
    inner = _gcd2_expr(f"(1.0 - {lx})", f"(1.0 - {rx})", w, 1.0 - alpha)
    return f"(1.0 - {inner})"


def to_expression(tree: LspTree) -> str:
    """Standalone arithmetic expression equivalent to ``evaluate``.

    Variables are x1..xn in tree-feature order; the string is plain
    Python/most-language arithmetic (powers, products, affine blends and
    1-x duals) needing no runtime support.
    """
    expr = "x1"
    for i, (w, a) in enumerate(tree.nodes):
        expr = _gcd2_expr(expr, f"x{i + 2}", w, a)
    return expr


def expression_variable_map(tree: LspTree) -> dict[str, str]:
    return {f"x{i + 1}": name for i, name in enumerate(tree.features)}


# ---------------------------------------------------------------------------
# Report prompt emission
# ---------------------------------------------------------------------------

_CODE_TABLE_HEADER = (
    "| GCD | Type | Subtype | Code | Name | Andness | Verbalization |\n"
    "|-----|------|---------|------|------|---------|---------------|"
)

_PROMPT_TEMPLATE = """System
=======
You are a report generator that produces a precise, human-readable,
and insightful explanation of a graded-logic (LSP) aggregation tree.
Use your knowledge of logic aggregation as well as the provided
context to generate a clear and logical report.

Context
=======
{context}

Background
==========
LSP aggregators are defined in the following markdown table:
{code_table}

Instructions
============
1. Organize the report into the following sections:
    - Overview: Summarize the overall decision logic of the tree.
    - Decision Logic Walkthrough: Explain step by step from root
    to leaves, introducing the operator, its meaning (use the
    verbalization from the table where applicable), and how the
    features are combined.
    - Domain Interpretation: Relate the aggregation logic to known
    patterns in the problem domain described by the context, and
    highlight any interesting interactions or compensations observed.

2. Use plain, human-friendly language suitable for decision-makers.

3. When describing operators, use both their code (e.g., "HHC")
    and verbalization (e.g., "High hyper-conjunction -- extremely
    strict 'must have all' behavior").

4. Highlight the most influential features and explain how they
   affect the overall decision.

5. Avoid excessive technical terms unless necessary, and prefer
   clear analogies and explanations.

Input
======
The aggregation tree is expressed in the following JSON.
```json
{tree_json}
```
"""


def _code_table_markdown() -> str:
    lines = [_CODE_TABLE_HEADER]
    for row in graded_logic.CODE_TABLE:
        lines.append(
            f"| GCD | {row.gcd_type} | {row.subtype} | {row.code} "
            f"| {row.name} | {row.anchor_text} | \"{row.verbalization}\" |"
        )
    return "\n".join(lines)


def emit_report_prompt(tree, context: str = "") -> str:
    """Fill the report-generation prompt template with the tree's JSON."""
    return _PROMPT_TEMPLATE.format(
        context=context,
        code_table=_code_table_markdown(),
        tree_json=to_json(tree),
    )
