import json
import math

import numpy as np
import pytest

from gltree.errors import ConfigError, DomainError, ShapeError, StateError
from gltree.lsp_tree import (
    LspTree,
    SimplifiedLeaf,
    SimplifiedNode,
    emit_report_prompt,
    expression_variable_map,
    from_json,
    prune,
    simplify,
    structurally_equal,
    to_expression,
    to_json,
)


def random_tree(rng, n, alpha_range=(-1.0, 2.0)):
    nodes = tuple(
        (rng.uniform(0.05, 0.95), rng.uniform(*alpha_range)) for _ in range(n - 1)
    )
    return LspTree(tuple(f"f{i}" for i in range(n)), nodes)


def test_evaluate_mean_pair():
    tree = LspTree(("a", "b"), ((0.5, 0.5),))
    assert tree.evaluate([0.2, 0.6]) == pytest.approx(0.4, abs=1e-15)


def test_evaluate_product_chain():
    tree = LspTree(("a", "b", "c"), ((0.5, 1.25), (0.5, 1.25)))
    assert tree.evaluate([0.9, 0.8, 0.5]) == pytest.approx(0.36, abs=1e-12)


def test_evaluate_full_weight_on_running_result():
    tree = LspTree(("a", "b"), ((1.0, 1.25),))
    assert tree.evaluate([0.7, 0.1]) == pytest.approx(0.49, abs=1e-12)


def test_evaluate_shape_and_range_errors():
    tree = LspTree(("a", "b"), ((0.5, 0.5),))
    with pytest.raises(ShapeError):
        tree.evaluate([0.2, 0.3, 0.4])
    with pytest.raises(DomainError):
        tree.evaluate([0.2, 1.3])


def test_evaluate_many_matches_scalar():
    rng = np.random.default_rng(21)
    tree = random_tree(rng, 6)
    X = rng.random((40, 6))
    vec = tree.evaluate_many(X)
    for i in range(40):
        assert vec[i] == pytest.approx(tree.evaluate(X[i]), abs=1e-12)


def test_tree_validation():
    with pytest.raises(DomainError):
        LspTree(("a",), ())
    with pytest.raises(DomainError):
        LspTree(("a", "b"), ((0.5, 0.5), (0.5, 0.5)))
    with pytest.raises(DomainError):
        LspTree(("a", "b"), ((1.5, 0.5),))
    with pytest.raises(ConfigError):
        LspTree(("a", "b"), ((0.5, 0.5),), layout="balanced")
    with pytest.raises(ConfigError):
        LspTree(("a", "b"), ((0.5, 0.5),), layout="ring")


# ---------------------------------------------------------------------------
# prune
# ---------------------------------------------------------------------------

def test_prune_identity():
    rng = np.random.default_rng(22)
    tree = random_tree(rng, 5)
    assert prune(tree, 0) is tree


def test_prune_keeps_top():
    rng = np.random.default_rng(23)
    tree = random_tree(rng, 5)
    pruned = prune(tree, 3)
    assert pruned.features == tree.features[3:]
    assert pruned.nodes == tree.nodes[3:]


def test_prune_composes():
    rng = np.random.default_rng(24)
    tree = random_tree(rng, 8)
    assert prune(prune(tree, 2), 3) == prune(tree, 5)


def test_prune_bounds():
    rng = np.random.default_rng(25)
    tree = random_tree(rng, 4)
    with pytest.raises(DomainError):
        prune(tree, 3)
    with pytest.raises(DomainError):
        prune(tree, -1)


def test_monotone_on_conjunctive_trees():
    # coordinate-wise bump never lowers the output when every node is
    # conjunctive (no dual branch) with interior weights
    rng = np.random.default_rng(26)
    tree = random_tree(rng, 5, alpha_range=(0.5, 1.9))
    for _ in range(50):
        x = rng.uniform(0.05, 0.9, 5)
        base = tree.evaluate(x)
        j = rng.integers(0, 5)
        bumped = x.copy()
        bumped[j] = min(1.0, bumped[j] + 0.05)
        assert tree.evaluate(bumped) >= base - 1e-12


# ---------------------------------------------------------------------------
# simplify
# ---------------------------------------------------------------------------

def test_simplify_binary_preserves_semantics():
    rng = np.random.default_rng(27)
    for n in (2, 4, 7):
        tree = random_tree(rng, n)
        simplified = simplify(tree, code_merge=False)
        for _ in range(30):
            x = rng.random(n)
            values = dict(zip(tree.features, x))
            assert simplified.evaluate(values) == pytest.approx(
                tree.evaluate(x), abs=1e-12
            )


def test_simplify_uniform_chain_merges_to_one_node():
    tree = LspTree(("a", "b", "c", "d"), ((0.5, 0.5), (0.5, 0.5), (0.5, 0.5)))
    merged = simplify(tree, code_merge=True)
    assert isinstance(merged, SimplifiedNode)
    assert merged.operator == "A"
    assert len(merged.children) == 4
    assert [c.feature for c in merged.children] == ["a", "b", "c", "d"]
    # mean chain shares: deepest 0.125, then 0.125, 0.25, 0.5
    assert [round(c.weight, 3) for c in merged.children] == [0.125, 0.125, 0.25, 0.5]
    assert sum(c.weight for c in merged.children) == pytest.approx(1.0)


def test_simplify_mixed_codes_shape():
    # two disjunctive nodes then a hyper-conjunctive top: the top node
    # keeps the merged disjunctive group as its deepest child
    tree = LspTree(
        ("f1", "f2", "f3", "top"),
        ((0.5, 2 / 14), (0.5, 2 / 14), (0.5, 1.6)),
    )
    merged = simplify(tree, code_merge=True)
    assert merged.operator == "HHC"
    assert len(merged.children) == 2
    group, newcomer = merged.children
    assert isinstance(group, SimplifiedNode) and group.operator == "HD"
    assert [c.feature for c in group.children] == ["f1", "f2", "f3"]
    assert isinstance(newcomer, SimplifiedLeaf) and newcomer.feature == "top"


def test_simplify_alternating_codes_is_isomorphic():
    tree = LspTree(
        ("a", "b", "c", "d"),
        ((0.5, 0.5), (0.5, 1.25), (0.5, 0.5)),
    )
    merged = simplify(tree, code_merge=True)
    binary = simplify(tree, code_merge=False)

    def shape(node):
        if isinstance(node, SimplifiedLeaf):
            return node.feature
        return (node.operator, tuple(shape(c) for c in node.children))

    assert shape(merged) == shape(binary)


def test_merged_view_refuses_evaluation():
    tree = LspTree(("a", "b", "c"), ((0.5, 0.5), (0.5, 0.5)))
    merged = simplify(tree, code_merge=True)
    with pytest.raises(StateError):
        merged.evaluate({"a": 0.1, "b": 0.2, "c": 0.3})


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def test_to_json_keys_and_shape():
    tree = LspTree(("a", "b"), ((0.5, 0.5),))
    payload = json.loads(to_json(simplify(tree, code_merge=False)))
    assert payload == {
        "operator": "A",
        "children": [
            {"feature": "a", "weight": 0.5},
            {"feature": "b", "weight": 0.5},
        ],
    }


def test_json_only_contract_keys():
    rng = np.random.default_rng(28)
    tree = random_tree(rng, 6)
    payload = json.loads(to_json(simplify(tree, code_merge=True)))
    seen = set()

    def walk(node):
        seen.update(node.keys())
        for child in node.get("children", ()):
            walk(child)

    walk(payload)
    assert seen <= {"operator", "children", "feature", "weight"}


def test_json_round_trip():
    rng = np.random.default_rng(29)
    for n in (2, 5, 9):
        tree = random_tree(rng, n)
        for merge in (False, True):
            simplified = simplify(tree, code_merge=merge)
            text = to_json(simplified)
            parsed = from_json(text)
            assert structurally_equal(simplified, parsed)
            assert to_json(parsed) == text


def test_from_json_rejects_bad_documents():
    with pytest.raises(DomainError):
        from_json("{not json")
    with pytest.raises(DomainError):
        from_json(json.dumps({"operator": "A"}))
    with pytest.raises(DomainError):
        from_json(json.dumps({"operator": "XX", "children": [
            {"feature": "a", "weight": 1.0}, {"feature": "b", "weight": 0.0}]}))


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------

def _eval_expr(expr, values):
    return eval(expr, {"__builtins__": {}}, values)


def test_expression_mean_pair():
    tree = LspTree(("a", "b"), ((0.5, 0.5),))
    assert to_expression(tree) == "(0.5*x1 + 0.5*x2)"


def test_expression_product_reduction():
    tree = LspTree(("a", "b"), ((0.5, 1.25),))
    assert to_expression(tree) == "(x1*x2)"


def test_expression_matches_evaluate():
    rng = np.random.default_rng(30)
    for n in (2, 3, 6):
        for _ in range(5):
            tree = random_tree(rng, n)
            expr = to_expression(tree)
            for _ in range(20):
                x = rng.random(n)
                values = {f"x{i + 1}": x[i] for i in range(n)}
                assert _eval_expr(expr, values) == pytest.approx(
                    tree.evaluate(x), abs=1e-9
                )


def test_expression_handles_drastic_nodes():
    tree = LspTree(("a", "b"), ((0.5, 2.0),))
    expr = to_expression(tree)
    assert _eval_expr(expr, {"x1": 1.0, "x2": 1.0}) == 1.0
    assert _eval_expr(expr, {"x1": 1.0, "x2": 0.999}) == 0.0


def test_expression_variable_map():
    tree = LspTree(("alpha", "beta"), ((0.5, 0.5),))
    assert expression_variable_map(tree) == {"x1": "alpha", "x2": "beta"}


# ---------------------------------------------------------------------------
# report prompt
# ---------------------------------------------------------------------------

def test_report_prompt_sections():
    tree = LspTree(("a", "b", "c"), ((0.5, 1.6), (0.4, -0.6)))
    simplified = simplify(tree, code_merge=True)
    prompt = emit_report_prompt(simplified, "toy decision problem")
    for section in ("System", "Context", "Background", "Instructions", "Input"):
        assert f"{section}\n=" in prompt
    assert "toy decision problem" in prompt
    assert to_json(simplified) in prompt
    assert "| GCD |" in prompt
    assert "Drastic conjunction" in prompt and "Product t-conorm" in prompt


def test_report_prompt_empty_context():
    tree = LspTree(("a", "b"), ((0.5, 0.5),))
    prompt = emit_report_prompt(simplify(tree, code_merge=True), "")
    assert "Context\n=======\n\n" in prompt


def test_report_prompt_length_tracks_payload():
    t1 = LspTree(("a", "b"), ((0.5, 0.5),))
    t2 = LspTree(("a_longer_name", "b"), ((0.5, 0.5),))
    s1, s2 = simplify(t1), simplify(t2)
    p1, p2 = emit_report_prompt(s1, "ctx"), emit_report_prompt(s2, "ctx")
    assert len(p2) - len(p1) == len(to_json(s2)) - len(to_json(s1))
