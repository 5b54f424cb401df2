import pytest
from hypothesis import given, strategies as st

from almkit import fixtures
from almkit.blueprint import (
    Blueprint,
    EvidenceVarId,
    PlanStep,
    build_dep_graph,
    parse_blueprint,
    render_blueprint,
    split_tool_call,
)
from almkit.errors import (
    BadToolSyntax,
    DuplicateVar,
    ForwardReference,
    MalformedStep,
    UndefinedReference,
)

ROCKETEER_SINGLE = "Plan: Search for more information about Jon Raymond Polito.\n#E1 = Wikipedia[Jon Raymond Polito]"


def test_parse_single_step():
    bp = parse_blueprint(ROCKETEER_SINGLE)
    assert len(bp.steps) == 1
    step = bp.steps[0]
    assert step.var == EvidenceVarId(1)
    assert step.tool_name == "Wikipedia"
    assert step.tool_input == "Jon Raymond Polito"
    assert step.description == "Search for more information about Jon Raymond Polito."


def test_parse_empty_text():
    assert parse_blueprint("", mode="strict").steps == []


def test_parse_four_step_trajectory():
    bp = fixtures.load_bundle("hotpotqa_rocketeer").blueprint()
    assert [str(s.var) for s in bp.steps] == ["#E1", "#E2", "#E3", "#E4"]
    assert [s.tool_name for s in bp.steps] == ["Wikipedia", "LLM", "Wikipedia", "LLM"]
    assert "#E1" in bp.steps[1].tool_input


def test_var_id_validation():
    with pytest.raises(ValueError):
        EvidenceVarId(0)
    assert str(EvidenceVarId(12)) == "#E12"


def test_multi_line_description_accumulates():
    text = "Plan: First line of the plan\nthat wraps onto a second line.\n#E1 = LLM[do it]"
    bp = parse_blueprint(text, mode="strict")
    assert bp.steps[0].description == "First line of the plan\nthat wraps onto a second line."


def test_statement_spanning_lines():
    text = "Plan: Send a note.\n#E1 = Email[to@example.com; hello;\nbody line one\nbody line two ]"
    bp = parse_blueprint(text, mode="strict")
    assert bp.steps[0].tool_input == "to@example.com; hello;\nbody line one\nbody line two"


def test_input_with_inner_brackets_uses_last_bracket():
    name, arg = split_tool_call("Email[a; b; Best regards, [Name] ]")
    assert name == "Email"
    assert arg == "a; b; Best regards, [Name]"


def test_empty_tool_input():
    bp = parse_blueprint("Plan: Where am I?\n#E1 = Location[]", mode="strict")
    assert bp.steps[0].tool_input == ""


def test_strict_plan_without_assignment():
    with pytest.raises(MalformedStep):
        parse_blueprint("Plan: do something", mode="strict")


def test_strict_assignment_without_plan():
    with pytest.raises(MalformedStep):
        parse_blueprint("#E1 = LLM[hi]", mode="strict")


def test_strict_duplicate_var():
    text = "Plan: a\n#E1 = LLM[x]\nPlan: b\n#E1 = LLM[y]"
    with pytest.raises(DuplicateVar):
        parse_blueprint(text, mode="strict")


def test_strict_bad_tool_syntax():
    with pytest.raises(BadToolSyntax):
        parse_blueprint("Plan: a\n#E1 = not a tool call", mode="strict")


def test_lenient_recovers_good_steps():
    text = (
        "Here is my plan:\n"
        "Plan: orphaned plan with no assignment\n"
        "Plan: good step\n#E1 = LLM[query]\n"
        "#E2 = broken syntax\n"
        "Plan: another good one\n#E3 = Calculator[1 + 1]\n"
    )
    warnings = []
    bp = parse_blueprint(text, mode="lenient", warnings=warnings)
    assert [str(s.var) for s in bp.steps] == ["#E1", "#E3"]
    assert len(warnings) == 3


def test_lenient_is_total_on_junk():
    bp = parse_blueprint("complete nonsense\nwith no structure", mode="lenient")
    assert bp.steps == []


def test_non_contiguous_numbering_accepted():
    bp = parse_blueprint("Plan: a\n#E2 = LLM[x]\n\nPlan: b\n#E9 = LLM[given #E2]", mode="strict")
    graph = build_dep_graph(bp)
    assert graph.edges[EvidenceVarId(9)] == {EvidenceVarId(2)}


def test_dep_graph_four_step():
    bp = fixtures.load_bundle("hotpotqa_rocketeer").blueprint()
    graph = build_dep_graph(bp)
    e = EvidenceVarId
    assert graph.edges[e(1)] == set()
    assert graph.edges[e(2)] == {e(1)}
    assert graph.edges[e(3)] == {e(2)}
    assert graph.edges[e(4)] == {e(2), e(3)}
    assert graph.topo_order == [e(1), e(2), e(3), e(4)]


def test_dep_graph_single_independent_step():
    bp = parse_blueprint("Plan: a\n#E1 = LLM[x]", mode="strict")
    graph = build_dep_graph(bp)
    assert graph.edges[EvidenceVarId(1)] == set()
    assert graph.topo_order == [EvidenceVarId(1)]


def test_forward_reference_rejected():
    bp = parse_blueprint("Plan: a\n#E1 = T[#E2]\n\nPlan: b\n#E2 = T[x]", mode="strict")
    with pytest.raises(ForwardReference):
        build_dep_graph(bp)


def test_undefined_reference_rejected():
    bp = parse_blueprint("Plan: a\n#E1 = T[#E7]", mode="strict")
    with pytest.raises(UndefinedReference):
        build_dep_graph(bp)


def test_waves_group_independent_steps():
    text = (
        "Plan: a\n#E1 = LLM[x]\n\n"
        "Plan: b\n#E2 = LLM[y]\n\n"
        "Plan: c\n#E3 = LLM[#E1 and #E2]"
    )
    graph = build_dep_graph(parse_blueprint(text, mode="strict"))
    assert graph.waves() == [[EvidenceVarId(1), EvidenceVarId(2)], [EvidenceVarId(3)]]


def test_reference_matching_is_maximal_munch():
    step = PlanStep("d", EvidenceVarId(13), "LLM", "use #E12 here")
    assert step.references() == [EvidenceVarId(12)]


def test_render_empty_blueprint():
    assert render_blueprint(Blueprint()) == ""


def test_render_round_trip_calculator_plan():
    bp = fixtures.load_bundle("gsm8k_birds").blueprint()
    assert len(bp.steps) == 4
    assert all(s.tool_name == "Calculator" for s in bp.steps)
    assert parse_blueprint(render_blueprint(bp), mode="strict") == bp


@pytest.mark.parametrize("name", fixtures.list_bundles())
def test_round_trip_every_bundled_fixture(name):
    first = fixtures.load_bundle(name).blueprint()
    again = parse_blueprint(render_blueprint(first), mode="strict")
    assert parse_blueprint(render_blueprint(again), mode="strict") == first


_ident = st.from_regex(r"[A-Za-z][A-Za-z0-9]{0,8}", fullmatch=True)
_desc = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")),
    min_size=1, max_size=40,
).map(lambda s: " ".join(s.split())).filter(
    lambda s: s and not s.startswith("#E") and not s.startswith("Plan:"))
_input = _desc.filter(lambda s: "[" not in s and "]" not in s)


@given(st.lists(st.tuples(_desc, _ident, _input), min_size=1, max_size=6))
def test_property_render_parse_round_trip(rows):
    steps = [PlanStep(desc, EvidenceVarId(i + 1), tool, arg)
             for i, (desc, tool, arg) in enumerate(rows)]
    bp = Blueprint(steps=steps)
    assert parse_blueprint(render_blueprint(bp), mode="strict") == bp


@given(st.text(max_size=400))
def test_property_lenient_parser_total_on_arbitrary_text(text):
    warnings = []
    bp = parse_blueprint(text, mode="lenient", warnings=warnings)
    assert isinstance(bp.steps, list)
    for step in bp.steps:
        assert step.description
        assert step.var.index >= 1
