import pytest

from almkit.accounting import WhitespaceTokenizer
from almkit.engine import Runtime, Task
from almkit.model import ModelClient, ScriptedBackend
from almkit.prompting import Exemplar, default_exemplars, default_templates
from almkit.tools import FailureInjection, FixtureToolBackend, build_registry


@pytest.fixture
def tokenizer():
    return WhitespaceTokenizer()


@pytest.fixture
def small_exemplar():
    return Exemplar(
        question="What is two plus two?",
        planner_demo="Plan: Add the numbers.\n#E1 = Calculator[2 + 2]",
        tao_demo="Thought: I can add directly.\nAction: Calculator[2 + 2]\nObservation: 4\nThought: I now know the final answer.\nAction: Finish[4]",
        source_tag="unit",
    )


def make_runtime(script, toolset=("Calculator", "LLM"), exemplars=None,
                 tool_fixtures=None, injection=None, templates=None, **client_args):
    """Runtime wired to a scripted model; default tools are hermetic."""
    client = ModelClient(
        backend=ScriptedBackend(script),
        tokenizer=WhitespaceTokenizer(),
        **client_args,
    )
    backend = FixtureToolBackend(tool_fixtures or {})
    return Runtime(
        model=client,
        registry=build_registry(list(toolset), fixture_backend=backend),
        templates=templates or default_templates(),
        exemplar_sets={"default": exemplars if exemplars is not None else default_exemplars()},
        injection=injection or FailureInjection.off(),
    )


def make_task(question="What is the answer?", toolset=("Calculator", "LLM"), task_id="t1"):
    return Task(id=task_id, question=question, toolset=tuple(toolset))


@pytest.fixture
def runtime_factory():
    return make_runtime


@pytest.fixture
def task_factory():
    return make_task
