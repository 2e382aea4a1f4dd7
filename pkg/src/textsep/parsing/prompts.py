"""Few-shot prompt assembly from curated exemplar files.

Exemplars live in versioned JSON files shipped as package data, one file
per task. Selection is deterministic: k shots means the first k curated
exemplars, so a (k+1)-shot prompt always extends the k-shot prompt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

from ..errors import InvalidInput

TASKS = ("source-parse", "knowledge-parse")

_TASK_FILES = {
    "source-parse": "source_parse_prompts.json",
    "knowledge-parse": "knowledge_parse_prompts.json",
}


@dataclass(frozen=True)
class Exemplar:
    input: str
    output: str


@dataclass(frozen=True)
class FewShotPrompt:
    task: str
    instruction: str
    exemplars: tuple
    k: int
    query: str = ""

    def with_query(self, query: str) -> "FewShotPrompt":
        return replace(self, query=query)


def load_prompt_file(task: str) -> dict:
    if task not in _TASK_FILES:
        raise InvalidInput(f"unknown prompt task {task!r}; expected one of {TASKS}")
    path = resources.files("textsep.parsing").joinpath("data", _TASK_FILES[task])
    data = json.loads(path.read_text())
    if len(data.get("exemplars", [])) < 5:
        raise InvalidInput(f"prompt file for {task!r} must ship >= 5 exemplars")
    return data


def build_fewshot_prompt(task: str, k: int = 5) -> FewShotPrompt:
    """First-k-exemplars prompt for a parsing task; 1 <= k <= exemplar count."""
    data = load_prompt_file(task)
    exemplars = data["exemplars"]
    if not 1 <= k <= len(exemplars):
        raise InvalidInput(
            f"k must be in [1, {len(exemplars)}] for task {task!r}, got {k}"
        )
    chosen = tuple(Exemplar(e["input"], e["output"]) for e in exemplars[:k])
    return FewShotPrompt(task=task, instruction=data["instruction"], exemplars=chosen, k=k)
