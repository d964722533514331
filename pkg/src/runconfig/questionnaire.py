#!/usr/bin/env python3
"""
Run Configuration Questionnaire
Field table for experiment configs: parses key=value files and, interactively,
asks for a new one
"""

import math
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import yaml

from composition.exceptions import ConfigurationError
from composition.problem import CONSTANT_NAMES, DEFAULT_REGION, ProblemSpec
from composition.sampling import SamplingMode
from composition.solver import ALGORITHMS

PROBLEM_KINDS = ["lcq_reference", "lcq", "mean_variance", "nonconvex"]
SCHEDULE_MODES = ["auto", "convex", "nonconvex"]
SCHEDULE_OVERRIDES = ("A", "D", "K", "S", "eta", "h")
U64 = 2 ** 64


def _coerce_scalar(kind: str, value: Any) -> Any:
    # YAML 1.1 leaves exponent literals without a dot (1e-4) as strings
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if kind == "float":
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ValueError(f"expected a number, got {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ValueError(f"expected a finite number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"expected true or false, got {value!r}")
        return value
    return str(value)


def _positive(x) -> bool:
    return x > 0


def _positive_list(xs) -> bool:
    return len(xs) > 0 and all(x > 0 for x in xs)


class Question:
    """One configuration key: its type, default, validator and prompt text"""

    def __init__(self,
                 key: str,
                 text: str,
                 question_type: str,
                 options: Optional[List[str]] = None,
                 default: Any = None,
                 validator: Optional[Callable[[Any], bool]] = None,
                 depends_on: Optional[Dict[str, Any]] = None,
                 interactive: bool = False):
        self.key = key
        self.text = text
        self.question_type = question_type
        self.options = options
        self.default = default
        self.validator = validator
        self.depends_on = depends_on
        self.interactive = interactive


class RunConfig:
    """Effective configuration: every key with its value and where it came from"""

    def __init__(self, values: Dict[str, Any], sources: Dict[str, str]):
        self.values = values
        self.sources = sources

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def set(self, key: str, value: Any, source: str = "flag"):
        self.values[key] = value
        self.sources[key] = source

    def problem_spec(self) -> ProblemSpec:
        return ProblemSpec(
            kind=self["problem.kind"], n=self["problem.n"], dim_x=self["problem.dim_x"],
            dim_w=self["problem.dim_w"], seed=self["problem.seed"],
            beta=float(self["problem.beta"]), lam=float(self["problem.lambda"]),
            region=float(self["problem.region"]),
        )

    def schedule_overrides(self) -> Dict[str, Any]:
        overrides = {name: self[f"schedule.{name}"] for name in SCHEDULE_OVERRIDES
                     if self.get(f"schedule.{name}") is not None}
        if self.sources.get("schedule.sampling_mode") != "default":
            overrides["sampling_mode"] = self["schedule.sampling_mode"]
        if self.sources.get("schedule.full_cover") != "default":
            overrides["full_cover"] = self["schedule.full_cover"]
        if self["schedule.enumerate_pairs"]:
            overrides["enumerate_pairs"] = True
        return overrides

    def constant_overrides(self) -> Dict[str, float]:
        return {name: float(self[f"constants.{name}"]) for name in CONSTANT_NAMES
                if self.get(f"constants.{name}") is not None}

    def effective(self) -> List[Tuple[str, Any, str]]:
        return [(key, self.values[key], self.sources[key]) for key in sorted(self.values)]


class Questionnaire:
    """Experiment configuration: file parsing and the interactive `configure` flow"""

    def __init__(self):
        self.answers: Dict[str, Any] = {}
        self.questions = self._initialize_questions()
        self.by_key = {q.key: q for q in self.questions}

    def _initialize_questions(self) -> List[Question]:
        """Every recognised key"""
        questions = [
            # Problem
            Question(
                key="problem.kind",
                text="Which problem instance should be built?",
                question_type="choice",
                options=PROBLEM_KINDS,
                default="lcq_reference",
                interactive=True
            ),
            Question(
                key="problem.n",
                text="Number of components n",
                question_type="int",
                default=10,
                validator=_positive,
                interactive=True
            ),
            Question(
                key="problem.dim_x",
                text="Decision dimension N",
                question_type="int",
                default=3,
                validator=_positive,
                interactive=True
            ),
            Question(
                key="problem.dim_w",
                text="Inner output dimension M",
                question_type="int",
                default=3,
                validator=_positive,
                depends_on={"problem.kind": ["lcq", "nonconvex"]},
                interactive=True
            ),
            Question(
                key="problem.seed",
                text="Seed for the generated instance",
                question_type="int",
                default=7,
                validator=lambda x: 0 <= x < U64,
                interactive=True
            ),
            Question(
                key="problem.beta",
                text="Sine perturbation strength beta",
                question_type="float",
                default=0.5,
                validator=lambda x: x >= 0,
                depends_on={"problem.kind": ["nonconvex"]},
                interactive=True
            ),
            Question(
                key="problem.lambda",
                text="Variance weight lambda",
                question_type="float",
                default=1.0,
                validator=lambda x: x >= 0,
                depends_on={"problem.kind": ["mean_variance"]},
                interactive=True
            ),
            Question(
                key="problem.region",
                text="Half-width R of the box |x|_inf <= R used for the constants",
                question_type="float",
                default=DEFAULT_REGION,
                validator=_positive
            ),

            # Algorithm and schedule
            Question(
                key="algorithm",
                text="Which algorithm should run?",
                question_type="choice",
                options=list(ALGORITHMS),
                default="scscg",
                interactive=True
            ),
            Question(
                key="schedule.mode",
                text="Schedule family (auto picks convex when mu > 0)",
                question_type="choice",
                options=SCHEDULE_MODES,
                default="auto"
            ),
            Question(
                key="schedule.epsilon",
                text="Target accuracy epsilon",
                question_type="float",
                default=1e-4,
                validator=_positive,
                interactive=True
            ),
            Question(
                key="schedule.b",
                text="Mini-batch size b",
                question_type="int",
                default=1,
                validator=_positive,
                interactive=True
            ),
            Question(key="schedule.x0_gap", text="Estimate of ||x0 - x*||^2",
                     question_type="float", validator=_positive),
            Question(key="schedule.c_A", text="Hidden constant of A (non-convex)",
                     question_type="float", default=1.0, validator=_positive),
            Question(key="schedule.c_D", text="Hidden constant of D (non-convex)",
                     question_type="float", default=1.0, validator=_positive),
            Question(key="schedule.c_T", text="Hidden constant of T (non-convex)",
                     question_type="float", default=1.0, validator=_positive),
            Question(key="schedule.sampling_mode", text="Index sampling mode",
                     question_type="choice", options=[m.value for m in SamplingMode],
                     default=SamplingMode.WITH_REPLACEMENT.value),
            Question(key="schedule.full_cover", text="Realise sizes >= n as exact covers",
                     question_type="bool", default=True),
            Question(key="schedule.enumerate_pairs", text="Use every (i, j) once per step",
                     question_type="bool", default=False),

            # Run
            Question(
                key="run.master_seed",
                text="Master seed",
                question_type="int",
                default=0,
                validator=lambda x: 0 <= x < U64,
                interactive=True
            ),
            Question(key="run.repetitions", text="Repetitions", question_type="int",
                     default=1, validator=_positive),
            Question(key="run.fixed_seed", text="Reuse the master seed for every repetition",
                     question_type="bool", default=False),
            Question(key="run.iteration_trace", text="Record every inner iteration",
                     question_type="bool", default=False),
            Question(key="output.path", text="Output CSV path", question_type="text",
                     default="trace.csv", interactive=True),
            Question(key="log_file", text="Optional log file", question_type="text"),

            # Verify
            Question(key="verify.grid", text="Batch sizes for A, D and b (default 1, n/2, n)",
                     question_type="list[int]", validator=_positive_list),
            Question(key="verify.x_k", text="Point x_k (default all ones)",
                     question_type="list[float]"),
            Question(key="verify.x_tilde", text="Anchor x~ (default all zeros)",
                     question_type="list[float]"),
            Question(key="verify.samples", text="Monte Carlo resamples", question_type="int",
                     default=10000, validator=lambda x: x >= 2),
            Question(key="verify.oracle_points", text="Finite-difference test points",
                     question_type="int", default=100, validator=_positive),

            # Sweep
            Question(key="sweep.algorithms", text="Algorithms to sweep", question_type="list[text]",
                     default=["scscg_minibatch"],
                     validator=lambda xs: len(xs) > 0 and all(x in ALGORITHMS for x in xs)),
            Question(key="sweep.n", text="Component counts to sweep", question_type="list[int]",
                     validator=_positive_list),
            Question(key="sweep.epsilon", text="Targets to sweep", question_type="list[float]",
                     validator=_positive_list),
            Question(key="sweep.b", text="Mini-batch sizes to sweep", question_type="list[int]",
                     default=[1], validator=_positive_list),
            Question(key="sweep.repetitions", text="Repetitions per cell", question_type="int",
                     default=5, validator=_positive),
        ]
        for name in SCHEDULE_OVERRIDES:
            questions.append(Question(
                key=f"schedule.{name}", text=f"Override for {name}",
                question_type="float" if name in ("eta", "h") else "int",
                validator=lambda x: x >= 0,
            ))
        for name in CONSTANT_NAMES:
            questions.append(Question(
                key=f"constants.{name}", text=f"Override for the constant {name}",
                question_type="float", validator=lambda x: x >= 0,
            ))
        return questions

    def _should_ask_question(self, question: Question) -> bool:
        """Check the question's dependencies against the answers so far"""
        if not question.depends_on:
            return True
        for key, allowed in question.depends_on.items():
            if self.answers.get(key, self.by_key[key].default) not in allowed:
                return False
        return True

    def _validate_answer(self, question: Question, answer: Any) -> Tuple[bool, str]:
        if answer is None:
            return True, ""
        if question.question_type == "choice" and answer not in question.options:
            return False, f"expected one of {', '.join(question.options)}"
        if question.validator:
            try:
                if question.validator(answer):
                    return True, ""
                return False, f"invalid value {answer!r}"
            except Exception as e:
                return False, str(e)
        return True, ""

    def _coerce(self, question: Question, value: Any) -> Any:
        """Bring a yaml-typed value to the question's type"""
        if value is None:
            return None
        kind = question.question_type
        if kind.startswith("list["):
            items = value if isinstance(value, (list, tuple)) else [value]
            return [_coerce_scalar(kind[5:-1], item) for item in items]
        return _coerce_scalar(kind, value)

    def defaults(self) -> Dict[str, Any]:
        return {q.key: q.default for q in self.questions}

    def parse(self, text: str) -> RunConfig:
        """Parse key=value lines; '#' starts a comment"""
        values = self.defaults()
        sources = {key: "default" for key in values}
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"expected key=value, got '{line}'", line=number)
            key, raw_value = (part.strip() for part in line.split("=", 1))
            question = self.by_key.get(key)
            if question is None:
                raise ConfigurationError(f"unknown key '{key}'", line=number)
            try:
                parsed = yaml.safe_load(raw_value) if raw_value else None
                value = self._coerce(question, parsed)
            except (yaml.YAMLError, ValueError) as e:
                raise ConfigurationError(f"{key}: {e}", line=number)
            valid, error = self._validate_answer(question, value)
            if not valid:
                raise ConfigurationError(f"{key}: {error}", line=number)
            values[key] = value
            sources[key] = "file"
        return RunConfig(values, sources)

    def load(self, path: Optional[str]) -> RunConfig:
        if path is None:
            return self.parse("")
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            return self.parse(f.read())

    def ask_question(self, question: Question) -> Any:
        """Prompt for one answer until it validates"""
        while True:
            if question.question_type == "choice":
                click.echo(f"\n{question.text}")
                for i, option in enumerate(question.options, 1):
                    click.echo(f"  {i}. {option}")
                choice = click.prompt("Select an option", type=int,
                                      default=question.options.index(question.default) + 1)
                if not 1 <= choice <= len(question.options):
                    click.echo("Invalid choice. Please try again.", err=True)
                    continue
                return question.options[choice - 1]
            if question.question_type == "bool":
                return click.confirm(question.text, default=question.default)
            prompt_type = {"int": int, "float": float}.get(question.question_type, str)
            answer = click.prompt(question.text, default=question.default, type=prompt_type)
            valid, error = self._validate_answer(question, answer)
            if valid:
                return answer
            click.echo(f"Error: {error}", err=True)

    def run(self) -> Dict[str, Any]:
        """Ask the interactive questions and return the answers"""
        click.echo("=" * 60)
        click.echo("   Composition Experiment - Interactive Configuration")
        click.echo("=" * 60)
        click.echo("Press Ctrl+C at any time to cancel.\n")
        for question in self.questions:
            if question.interactive and self._should_ask_question(question):
                self.answers[question.key] = self.ask_question(question)
        return self.answers

    def render(self, answers: Optional[Dict[str, Any]] = None) -> str:
        """key=value text for the given answers, in field-table order"""
        answers = self.answers if answers is None else answers
        lines = ["# experiment configuration"]
        for question in self.questions:
            if question.key in answers:
                value = answers[question.key]
                if isinstance(value, bool):
                    value = "true" if value else "false"
                lines.append(f"{question.key}={value}")
        return "\n".join(lines) + "\n"
