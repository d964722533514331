#!/usr/bin/env python3
"""
Main Orchestrator for Composition Experiments
Coordinates problem building, schedules, runs, verification and sweeps behind
one command-line interface
"""

import logging
import os
import sys
from typing import Any, Dict, List, Optional

import click
from tabulate import tabulate

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from agents.lemma_auditor import VERIFY_COLUMNS, LemmaAuditor
from agents.sweep_analyzer import SWEEP_COLUMNS, SweepAnalyzer
from composition import __version__
from composition.exceptions import (
    CompositionError, ConfigurationError, DivergenceError, ScheduleError,
)
from composition.ledger import corollary_epoch_cost, epoch_cost
from composition.problem import CompositionProblem
from composition.schedule import Schedule, derive_schedule
from composition.solver import ALGORITHMS, run_algorithm
from src.runconfig.configurator import Configurator, rep_path
from src.runconfig.questionnaire import U64, Questionnaire, RunConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DIVERGED = 2


class ExperimentOrchestrator:
    """Runs one configured experiment end to end"""

    def __init__(self, config: RunConfig, verbose: bool = False):
        self.config = config
        self.verbose = verbose
        self.setup_logging()
        self.configurator = Configurator(config.effective())
        self.results: Dict[str, Any] = {
            'problem': None,
            'schedule': None,
            'runs': [],
            'verification': None,
            'sweep': None,
        }

    def setup_logging(self):
        """Setup logging configuration"""
        log_level = logging.DEBUG if self.verbose else logging.INFO
        handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
        if self.config.get("log_file"):
            handlers.append(logging.FileHandler(self.config["log_file"]))
        logging.basicConfig(
            level=log_level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            handlers=handlers,
            force=True
        )
        self.logger = logging.getLogger('ExperimentOrchestrator')

    def print_banner(self):
        """Print welcome banner"""
        banner = f"""
╔═══════════════════════════════════════════════════════════════╗
║              Composition Optimisation Lab v{__version__:<19}║
║                                                               ║
║  Subsampled-anchor variance reduction for F(G(x)) objectives  ║
╚═══════════════════════════════════════════════════════════════╝
        """
        click.echo(banner)

    def build_problem(self) -> CompositionProblem:
        """Build the configured instance and apply constant overrides"""
        problem = self.config.problem_spec().build()
        overrides = self.config.constant_overrides()
        if overrides:
            self.logger.warning(f"overriding problem constants: {overrides}")
            problem.constants = problem.constants.with_values(**overrides)
        self.results['problem'] = problem.describe()
        return problem

    def build_schedule(self, problem: CompositionProblem) -> Schedule:
        """Corollary schedule with the configured overrides"""
        c = self.config
        schedule = derive_schedule(
            problem, c["schedule.epsilon"], b=c["schedule.b"], mode=c["schedule.mode"],
            c_A=c["schedule.c_A"], c_D=c["schedule.c_D"], c_T=c["schedule.c_T"],
            x0_gap=c["schedule.x0_gap"], overrides=c.schedule_overrides(),
        )
        self.results['schedule'] = schedule.effective()
        return schedule

    def _phase(self, label: str, action, *args):
        click.echo(f"\n{label}")
        try:
            result = action(*args)
        except CompositionError as e:
            self.logger.error(f"{label.split('] ', 1)[-1]} failed: {e}")
            click.echo(f"✗ {e}")
            raise
        click.echo("✓ done")
        return result

    def run_experiment(self) -> List[Dict[str, Any]]:
        """Build, schedule and run every repetition, writing one trace each"""
        c = self.config
        algorithm = c["algorithm"]
        if algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm '{algorithm}'")

        problem = self._phase("[1/3] Building problem...", self.build_problem)
        schedule = self._phase("[2/3] Deriving schedule...", self.build_schedule, problem)
        click.echo("\n[3/3] Running algorithm...")

        repetitions = c["run.repetitions"]
        for rep in range(repetitions):
            seed = c["run.master_seed"] if c["run.fixed_seed"] else c["run.master_seed"] + rep
            try:
                _, trace = run_algorithm(algorithm, problem, schedule, seed,
                                         verbose=c["run.iteration_trace"])
            except DivergenceError as e:
                self.logger.error(f"repetition {rep} diverged: {e}")
                click.echo(f"✗ repetition {rep}: {e}")
                raise
            path = rep_path(c["output.path"], rep, repetitions)
            self.configurator.write_trace(path, trace, problem, seed,
                                          include_iterations=c["run.iteration_trace"])
            last = trace.epochs[-1]
            used = trace.schedule
            self.results['runs'].append({
                "rep": rep, "seed": seed, "epochs": len(trace.epochs),
                "f_value": last.f_value, "grad_norm_sq": last.grad_norm_sq,
                "dist_sq_opt": last.dist_sq_opt, "paper_queries": last.paper_queries,
                "ledger_ok": (
                    last.paper_queries == used.S * epoch_cost(used.D, used.K, used.A, used.b)
                    and last.paper_queries_corollary
                    == used.S * corollary_epoch_cost(used.D, used.K, used.A)
                ),
                "path": path,
            })
            click.echo(f"✓ repetition {rep} (seed {seed}) -> {path}")
        return self.results['runs']

    def display_run_summary(self):
        """Display one line per repetition"""
        click.echo("\n" + "=" * 60)
        click.echo("RUN SUMMARY")
        click.echo("=" * 60)
        click.echo(f"\nProblem: {self.results['problem']}")
        schedule = self.results['schedule'] or {}
        click.echo("Schedule: " + " ".join(f"{k}={schedule.get(k)}"
                                           for k in ("mode", "A", "D", "K", "S", "b", "eta")))
        rows = [[r["rep"], r["seed"], r["epochs"], r["f_value"], r["grad_norm_sq"],
                 r["dist_sq_opt"], r["paper_queries"], "✓" if r["ledger_ok"] else "✗"]
                for r in self.results['runs']]
        click.echo("\n" + tabulate(rows, headers=["rep", "seed", "epochs", "f", "|grad|^2",
                                                  "dist^2", "queries", "ledger"]))
        click.echo("\n" + "=" * 60)

    def run_verification(self) -> bool:
        """Audit the configured problem and write the verification CSV"""
        c = self.config
        problem = self._phase("[1/2] Building problem...", self.build_problem)
        click.echo("\n[2/2] Auditing estimators and oracles...")
        auditor = LemmaAuditor(problem, grid=c["verify.grid"], x_k=c["verify.x_k"],
                               x_tilde=c["verify.x_tilde"], samples=c["verify.samples"],
                               oracle_points=c["verify.oracle_points"],
                               seed=c["run.master_seed"])
        audit = auditor.run_full_audit()
        self.results['verification'] = audit
        path = self.configurator.write_verification(
            c["output.path"], audit["rows"], problem, VERIFY_COLUMNS, audit["warnings"])
        click.echo(f"✓ {auditor.passed_checks}/{auditor.total_checks} checks passed -> {path}")
        return auditor.all_passed

    def display_verification_summary(self):
        audit = self.results['verification']
        click.echo("\n" + "=" * 60)
        click.echo("VERIFICATION SUMMARY")
        click.echo("=" * 60)
        click.echo(f"\nScore: {audit['score']}/100")
        if audit["failures"]:
            click.echo("\nFailed checks:")
            rows = [[r["lemma"], r["A"], r["D"], r["b"], r["empirical"], r["bound"]]
                    for r in audit["failures"]]
            click.echo(tabulate(rows, headers=["check", "A", "D", "b", "value", "bound"]))
        for warning in audit["warnings"]:
            click.echo(f"  warning: {warning}")
        click.echo("\n" + "=" * 60)

    def run_sweep(self) -> Dict[str, Any]:
        """Run the configured sweep grid and write its summary CSV"""
        c = self.config
        base = c.problem_spec()
        analyzer = SweepAnalyzer(
            base, algorithms=c["sweep.algorithms"], n_values=c["sweep.n"],
            epsilons=c["sweep.epsilon"] or [c["schedule.epsilon"]],
            batch_sizes=c["sweep.b"], repetitions=c["sweep.repetitions"],
            master_seed=c["run.master_seed"], mode=c["schedule.mode"],
            c_A=c["schedule.c_A"], c_D=c["schedule.c_D"], c_T=c["schedule.c_T"],
            overrides=c.schedule_overrides(),
        )
        sweep = self._phase("[1/1] Sweeping grid...", analyzer.run_full_sweep)
        self.results['sweep'] = sweep
        self.configurator.write_sweep(c["output.path"], sweep["cells"], SWEEP_COLUMNS,
                                      problem_text=base.to_text())
        return sweep

    def display_sweep_summary(self):
        sweep = self.results['sweep']
        click.echo("\n" + "=" * 60)
        click.echo("SWEEP SUMMARY")
        click.echo("=" * 60 + "\n")
        rows = [[r["algorithm"], r["n"], r["epsilon"], r["b"], r["median_queries"],
                 f"{r['censored']}/{r['repetitions']}", r["complexity_order"]]
                for r in sweep["cells"]]
        click.echo(tabulate(rows, headers=["algorithm", "n", "epsilon", "b", "median queries",
                                           "censored", "order"]))
        click.echo(f"\nTotal queries across all runs: {sweep['summary']['total_queries']} "
                   f"({sweep['summary']['total_raw_queries']} raw oracle calls)")
        click.echo("\n" + "=" * 60)


def load_config(config_path: Optional[str], out: Optional[str], seed: Optional[int]) -> RunConfig:
    """Config file with command-line flags layered on top"""
    config = Questionnaire().load(config_path)
    if out is not None:
        config.set("output.path", out)
    if seed is not None:
        config.set("run.master_seed", seed)
    return config


def common_options(command):
    command = click.option('-v', '--verbose', is_flag=True, help='Enable verbose output')(command)
    command = click.option('--seed', type=click.IntRange(0, U64 - 1),
                           help='Master seed (overrides run.master_seed)')(command)
    command = click.option('--out', type=click.Path(dir_okay=False),
                           help='Output CSV path (overrides output.path)')(command)
    command = click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                           help='key=value configuration file')(command)
    return command


def _fail(message: str, code: int = EXIT_ERROR):
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


def _prepare(config_path, out, seed, verbose) -> ExperimentOrchestrator:
    try:
        config = load_config(config_path, out, seed)
    except ConfigurationError as e:
        _fail(str(e))
    orchestrator = ExperimentOrchestrator(config, verbose=verbose)
    orchestrator.print_banner()
    return orchestrator


@click.group()
@click.version_option(__version__, prog_name="composition-lab")
def main():
    """Composition optimisation experiments: configure, run, verify, sweep"""


@main.command()
@click.option('--out', default="experiment.conf", type=click.Path(dir_okay=False),
              help='Where to write the configuration')
def configure(out):
    """Interactively write a configuration file"""
    questionnaire = Questionnaire()
    try:
        answers = questionnaire.run()
    except click.Abort:
        click.echo("\nConfiguration cancelled by user")
        sys.exit(EXIT_ERROR)
    with open(out, "w", encoding="utf-8") as f:
        f.write(questionnaire.render(answers))
    click.echo(f"\n✓ Configuration written to {out}")


@main.command()
@common_options
def run(config_path, out, seed, verbose):
    """Run the configured algorithm and write trace CSVs"""
    orchestrator = _prepare(config_path, out, seed, verbose)
    try:
        orchestrator.run_experiment()
    except DivergenceError as e:
        _fail(str(e), EXIT_DIVERGED)
    except (ConfigurationError, ScheduleError) as e:
        _fail(str(e))
    orchestrator.display_run_summary()
    sys.exit(EXIT_OK)


@main.command()
@common_options
def verify(config_path, out, seed, verbose):
    """Check the variance identities, estimator bounds and oracles"""
    orchestrator = _prepare(config_path, out, seed, verbose)
    try:
        passed = orchestrator.run_verification()
    except CompositionError as e:
        _fail(str(e))
    orchestrator.display_verification_summary()
    sys.exit(EXIT_OK if passed else EXIT_ERROR)


@main.command()
@common_options
def sweep(config_path, out, seed, verbose):
    """Measure queries-to-target over an (algorithm, n, epsilon, b) grid"""
    orchestrator = _prepare(config_path, out, seed, verbose)
    try:
        orchestrator.run_sweep()
    except CompositionError as e:
        _fail(str(e))
    orchestrator.display_sweep_summary()
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
