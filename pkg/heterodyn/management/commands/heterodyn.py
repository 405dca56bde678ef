"""
🧩 Management Command: heterodyn

Scenario-driven front end to the heterogeneous evolutionary dynamics engine.
Reads a scenario JSON file, applies command-line overrides, runs one command
and writes its artifacts.

### Commands:
- ``simulate``: trajectory.csv, diagnostics.csv, summary.json
- ``equilibrium``: equilibrium.json
- ``potential-check``: potential_check.json
- ``aggregability-demo``: aggregability.json
- ``assumptions``: assumptions.json

### Exit status:
- **0**: every requested check passed.
- **1**: the scenario could not be read or failed validation (all problems are listed).
- **2**: at least one requested check failed; artifacts and ``summary.json`` are still written.

### Example usage:
    python manage.py heterodyn simulate --config scenarios/entry_exit.json --out out/entry
    python manage.py heterodyn equilibrium --config scenarios/entry_exit.json --seed 7

"""

import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from heterodyn.exceptions import HeterodynError, ScenarioError
from heterodyn.serializers import apply_overrides, parse_scenario
from heterodyn.services import COMMANDS, run


class Command(BaseCommand):
    help = "Run a heterodyn scenario: simulate, equilibrium, potential-check, aggregability-demo or assumptions."
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('command', choices=COMMANDS, help='Pipeline to run')
        parser.add_argument('--config', required=True, help='Path to the scenario JSON file')
        parser.add_argument('--out', default=None, help='Artifact directory (overrides outputs.directory)')
        parser.add_argument('--seed', type=int, default=None, help='Overrides the scenario seed')
        parser.add_argument('--dt', type=float, default=None, help='Overrides integrator.dt')
        parser.add_argument('--t-end', type=float, default=None, dest='t_end', help='Overrides integrator.t_end')

    def handle(self, *args, **options):
        path = Path(options['config'])
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as exc:
            raise CommandError(f"❌ Cannot read scenario '{path}': {exc}") from exc

        try:
            config = apply_overrides(
                parse_scenario(text), seed=options['seed'], dt=options['dt'], t_end=options['t_end'],
            )
        except ScenarioError as exc:
            raise CommandError(str(exc)) from exc

        try:
            outcome = run(options['command'], config, options['out'])
        except OSError as exc:
            raise CommandError(f"❌ Cannot write artifacts: {exc}") from exc
        except HeterodynError as exc:
            raise CommandError(str(exc)) from exc

        for artifact in outcome.artifacts:
            self.stdout.write(f"  • {artifact}")
        if outcome.failures:
            self.stderr.write(json.dumps(outcome.failures, indent=2, default=str))
            raise CommandError(
                f"❌ {len(outcome.failures)} check(s) failed for '{config.name}': "
                + ', '.join(sorted({f['check'] for f in outcome.failures})),
                returncode=2,
            )
        self.stdout.write(self.style.SUCCESS(
            f"✅ '{options['command']}' on scenario '{config.name}' passed all requested checks."
        ))
