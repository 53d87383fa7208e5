import logging
from pathlib import Path
from typing import Any, Dict, Optional

from django.core.management.base import BaseCommand, CommandError, CommandParser

from djesg.config import RunConfig, load_run_config
from djesg.errors import EXIT_OK, DjesgError
from djesg.manifest import RunManifest
from djesg.scoring import SentimentFamily
from djesg.stages import RunStage

logger = logging.getLogger(__name__)


def command_error(error: DjesgError) -> CommandError:
    message = str(error)
    if error.details:
        message = f"{message}: {error.details}"
    return CommandError(message, returncode=error.exit_code)


class ConfigCommand(BaseCommand):
    """A command driven by a run config file plus command-line overrides."""

    requires_system_checks = []

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("config", help="run config JSON file")
        parser.add_argument("--seed", type=int, help="seed for every random draw of the run")
        parser.add_argument("--output-dir", help="directory for artifacts and the manifest")
        parser.add_argument("--iterations", type=int, help="retrofitting cycles")
        parser.add_argument("--level", type=float, help="significance level of the grid filters")
        parser.add_argument(
            "--family",
            action="append",
            choices=[family.value for family in SentimentFamily],
            help="sentiment family to run; repeat for both",
        )
        parser.add_argument(
            "--set",
            action="append",
            default=[],
            dest="assignments",
            metavar="KEY=VALUE",
            help="override any config key, e.g. --set imputation.donors=3",
        )

    def load_config(self, options: Dict[str, Any]) -> RunConfig:
        output_dir: Optional[str] = options.get("output_dir")
        overrides = {
            "seed": options.get("seed"),
            "output_dir": str(Path(output_dir).resolve()) if output_dir else None,
            "retrofit.iterations": options.get("iterations"),
            "significance_level": options.get("level"),
            "families": options.get("family"),
        }
        try:
            return load_run_config(options["config"], overrides, options.get("assignments") or ())
        except DjesgError as e:
            raise command_error(e)


class PipelineCommand(ConfigCommand):
    command_name: str
    stage: RunStage

    def handle(self, *args: Any, **options: Any) -> None:
        config = self.load_config(options)
        manifest = RunManifest(command=self.command_name, config_hash=config.config_hash, seed=config.seed)
        try:
            code = type(self).stage(config, manifest=manifest)
        finally:
            manifest.write(config.output_dir)

        if code != EXIT_OK:
            message = manifest.errors[-1]["message"] if manifest.errors else "failed"
            raise CommandError(f"{self.command_name}: {message}", returncode=code)

        self.stdout.write(f"{self.command_name}: artifacts written to {config.output_dir}")
