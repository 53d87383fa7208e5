from pathlib import Path
from typing import Any

from django.core.management.base import BaseCommand, CommandError, CommandParser

from djesg.artifacts import canonical_hash
from djesg.errors import EXIT_OK, DjesgError
from djesg.management.base import command_error
from djesg.manifest import RunManifest
from djesg.pipeline import synth_command
from djesg.synth import DEFAULT_EFFECT, MIN_YEARS, SynthConfig, load_planted_effects


class Command(BaseCommand):
    help = (
        "Write a synthetic dataset (embeddings, lexicon, headlines, ESG, prices, FX, aliases) "
        "whose returns follow a planted ESG x Sentiment model, plus a runnable config."
    )
    requires_system_checks = []

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("output_dir", help="directory to write the dataset into")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--firms", type=int, default=5, dest="n_firms")
        parser.add_argument("--years", type=int, default=13, dest="n_years", help=f"at least {MIN_YEARS}")
        parser.add_argument("--start-year", type=int, default=2010)
        parser.add_argument("--noise-sd", type=float, default=0.0)
        parser.add_argument("--dimension", type=int, default=10, help="embedding dimension")
        parser.add_argument(
            "--planted",
            help=(
                "JSON list of planted effects with ticker ('*' for every firm), esg_column, "
                f"sentiment_column, alpha, beta1, beta2, beta3; default plants {DEFAULT_EFFECT.coefficients}"
            ),
        )

    def handle(self, *args: Any, **options: Any) -> None:
        output_dir = Path(options["output_dir"]).resolve()
        try:
            planted = load_planted_effects(options["planted"]) if options["planted"] else (DEFAULT_EFFECT,)
            config = SynthConfig(
                seed=options["seed"],
                n_firms=options["n_firms"],
                n_years=options["n_years"],
                start_year=options["start_year"],
                noise_sd=options["noise_sd"],
                dimension=options["dimension"],
                planted=planted,
            )
        except DjesgError as e:
            raise command_error(e)

        manifest = RunManifest(
            command="synth",
            config_hash=canonical_hash({**vars(config), "planted": [vars(effect) for effect in planted]}),
            seed=config.seed,
        )
        try:
            code = synth_command(config, manifest=manifest, output_dir=output_dir)
        finally:
            manifest.write(output_dir)

        if code != EXIT_OK:
            message = manifest.errors[-1]["message"] if manifest.errors else "failed"
            raise CommandError(f"synth: {message}", returncode=code)

        self.stdout.write(f"synth: dataset written to {output_dir}")
