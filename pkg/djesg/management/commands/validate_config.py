from typing import Any

from djesg.management.base import ConfigCommand


class Command(ConfigCommand):
    help = "Validate a run config, with overrides applied, without running anything."

    def handle(self, *args: Any, **options: Any) -> None:
        config = self.load_config(options)
        self.stdout.write(f"config hash: {config.config_hash}")
        for name, path in config.input_paths().items():
            self.stdout.write(f"{name}: {path}")
        self.stdout.write(f"output_dir: {config.output_dir}")
        self.stdout.write(
            "families: " + ", ".join(family.value for family in config.families)
        )
