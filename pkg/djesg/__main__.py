import os
import sys
from typing import List, Optional

from django.core.management import ManagementUtility

# Hyphenated subcommand names map onto management command modules.
ALIASES = {
    "run-all": "run_all",
    "validate-config": "validate_config",
}


def main(argv: Optional[List[str]] = None) -> None:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "djesg.settings")
    argv = list(sys.argv if argv is None else argv)
    if len(argv) > 1:
        argv[1] = ALIASES.get(argv[1], argv[1])

    ManagementUtility(argv).execute()


if __name__ == "__main__":
    main()
