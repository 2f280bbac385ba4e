"""Run a fixture as a standalone process: ``python -m tofu.fixtures NAME ARGS...``.

For ``validate`` and ``maze`` the first argument is the input file path.
"""

import os
import sys
from pathlib import Path

from . import FIXTURES


def main(argv: list[str]) -> int:
    if not argv or argv[0] not in FIXTURES:
        print(f"usage: python -m tofu.fixtures {{{','.join(FIXTURES)}}} [args...]", file=sys.stderr)
        return 2
    name, args = argv[0], argv[1:]
    data = b""
    if name != "flagdemo" and args:
        data = Path(args[0]).read_bytes()
    cov_path = os.environ.get("TOFU_COVERAGE_FILE")
    cov = open(cov_path, "a", encoding="utf-8") if cov_path else None

    def hit(block: str) -> None:
        if cov:
            cov.write(block + "\n")
            cov.flush()

    try:
        return FIXTURES[name](args, data, hit)
    finally:
        if cov:
            cov.close()


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
