"""Run the acceptance checks outside pytest and print one line per criterion.

Usage: python3 scripts/run_acceptance.py [criterion ...]
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import test_acceptance as acc  # noqa: E402


def main(argv):
    wanted = [int(a) for a in argv] or sorted(acc.CHECKS)
    failed = 0
    for k in wanted:
        ok, detail = acc.CHECKS[k]()
        print(acc.format_line(k, ok, detail), flush=True)
        failed += not ok
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
