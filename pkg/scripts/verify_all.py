"""Run every verification: identity suites, bound checks for the shipped configs, lower bound.

Exits non-zero if any check fails.
"""

import glob
import os
import sys

from nsosp import checks, harness

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ok = True
    report = checks.verify_identities(0)
    for suite in report.suites:
        print(suite.line())
    ok &= report.passed

    for path in sorted(glob.glob(os.path.join(HERE, "configs", "bound_*.cfg"))):
        print(f"\n{os.path.basename(path)}")
        for check in harness.verify_bounds(harness.load_config(path)):
            print(check.describe())
            ok &= check.passed

    print("\nrandom-label instance")
    lower = harness.verify_lower_bound(T=10_000, trials=20, seed=0)
    for text, passed in lower.checks:
        print(f"{'PASS' if passed else 'FAIL'} {text}")
    ok &= lower.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
