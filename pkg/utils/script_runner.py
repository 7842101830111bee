"""
script_runner.py — run a test module's test_* functions without pytest

Each root-level test file ends with:

  if __name__ == "__main__":
      sys.exit(run_module_tests(globals(), "core_model.py"))
"""

import traceback

PASS = "\033[92m PASS\033[0m"
FAIL = "\033[91m FAIL\033[0m"


def check(name: str, passed: bool, detail: str = ""):
    status = PASS if passed else FAIL
    line = f"  [{status}] {name}"
    if detail:
        line += f"\n         {detail}"
    print(line)
    return passed


def run_module_tests(namespace: dict, title: str) -> int:
    tests = [(name, fn) for name, fn in namespace.items() if name.startswith("test_") and callable(fn)]
    print(f"\n{title} verification\n" + "=" * 60)
    results = []
    for name, fn in tests:
        try:
            fn()
            results.append(check(name, True))
        except Exception as exc:
            detail = f"{type(exc).__name__}: {exc}" if str(exc) else type(exc).__name__
            results.append(check(name, False, detail))
            traceback.print_exc(limit=3)
    passed = sum(results)
    print("=" * 60)
    print(f"  {passed}/{len(results)} tests passed")
    return 0 if passed == len(results) else 1
