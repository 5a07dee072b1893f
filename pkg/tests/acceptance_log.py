"""Collects one line per acceptance criterion for the end-of-run summary."""
RESULTS: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> bool:
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return passed
