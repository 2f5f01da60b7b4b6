"""Per-criterion outcomes collected by the acceptance tests for the summary."""

RESULTS = {}


def record(number, passed, detail=""):
    RESULTS[number] = (passed, detail)
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    return line
