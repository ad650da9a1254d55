"""Collects one pass/fail line per acceptance criterion for the terminal
summary (see conftest.py)."""

RESULTS = {}


def record(key, passed, detail):
    """Add a part result; ``key`` is the criterion number or a label for a
    supplementary line.  Parts of one criterion are combined."""
    RESULTS.setdefault(key, []).append((bool(passed), detail))
    print(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)


def lines():
    def order(key):
        head = str(key).split()[0]
        return (int(head) if head.isdigit() else 99, str(key))

    out = []
    for key in sorted(RESULTS, key=order):
        parts = RESULTS[key]
        ok = all(p for p, _ in parts)
        out.append(f"criterion {str(key):<22s} {'PASS' if ok else 'FAIL'}  " + "; ".join(d for _, d in parts))
    return out
