"""Collects one summary line per acceptance criterion."""
LINES = []


def record(number, title, passed, detail=""):
    line = f"CRITERION {number} [{'PASS' if passed else 'FAIL'}] {title}"
    if detail:
        line += f" :: {detail}"
    LINES.append(line)
    print(line)
    return passed
