"""Print a results CSV as an aligned table."""
import csv
import sys


def show(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))


if __name__ == "__main__":
    for p in sys.argv[1:]:
        show(p)
