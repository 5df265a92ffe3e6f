"""Run the offset_circles experiment; extra arguments are passed through as --key value overrides."""
import sys

from savflow.cli import main

if __name__ == "__main__":
    sys.exit(main(["offset_circles", *sys.argv[1:]]))
