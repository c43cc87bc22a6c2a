"""Regenerate the shipped scene fixtures under fixtures/."""
import argparse
from pathlib import Path

from splatgaze.synthetic import write_eyeball_fixture, write_head_fixture

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "fixtures")
    args = ap.parse_args()
    print(write_head_fixture(args.out / "head", width=96, height=96))
    print(write_head_fixture(args.out / "head8", width=64, height=64, channels=8))
    print(write_eyeball_fixture(args.out / "eyeball"))


if __name__ == "__main__":
    main()
