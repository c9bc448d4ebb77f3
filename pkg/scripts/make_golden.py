#!/usr/bin/env python3
"""Regenerate the golden files under tests/golden/.

Run from the repository root after a deliberate format change:

    python3 scripts/make_golden.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from ickalman import codec, tape
from conftest import random_system

GOLDEN = os.path.join(os.path.dirname(__file__), "..", "tests", "golden")


def main():
    os.makedirs(GOLDEN, exist_ok=True)

    batch = [random_system(n=2, N=3, seed=s) for s in range(2)]
    doc = codec.dataset_document(batch, "scalar", seed=99)
    codec.write_dataset(os.path.join(GOLDEN, "dataset_scalar_n2_N3.json"), doc)

    for mode, compiled in (("kf", tape.compile_kf_program(2, 2)),
                           ("dual", tape.compile_dual_kf_program(2, 2))):
        path = os.path.join(GOLDEN, f"{mode}_n2_N2.kfasm")
        with open(path, "w") as fh:
            fh.write(tape.to_assembly(compiled))

    print(f"golden files written to {GOLDEN}")


if __name__ == "__main__":
    main()
