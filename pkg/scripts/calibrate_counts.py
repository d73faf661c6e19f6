"""Constraint counts of the untightened SAA model for every bundled system.

The count is deterministic rows plus one Big-M row per (row, scenario) plus
the knapsack row, so it depends only on the network shape and |S|.
"""
import argparse

from jccsaa.core import BigMTable, build_saa_milp, count_constraints
from jccsaa.opf import SHAPES, opf_instance


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scenarios", type=int, default=1000)
    parser.add_argument("--epsilon", type=float, default=0.05)
    args = parser.parse_args()
    print("system,buses,gens,lines,rows,count")
    for name, (N, G, L) in SHAPES.items():
        inst, _, _ = opf_instance(name, args.scenarios, args.epsilon)
        table = BigMTable.constant(inst.num_rows, args.scenarios, 1.0)
        count = count_constraints(build_saa_milp(inst, table))
        print(f"{name},{N},{G},{L},{inst.num_rows},{count}")


if __name__ == "__main__":
    main()
