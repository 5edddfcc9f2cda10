#!/usr/bin/env python3
"""Write Joe-Kuo direction numbers (d s a m_1..m_s) from scipy's bundled table.

Usage: gen_sobol_table.py <max_dim> <out.txt> [<out.hpp>]
"""
import os
import sys

import numpy as np
import scipy.stats


def rows(max_dim):
    path = os.path.join(os.path.dirname(scipy.stats.__file__), "_sobol_direction_numbers.npz")
    table = np.load(path)
    poly, vinit = table["poly"], table["vinit"]
    for d in range(2, max_dim + 1):
        p = int(poly[d - 1])
        s = p.bit_length() - 1
        a = (p >> 1) & ((1 << (s - 1)) - 1) if s > 1 else 0
        m = [int(v) for v in vinit[d - 1, :s]]
        yield f"{d} {s} {a} " + " ".join(map(str, m))


def main():
    max_dim = int(sys.argv[1])
    lines = ["d s a m_i"] + list(rows(max_dim))
    with open(sys.argv[2], "w") as f:
        f.write("\n".join(lines) + "\n")
    if len(sys.argv) > 3:
        with open(sys.argv[3], "w") as f:
            f.write("#pragma once\n\n")
            f.write("// Generated by tools/gen_sobol_table.py. Joe-Kuo new direction numbers,\n")
            f.write(f"// dimensions 2..{max_dim} (dimension 1 is implicit).\n\n")
            f.write("namespace vmc::detail {\n\n")
            f.write("inline constexpr int kSobolTableMaxDim = %d;\n\n" % max_dim)
            f.write('inline constexpr const char* kJoeKuoTable = R"JK(\n')
            f.write("\n".join(lines) + "\n")
            f.write(')JK";\n\n}  // namespace vmc::detail\n')


if __name__ == "__main__":
    main()
