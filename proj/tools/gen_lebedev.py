"""Regenerate src/lebedev_tables.cpp from SciPy's Lebedev rules."""
import sys
from scipy.integrate import lebedev_rule

ORDERS = [17, 23, 31, 41, 59]

out = ["// Generated by tools/gen_lebedev.py; do not edit.",
       '#include "lebedev_tables.hpp"', "", "namespace nvlimit::detail {", ""]
entries = []
for order in ORDERS:
    x, w = lebedev_rule(order)
    n = x.shape[1]
    name = f"lebedev_{order}"
    out.append(f"static const double {name}[{n}][4] = {{")
    for i in range(n):
        out.append("    {%.17g, %.17g, %.17g, %.17g}," % (x[0, i], x[1, i], x[2, i], w[i]))
    out.append("};")
    out.append("")
    entries.append(f"    {{{order}, {n}, &{name}[0][0]}},")
out.append("const LebedevTable lebedev_tables[] = {")
out += entries
out.append("};")
out.append(f"const int lebedev_table_count = {len(ORDERS)};")
out.append("")
out.append("} // namespace nvlimit::detail")
open(sys.argv[1] if len(sys.argv) > 1 else "src/lebedev_tables.cpp", "w").write("\n".join(out) + "\n")
