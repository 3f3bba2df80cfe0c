"""Pull the outermost for-loops out of a C file and read their OpenMP labels.

Run: python demos/01_extract_loops.py
"""

from g2p.cfront import parse_pragma, scan_loops

SOURCE = r"""
#include <math.h>
double a[1000], b[1000];

int main(void) {
    int i, j;
    double total = 0.0;

    /* element-wise scaling */
#pragma omp parallel for simd
    for (i = 0; i < 1000; i++)
        a[i] = fabs(b[i]) * 2.0;

#pragma omp parallel for reduction(+:total) private(j)
    for (i = 0; i < 1000; i++) {
        for (j = 0; j < 4; j++)
            total += a[i] * j;
    }

    // a recurrence: each iteration needs the previous one
    for (i = 1; i < 1000; i++)
        a[i] = a[i - 1] + b[i];

    for (i = 0; i < ; i++) { }
    return 0;
}
"""

loops, diagnostics = scan_loops(SOURCE, "demo.c")

print(f"found {len(loops)} loops\n")
for loop in loops:
    flags = ", ".join(k for k, v in loop.labels.as_dict().items() if v) or "none"
    print(f"{loop.id}  line {loop.line}  loc={loop.loc}  nested={loop.is_nested}  calls={loop.has_function_call}")
    print(f"  pragma: {loop.pragma.raw if loop.pragma else '-'}")
    print(f"  labels: {flags}")

# A loop the parser cannot handle is skipped with a diagnostic rather than aborting the file.
for d in diagnostics:
    print(f"\nskipped {d.path}:{d.line}: {d.message}")

# Pragmas can also be parsed directly.
p = parse_pragma("#pragma omp target teams distribute parallel for private(x, y)")
print("\nparsed pragma clauses:", p.clauses)
