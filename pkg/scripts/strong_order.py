#!/usr/bin/env python3
"""Strong-order table for the scalar geometric reduction of the stepper."""
import sys

from hydrospde.experiments import strong_order_study, write_csv

dts = [1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4]
paths = int(sys.argv[1]) if len(sys.argv) > 1 else 1024
st = strong_order_study(dts, paths=paths)
for row in st.rows():
    print(f"dt={row['dt']:.0e}  E|err|={row['error']:.4e} +- {row['stderr']:.1e}")
print(f"fitted order {st.order:.3f}")
if len(sys.argv) > 2:
    write_csv(sys.argv[2], st.rows())
