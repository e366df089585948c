#!/usr/bin/env python3
"""Compare assembled stiffness matrices with the adaptive-quadrature oracle.

    python scripts/check_oracle.py --s 0.1 0.5 0.9
"""

import argparse
import time

import numpy as np

from fracfem.assembly import QuadratureConfig, assemble_stiffness
from fracfem.mesh import interval_mesh, lshape_mesh, square_mesh
from fracfem.oracle import oracle_stiffness


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--s", type=float, nargs="+", default=[0.1, 0.5, 0.9])
    p.add_argument("--rtol", type=float, default=1e-9, help="oracle relative tolerance")
    p.add_argument("--touching-order", type=int, help="override the production touching order")
    args = p.parse_args()
    meshes = {"interval16": interval_mesh(-1.0, 1.0, 16), "square2": square_mesh(1.0, 2), "lshape2": lshape_mesh(2)}
    print("mesh,s,dofs,max_entry_rel_err,oracle_seconds")
    for name, m in meshes.items():
        kw = {"touching_order": args.touching_order} if args.touching_order else {}
        quad = QuadratureConfig.for_dim(m.dim, **kw)
        for s in args.s:
            t0 = time.perf_counter()
            O = oracle_stiffness(m, s, rtol=args.rtol)
            dt = time.perf_counter() - t0
            K = assemble_stiffness(m, s, quad)
            err = float(np.max(np.abs(K - O) / np.abs(O)))
            print(f"{name},{s},{m.n_dofs},{err:.3e},{dt:.1f}", flush=True)


if __name__ == "__main__":
    main()
