"""Estimation error as dimension grows at fixed rho (high-MI regime).

    python scripts/mi_vs_dim.py --rho 0.9 --transform cube
"""
from _common import parser, run

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--transform", default="cube")
    p.add_argument("--dims", type=int, nargs="+", default=[1, 2, 4, 8])
    p.add_argument("--estimators", nargs="+", default=["mime", "mine", "nwj", "infonce"])
    a = p.parse_args()
    run(f"mi_vs_dim_rho{a.rho}_{a.transform}", a, d=a.dims, rho=[a.rho], transforms=[a.transform], estimators=a.estimators)
