"""MIME error against sample size on the d=1 Gaussian (error should shrink with n).

    python scripts/consistency.py --rho 0.5 --n 1250 2500 5000 10000
"""
from _common import parser, run

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, nargs="+", default=[1250, 2500, 5000, 10000])
    a = p.parse_args()
    run(f"consistency_d{a.d}_rho{a.rho}", a, d=[a.d], rho=[a.rho], n=a.n, estimators=["mime"])
