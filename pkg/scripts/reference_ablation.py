"""Copula references (MIME) against moment-matched Gaussian references (MRE).

    python scripts/reference_ablation.py --transform cube --d 4 --rho 0.7
"""
from _common import parser, run

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--rho", type=float, nargs="+", default=[0.3, 0.5, 0.7, 0.9])
    p.add_argument("--transform", default="cube")
    a = p.parse_args()
    run(f"ablation_d{a.d}_{a.transform}", a, d=[a.d], rho=a.rho, transforms=[a.transform], estimators=["mime", "mre"])
