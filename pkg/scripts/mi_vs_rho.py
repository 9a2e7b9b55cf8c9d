"""Estimated vs true MI as the dependence rho grows, one transform and dimension.

    python scripts/mi_vs_rho.py --d 4 --transform tanh --threads 8
"""
from _common import parser, run

ESTIMATORS = ["mime", "mre", "mine", "nwj", "infonce", "doe-gaussian"]

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--transform", default="identity")
    p.add_argument("--rho", type=float, nargs="+", default=[0.0, 0.2, 0.4, 0.6, 0.8, 0.9])
    p.add_argument("--estimators", nargs="+", default=ESTIMATORS)
    a = p.parse_args()
    run(f"mi_vs_rho_d{a.d}_{a.transform}", a, d=[a.d], rho=a.rho, transforms=[a.transform], estimators=a.estimators)
