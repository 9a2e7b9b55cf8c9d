"""Mixture-of-Gaussians and Swiss-roll tasks, whose truth comes from the MC oracle or a closed form.

    python scripts/mixtures.py --task mog1 --d 4
"""
from _common import parser, run

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--task", default="mog1", choices=["mog", "mog1", "mog2", "swissroll"])
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--rho", type=float, nargs="+", default=[0.5], help="used by mog and swissroll only")
    p.add_argument("--estimators", nargs="+", default=["mime", "mre", "mine", "nwj", "infonce", "doe-gaussian"])
    a = p.parse_args()
    d = [1] if a.task == "swissroll" else [a.d]
    run(f"{a.task}_d{d[0]}", a, task=a.task, d=d, rho=a.rho, estimators=a.estimators)
