"""Pilot run used to calibrate the desk-scale recovery targets.

Scale: d=300, m=60, N=400, edge probability 0.1, 10% relevant features.
For each seed it reports the penalty picked by 5-fold held-out likelihood
CV and the Omega TPR/FPR of vanilla NARD over a small fixed grid.

    python3 benchmarks/pilot_calibration.py > benchmarks/pilot_calibration.log
"""

import warnings

import numpy as np

from nard import Dataset, FitConfig, HyperpriorConfig, SynthSpec, generate, nard_fit, support, tpr_fpr
from nard.cli import cv_select

SEEDS = range(6)
FIXED = [0.05, 0.06, 0.07, 0.08, 0.1]
GRID = np.logspace(-3, 0, 20)


def main():
    warnings.simplefilter("ignore")
    rates = {lam: [] for lam in FIXED}
    for seed in SEEDS:
        gt = generate(SynthSpec(d=300, m=60, n=400, graph_sparsity=0.1, w_sparsity=0.1, seed=seed))
        data = Dataset(gt.x, gt.y)
        truth = support(gt.omega_true, 0.0, precision=True)
        picked = cv_select(data, FitConfig(lam=1.0, max_iter=2000), HyperpriorConfig(), GRID, seed)
        print(f"seed {seed}: cv lambda {picked:.4g}")
        for lam in FIXED:
            st = nard_fit(data, FitConfig(lam=lam, max_iter=2000))
            rates[lam].append(tpr_fpr(support(st.omega, 0.0, precision=True), truth, offdiag=True))
    print("lambda  mean_tpr  mean_fpr")
    for lam, v in rates.items():
        tpr, fpr = np.mean(v, axis=0)
        print(f"{lam:<7g} {tpr:.4f}    {fpr:.4f}")


if __name__ == "__main__":
    main()
