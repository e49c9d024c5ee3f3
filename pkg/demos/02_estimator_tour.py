"""Tour of all six estimators on one nonparametric draw.

Setting (B) has effect surface exp(x)exp(w), outside any fixed
polynomial family, so the sieve and kernel estimators matter here.
Each estimator is fit on the same simulated data and scored against the
oracle.  The TSLS-style baselines estimate the level surface E[Y_x | w]
and are differentiated in x for comparability.

Run:  python demos/02_estimator_tour.py   (takes a minute or two; the
kernel methods solve dense 2000 x 2000 systems)
"""

import time

import capce

N = 2000
train = capce.simulate("B", N, seed=10)
test = capce.simulate("B", N, seed=11)
grid = capce.default_grid()
qb3 = capce.InstrumentBasis(3)
qb4 = capce.InstrumentBasis(4)
zetas = (1.0, 0.1, 0.01, 0.001)

fits = {}

# %% Series estimators.
t0 = time.time()
fits["P-CAPCE"] = capce.fit_parametric(
    train, capce.explicit_terms(["1", "W", "X"]), qb3, -1.0, zetas, test)
fits["PTSLS"] = capce.fit_ptsls(
    train, capce.explicit_terms(["1", "W", "X", "WX", "X2"]), qb3, zetas, test)
hermite = capce.hermite_product(2, 2)
fits["S-CAPCE"] = capce.fit_sieve(train, hermite, qb4, -1.0, zetas, test,
                                  capce.LambdaConfig())
fits["NTSLS"] = capce.fit_ntsls(train, hermite, qb4, zetas, test)
print(f"series estimators fitted in {time.time() - t0:.1f}s")

# %% Kernel estimators: hyperparameters picked on the held-out draw.
t0 = time.time()
grids = capce.RkhsGrids(c1_grid=(1.0, 4.0), c3_grid=(1.0, 4.0))
kcfg = capce.rkhs_select(train, test, grids, z0=-1.0)
print(f"selected RKHS kernel: kz={kcfg.kz_params}, kxw={kcfg.kxw_params}, "
      f"lambdas={kcfg.lambdas}")
fits["RKHS-CAPCE"] = capce.fit_rkhs(train, kcfg, z0=-1.0)

from capce.baselines import kernel_iv_select

kiv_cfg = kernel_iv_select(train, test, grids)
fits["KernelIV"] = capce.fit_kernel_iv(train, kiv_cfg)
print(f"kernel estimators fitted in {time.time() - t0:.1f}s")

# %% Score everything.
print(f"\n{'estimator':>12}  grid MSE vs exp(x)exp(w)")
for name, model in fits.items():
    mse = capce.evaluate_mse(model, "B", grid)
    print(f"{name:>12}  {mse:10.2f}")

print("\nNote: at this sample size the problem is heavily noise-dominated")
print("(the confounder term has ~100x the variance of the outcome signal),")
print("so absolute MSEs are large; orderings stabilize over replications.")
