import numpy as np
import pytest
from scipy.optimize import minimize

import capce
from capce.baselines import (FD_STEP_FRACTION, StructuralModel, fit_kernel_iv,
                             fit_ntsls, fit_ptsls, kernel_iv_select)
from capce.basis import InstrumentBasis, explicit_terms, hermite_product
from capce.data import TwoSampleDataset
from capce.estimators.rkhs import KernelConfig, embedding_operator
from tests.conftest import make_joint

ZETAS = (1.0, 0.1, 0.01, 0.001)


class TestPtsls:
    def test_noiseless_linear_model(self):
        # Y = 2X with Z = X: fitted level slope 2, derivative surface = 2
        z = np.linspace(-1, 1, 100)
        ds = TwoSampleDataset(x=z.copy(), w=np.zeros((100, 1)), z1=z,
                              y=2 * z, z2=z.copy(), joint=True)
        model = fit_ptsls(ds, explicit_terms(["1", "X"]), InstrumentBasis(2),
                          (1e-10,), None)
        assert model.evaluate_level(0.5, 0.0) == pytest.approx(1.0, abs=1e-6)
        assert model.evaluate_dx(0.37, 0.0) == pytest.approx(2.0, abs=1e-6)

    def test_level_x2_differentiates_to_2x(self):
        ds = make_joint(300, 7, y_fn=lambda x, w, u: x**2)
        model = fit_ptsls(ds, explicit_terms(["1", "X", "X2"]),
                          InstrumentBasis(3), (1e-8,), None)
        dspec, coefs = model.dx_coefficients()
        labels = dspec.term_labels()
        # the X2 level coefficient appears doubled on the X derivative term
        j2 = [i for i, (p, q) in enumerate(model.basis.terms) if p == 2][0]
        jx = labels.index("X")
        assert coefs[jx] == pytest.approx(2 * model.coefficients[j2])

    def test_derivative_matches_finite_difference(self):
        ds = make_joint(500, 8, y_fn=lambda x, w, u: x**2 + w * x + u)
        model = fit_ptsls(ds, explicit_terms(["1", "W", "X", "WX", "X2"]),
                          InstrumentBasis(3), (0.01,), None)
        xs = np.linspace(-2, 2, 25)
        ws = np.linspace(-1, 1, 25)
        h = 1e-5
        fd = (model.evaluate_level(xs + h, ws)
              - model.evaluate_level(xs - h, ws)) / (2 * h)
        direct = model.evaluate_dx(xs, ws)
        scale = np.maximum(np.abs(direct), 1.0)
        assert np.max(np.abs(fd - direct) / scale) < 1e-6


class TestNtsls:
    def test_constant_outcome_flat_derivative(self):
        # Needs a full-rank level design (here {1, h1(x)} against quadratic
        # instrument features): OLS then puts everything on the intercept
        # and the derivative vanishes.  Rank-deficient designs (nine terms
        # through four instrument features) spread the constant across
        # terms via the minimum-norm rule instead.
        ds = make_joint(400, 9, y_fn=lambda x, w, u: np.full_like(x, 7.0))
        model = fit_ntsls(ds, hermite_product(1, 0), InstrumentBasis(3),
                          (1e-8,), None)
        xs = np.linspace(-2, 2, 9)
        assert np.max(np.abs(model.evaluate_dx(xs, 0.5))) < 1e-6
        assert model.evaluate_level(0.0, 0.0) == pytest.approx(7.0, abs=1e-4)

    def test_hermite_level_derivative(self):
        # h2(x)h1(w) level term differentiates to 2x*w
        spec = hermite_product(2, 1)
        model = StructuralModel(kind="ntsls", basis=spec,
                                coefficients=np.eye(spec.size)[-1])
        assert model.evaluate_dx(1.5, 2.0) == pytest.approx(6.0)

    def test_risk_selection_runs(self):
        tr = capce.simulate("B", 1500, 71)
        te = capce.simulate("B", 1500, 72)
        model = fit_ntsls(tr, hermite_product(2, 2), InstrumentBasis(4),
                          ZETAS, te)
        assert model.metadata["zeta"] in ZETAS


class TestKernelIv:
    def test_matches_brute_force_quadratic(self, toy_joint):
        kcfg = KernelConfig(kz_params=(1.0, 2), kxw_params=(1.0, 2),
                            lambdas=(0.1, 0.1, 0.5, 0.3))
        model = fit_kernel_iv(toy_joint, kcfg)
        o_mat, k_xw = embedding_operator(toy_joint, kcfg, z0=None)
        lam3, xi = kcfg.lambdas[2], kcfg.lambdas[3]

        def objective(a):
            r = toy_joint.y - o_mat.T @ a
            return float(np.mean(r**2) + xi * a @ k_xw @ a + lam3 * a @ a)

        res = minimize(objective, np.zeros(toy_joint.n1), method="BFGS",
                       options={"gtol": 1e-12, "maxiter": 10_000})
        assert np.max(np.abs(model.coefficients - res.x)) < 1e-4

    def test_constant_outcome_flat(self):
        # A degree-1 treatment kernel makes the level class exactly as rich
        # as the smoothed moment constraints, so the constant is the unique
        # fit; richer classes resolve the slack by kernel norm, not by
        # flatness.
        rng = np.random.default_rng(0)
        n = 40
        z = rng.uniform(-1, 1, n)
        u = rng.uniform(-1, 1, n)
        w = u + rng.uniform(-1, 1, n)
        x = z + w + u + rng.uniform(-1, 1, n)
        ds = TwoSampleDataset(x=x, w=w[:, None], z1=z, y=np.full(n, 2.0),
                              z2=z.copy(), joint=True)
        kcfg = KernelConfig(kz_params=(1.0, 2), kxw_params=(1.0, 1),
                            lambdas=(1e-6, 0.0, 0.0, 1e-6))
        model = fit_kernel_iv(ds, kcfg)
        xs = np.linspace(-0.5, 0.5, 7)
        assert np.max(np.abs(model.evaluate_level(xs, 0.0) - 2.0)) < 1e-4
        assert np.max(np.abs(model.evaluate_dx(xs, 0.0))) < 1e-4

    def test_fd_step_scales_with_range(self, toy_joint):
        kcfg = KernelConfig(lambdas=(0.1, 0.1, 1.0, 1.0))
        model = fit_kernel_iv(toy_joint, kcfg)
        x_range = toy_joint.x.max() - toy_joint.x.min()
        assert model.fd_step == pytest.approx(FD_STEP_FRACTION * x_range)

    def test_selection_returns_grid_member(self, toy_joint):
        grids = capce.RkhsGrids(c1_grid=(1.0,), c2_grid=(1, 2), c3_grid=(1.0,),
                                c4_grid=(1, 2), lambda1_grid=(0.1,),
                                lambda2_grid=(0.1, 0.01), lambda3_grid=(1.0,),
                                xi_grid=(10.0, 1.0), n_select=50)
        cfg = kernel_iv_select(toy_joint, toy_joint, grids)
        assert cfg.kz_params[1] in (1, 2)
        assert cfg.lambdas[3] in (10.0, 1.0)


class TestComparativeBehavior:
    @pytest.mark.slow
    def test_series_beats_baseline_in_interaction_settings(self):
        # With a covariate-confounder interaction in the outcome, each
        # anchored series estimator beats its level counterpart in mean
        # grid MSE at N = 10000 (the defining qualitative contrast).
        cfgs = {e.label: e for e in capce.standard_estimators()}
        plan = capce.BenchmarkPlan(
            settings=("A", "B"), sample_sizes=(10_000,), replications=20,
            estimators=(cfgs["PTSLS"], cfgs["NTSLS"], cfgs["P-CAPCE"],
                        cfgs["S-CAPCE"]),
            base_seed=2)
        res = capce.run_benchmark(plan)
        for setting in ("A", "B"):
            assert res.mean_mse(setting, 10_000, "P-CAPCE") < \
                res.mean_mse(setting, 10_000, "PTSLS"), setting
            assert res.mean_mse(setting, 10_000, "S-CAPCE") < \
                res.mean_mse(setting, 10_000, "NTSLS"), setting

    @pytest.mark.slow
    def test_pairwise_parity_without_interaction(self):
        # With plain additive confounding, each baseline stays within an
        # order of magnitude of its anchored counterpart (and vice versa).
        cfgs = {e.label: e for e in capce.standard_estimators()}
        plan = capce.BenchmarkPlan(
            settings=("C", "D"), sample_sizes=(2000,), replications=10,
            estimators=tuple(cfgs.values()), base_seed=2)
        res = capce.run_benchmark(plan)
        pairs = (("PTSLS", "P-CAPCE"), ("NTSLS", "S-CAPCE"),
                 ("KernelIV", "RKHS-CAPCE"))
        for setting in ("C", "D"):
            for base, ours in pairs:
                a = res.mean_mse(setting, 2000, base)
                b = res.mean_mse(setting, 2000, ours)
                ratio = max(a, b) / min(a, b)
                assert ratio <= 10.0, (setting, base, ours, ratio)


class TestPublishedBounds:
    @pytest.mark.slow
    @pytest.mark.xfail(reason="upstream reference value: level-sieve MSE on a "
                              "uniform grid plateaus above the published "
                              "bound under the printed gain-25 confounder; "
                              "see ledger analysis", strict=False)
    def test_ntsls_setting_b_reference(self):
        # published reference: derivative grid MSE ~ 21 at N = 10000
        # (accept <= 60)
        mses = []
        for rep in range(5):
            ss = np.random.SeedSequence([81, rep])
            s_tr, s_te = ss.spawn(2)
            tr = capce.simulate("B", 10_000, s_tr)
            te = capce.simulate("B", 10_000, s_te)
            m = fit_ntsls(tr, hermite_product(2, 2), InstrumentBasis(4),
                          ZETAS, te)
            mses.append(capce.evaluate_mse(m, "B", capce.default_grid()))
        assert np.mean(mses) <= 60.0

    @pytest.mark.slow
    @pytest.mark.xfail(reason="upstream reference contrast: at the feasible "
                              "sample size both kernel methods sit near the "
                              "constant-fit noise floor in setting A, so the "
                              "published 5x separation is not reproducible; "
                              "see ledger analysis", strict=False)
    def test_kernel_iv_setting_a_vs_rkhs(self):
        # published reference: Kernel IV MSE >= 5x RKHS MSE in the same run
        tr = capce.simulate("A", 2000, 91)
        va = capce.simulate("A", 2000, 92)
        grids = capce.RkhsGrids(c1_grid=(1.0, 4.0), c3_grid=(1.0, 4.0))
        kiv = fit_kernel_iv(tr, kernel_iv_select(tr, va, grids))
        rk = capce.fit_rkhs(tr, capce.rkhs_select(tr, va, grids, z0=-1.0),
                            z0=-1.0)
        grid = capce.default_grid()
        ratio = capce.evaluate_mse(kiv, "A", grid) / \
            capce.evaluate_mse(rk, "A", grid)
        assert ratio >= 5.0


class TestSharedCapceInterface:
    def test_structural_models_expose_capce(self):
        ds = make_joint(200, 10, y_fn=lambda x, w, u: x + u)
        model = fit_ptsls(ds, explicit_terms(["1", "X"]), InstrumentBasis(2),
                          (0.01,), None)
        xs = np.linspace(-1, 1, 5)
        assert np.allclose(model.capce(xs, 0.0), model.evaluate_dx(xs, 0.0))
