"""End-to-end checks, one per release criterion.

Each test prints a single line with the measured quantity next to its bound
so a verbose run reads as a scorecard.  The Monte-Carlo summaries come from
session fixtures (see conftest) and are exactly reproducible from BASE_SEED.
"""

import math
import time

import numpy as np
import pytest

import vlmcx
from vlmcx import ContextTree, Dataset, FitConfig, ParamBlock
from vlmcx.algorithm import fit, test_pastmost_beta as pastmost_beta_test
from vlmcx.glm import (
    LeafDesign,
    build_design,
    design_loglik,
    gradient,
    log_likelihood,
    transition_distribution,
)
from vlmcx.stats import chi2_cdf, chi2_quantile

from conftest import BASE_SEED


def rate(per_run, key="identical_tau"):
    return float(np.mean([getattr(em, key) for em in per_run]))


def test_criterion_1_model2_structure_recovery(mc_model2_n1000):
    got = rate(mc_model2_n1000.per_run)
    print(f"criterion 1: identical_tau {got:.3f} (need >= 0.90, 200 runs, n=1000)")
    assert mc_model2_n1000.runs == 200 and mc_model2_n1000.failures == 0
    assert got >= 0.90


def test_criterion_2_model3_no_effect_recovery(mc_model3_n2000):
    got = rate(mc_model3_n2000.per_run)
    beta = mc_model3_n2000.means["n_beta"]
    print(
        f"criterion 2: identical_tau {got:.3f} (need >= 0.90), "
        f"mean n_beta {beta:.3f} (need <= 0.3), 100 runs, n=2000"
    )
    assert mc_model3_n2000.runs == 100
    assert beta <= 0.3
    assert got >= 0.90


def test_criterion_3_consistency_trend(mc_model1_n1000, mc_model1_n2000):
    small = rate(mc_model1_n1000.per_run)
    large = rate(mc_model1_n2000.per_run[:100])
    print(
        f"criterion 3: identical_tau {small:.3f} at n=1000 -> {large:.3f} "
        f"at n=2000 (need gap >= 0.2, 100 runs each)"
    )
    assert large - small >= 0.2


def test_criterion_4_coefficient_recovery(mc_model1_n2000):
    cells = {
        (c.context, c.lag): c
        for c in mc_model1_n2000.coefficients
        if c.covariate == 1 and c.target == 1
    }
    b00 = cells[((0, 0), 1)]
    b010 = (cells[((0, 1, 0), 1)], cells[((0, 1, 0), 2)])
    print(
        f"criterion 4: beta[00] mean {b00.mean:.4f} in [1.92, 2.12], "
        f"sd {b00.sd:.4f} in [0.13, 0.26]; beta[010] "
        f"({b010[0].mean:.4f}, {b010[1].mean:.4f}) within 0.1 of (-1.02, 1.01)"
    )
    assert b00.true == 2.0 and b00.n > 0
    assert 1.92 <= b00.mean <= 2.12
    assert 0.13 <= b00.sd <= 0.26
    assert abs(b010[0].mean - (-1.02)) <= 0.1
    assert abs(b010[1].mean - 1.01) <= 0.1


def test_criterion_5_information_criterion_convention(model2_data):
    reports = [fit(model2_data)]
    rng = np.random.default_rng(2)
    other = Dataset(
        states=rng.integers(0, 2, size=800), covariates=rng.normal(size=800)
    )
    reports.append(fit(other, FitConfig(s=5, gamma=1e-2)))
    for rep in reports:
        gap = rep.bic - (-2.0 * rep.loglik)
        want = rep.n_beta * math.log(rep.n_eff)
        assert rep.bic == -2.0 * rep.loglik + rep.n_beta * math.log(rep.n_eff)
        assert gap == pytest.approx(want, abs=1e-9)
    print(
        "criterion 5: BIC - (-2*loglik) = n_beta*log(n_eff) holds exactly "
        f"on {len(reports)} fits"
    )


def test_criterion_6_numerical_core_bundle():
    t0 = time.perf_counter()
    # chi-square CDF against the df=2 closed form
    xs = np.linspace(0.0, 100.0, 1000)
    worst_cdf = max(
        abs(chi2_cdf(float(x), 2) - (1.0 - math.exp(-float(x) / 2.0))) for x in xs
    )
    assert worst_cdf <= 1e-12
    # quantile/CDF round trip
    worst_rt = 0.0
    for df in (1, 2, 5, 10):
        for q in (1e-6, 0.01, 0.05, 0.5, 0.95, 0.99, 1.0 - 1e-9):
            worst_rt = max(worst_rt, abs(chi2_cdf(chi2_quantile(q, df), df) - q))
    assert worst_rt <= 1e-8
    # analytic score against central finite differences on 100 random designs
    worst_fd = 0.0
    rng = np.random.default_rng(99)
    for case in range(100):
        p = int(rng.integers(2, 4))
        h = int(rng.integers(0, 3))
        d = int(rng.integers(1, 3))
        m = int(rng.integers(25, 60))
        X = np.column_stack([np.ones(m), rng.normal(size=(m, h * d))])
        y = rng.integers(0, p, size=m)
        design = LeafDesign(context=(0,), X=X, y=y, h=h, d=d, p=p)
        params = rng.normal(scale=0.5, size=(p - 1) * (1 + h * d))
        got = gradient(design, params)
        eps = 1e-6

        def ll(vec):
            theta = vec.reshape(p - 1, 1 + h * d)
            z = np.concatenate([np.zeros((m, 1)), X @ theta.T], axis=1)
            zmax = z.max(axis=1, keepdims=True)
            logz = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
            return float((z[np.arange(m), y] - logz).sum())

        fd = np.empty_like(params)
        for i in range(params.size):
            hi, lo = params.copy(), params.copy()
            hi[i] += eps
            lo[i] -= eps
            fd[i] = (ll(hi) - ll(lo)) / (2 * eps)
        scale = max(1.0, float(np.max(np.abs(got))))
        worst_fd = max(worst_fd, float(np.max(np.abs(got - fd))) / scale)
    assert worst_fd <= 1e-6
    # per-leaf decomposition of the sequence likelihood
    spec = vlmcx.builtin_model("model2")
    data = vlmcx.generate(spec, 600, seed=4)
    report = fit(data)
    parts = sum(
        design_loglik(
            build_design(data, report.tree, u, horizon=report.horizon),
            report.tree.block(u),
        )
        for u in report.tree.leaves()
    )
    assert abs(report.loglik - parts) <= 1e-10
    # transition probabilities normalize, two and three states
    rng = np.random.default_rng(7)
    worst_sum = 0.0
    for p in (2, 3):
        for _ in range(50):
            block = ParamBlock(
                alpha=rng.normal(size=p - 1), beta=rng.normal(size=(p - 1, 2, 1))
            )
            probs = transition_distribution(block, rng.normal(size=(2, 1)))
            worst_sum = max(worst_sum, abs(float(probs.sum()) - 1.0))
    assert worst_sum <= 1e-12
    elapsed = time.perf_counter() - t0
    print(
        f"criterion 6: cdf err {worst_cdf:.2e}, round trip {worst_rt:.2e}, "
        f"fd err {worst_fd:.2e}, sum err {worst_sum:.2e}, {elapsed:.1f}s (< 10s)"
    )
    assert elapsed < 10.0


def test_criterion_7_lrt_null_calibration():
    # true model: the next state depends on the last covariate only, so the
    # second lag at leaf 00 is exactly null; the deepest-lag test at
    # gamma = 0.05 must reject at its nominal rate
    def replicate(seed):
        rng = np.random.default_rng(seed)
        n = 1400
        x = rng.normal(size=n)
        u = rng.random(n)
        y = np.zeros(n, dtype=int)
        y[1:] = u[1:] < 1.0 / (1.0 + np.exp(-(0.2 + 1.0 * x[:-1])))
        data = Dataset(states=y, covariates=x)
        deep = ParamBlock.binary(0.2, [1.0, 0.5])
        shallow = ParamBlock.binary(0.2, [1.0])
        tree = ContextTree(
            p=2, d=1,
            nodes={(): None, (0,): None, (1,): shallow, (0, 0): deep, (0, 1): deep},
        )
        test, _ = pastmost_beta_test(data=data, tree=tree, u=(0, 0),
                                     config=FitConfig(gamma=0.05))
        return test.p_value <= 0.05

    hits = sum(replicate(BASE_SEED + i) for i in range(2000))
    got = hits / 2000.0
    print(f"criterion 7: null rejection rate {got:.4f} in [0.038, 0.063], 2000 reps")
    assert 0.038 <= got <= 0.063


def brute_loglik(tree, data, horizon):
    """Pure-python product-of-probabilities evaluation."""
    total = 0.0
    for t in range(horizon, data.n):
        u = ()
        while not tree.is_leaf(u):
            u = u + (int(data.states[t - 1 - len(u)]),)
        block = tree.block(u)
        zs = [0.0]
        for j in range(block.n_targets):
            z = float(block.alpha[j])
            for lag in range(1, block.h + 1):
                for c in range(data.d):
                    z += float(block.beta[j, lag - 1, c]) * float(
                        data.covariates[t - lag, c]
                    )
            zs.append(z)
        top = max(zs)
        denom = sum(math.exp(v - top) for v in zs)
        total += zs[int(data.states[t])] - top - math.log(denom)
    return total


def test_criterion_8_likelihood_oracle():
    rng = np.random.default_rng(12)
    cases = 0
    worst = 0.0
    for rep in range(10):
        # two-state, depth-2 complete tree with mixed lag counts
        blocks2 = {
            (0, 0): ParamBlock.binary(rng.normal(), rng.normal(size=2)),
            (0, 1): ParamBlock.binary(rng.normal(), rng.normal(size=1).tolist() + [0.0]),
            (1,): ParamBlock.binary(rng.normal(), []),
        }
        tree2 = ContextTree(
            p=2, d=1, nodes={(): None, (0,): None, **blocks2}
        )
        n = int(rng.integers(6, 13))
        data2 = Dataset(
            states=rng.integers(0, 2, size=n), covariates=rng.normal(size=n)
        )
        got = log_likelihood(tree2, data2)
        want = brute_loglik(tree2, data2, tree2.order)
        worst = max(worst, abs(got - want))
        cases += 1
        # three-state, depth-1 tree with two covariate columns
        blocks3 = {
            (w,): ParamBlock(
                alpha=rng.normal(size=2), beta=rng.normal(size=(2, 1, 2))
            )
            for w in range(3)
        }
        tree3 = ContextTree(p=3, d=2, nodes={(): None, **blocks3})
        data3 = Dataset(
            states=rng.integers(0, 3, size=n), covariates=rng.normal(size=(n, 2))
        )
        got = log_likelihood(tree3, data3)
        want = brute_loglik(tree3, data3, tree3.order)
        worst = max(worst, abs(got - want))
        cases += 1
    print(f"criterion 8: worst |loglik - oracle| {worst:.2e} over {cases} cases (<= 1e-10)")
    assert cases == 20
    assert worst <= 1e-10


def test_criterion_9_gamma_boundaries(model2_data):
    tight = fit(model2_data, FitConfig(gamma=1e-300))
    loose = fit(model2_data, FitConfig(gamma=1.0 - 1e-9))
    tau_max = vlmcx.build_maximal_tree(model2_data)
    print(
        f"criterion 9: gamma->0 gives order {tight.tree.order} with "
        f"h={tight.tree.block(()).h}; gamma->1 keeps the unpruned tree "
        f"({len(loose.tree.nodes)} nodes = {len(tau_max.nodes)})"
    )
    assert tight.tree.order == 0
    assert tight.tree.block(()).h == 0
    assert loose.tree.same_structure(tau_max)
