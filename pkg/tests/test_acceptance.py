"""End-to-end acceptance gate.

Each test prints one summary line of the form "[criterion N] ...: PASS" (or
FAIL) before asserting, so a plain run with -s gives a readable scorecard.
The expensive fixtures (ten seed-replicated training sweeps, the fleet fit)
are module-scoped and shared across criteria; the full file runs in a few
minutes, dominated by the Monte Carlo prediction band.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from ebsurv import baselines as bl
from ebsurv import ebm
from ebsurv.data import NormalizationStats, SurvivalData
from ebsurv.datagen import (
    FleetConfig,
    SimConfig,
    WeibullParams,
    gen_fleet_like,
    gen_sim_dataset,
    split_dataset,
    weibull_density,
    weibull_survival,
)
from ebsurv.ebm import Integration, MlpConfig, ParameterSet
from ebsurv.evaluation import (
    auc,
    integration_convergence_report,
    mean_ks,
    roc_curve,
    roc_from_scores,
)
from ebsurv.nn import gradient_check

N_SEEDS = 10
EBM_TRAIN = dict(learning_rate=0.02)
BASE_TRAIN = dict(learning_rate=0.005)


def _report(criterion: int, label: str, ok: bool) -> bool:
    print(f"[criterion {criterion}] {label}: {'PASS' if ok else 'FAIL'}")
    return ok


def _fit_sim_trio(seed: int) -> dict:
    """Train EBM, PCH, and PMF on one 1,000-sample replicate.

    Hyperparameters for this sample size: EBM 64 nodes, no dropout, lr 0.02;
    grid baselines 32 nodes, 20% dropout, lr 0.005, 15 bins.
    """
    data = gen_sim_dataset(SimConfig(n_subjects=1000, seed=seed))
    train, val, test = split_dataset(data, seed=seed + 1)
    norm = NormalizationStats.fit(train.x)
    t_max = float(np.max(train.tau))

    model = ebm.initialize_energy_model(2, t_max, nodes_per_layer=64,
                                        dropout_rate=0.0, norm=norm, seed=seed)
    efit, _ = ebm.train(train, val, model,
                        ebm.TrainConfig(seed=seed, **EBM_TRAIN))
    out = {
        "seed": seed,
        "t_max": t_max,
        "test": test,
        "ebm_model": efit,
        "ebm": mean_ks(efit, t_max),
    }
    for kind in ("pch", "pmf"):
        m = bl.initialize_baseline(kind, 2, t_max, n_grid=15, norm=norm,
                                   seed=seed)
        fit, _ = bl.train_baseline(m, train, val,
                                   bl.TrainConfig(seed=seed, **BASE_TRAIN))
        out[kind] = mean_ks(fit, t_max)
    marginal = bl.MarginalHazardModel.fit(train, n_grid=15, t_max=t_max)
    out["marginal"] = mean_ks(marginal, t_max)
    return out


@pytest.fixture(scope="module")
def sim_sweep():
    return [_fit_sim_trio(seed) for seed in range(N_SEEDS)]


@pytest.fixture(scope="module")
def fleet_fit():
    data = gen_fleet_like(FleetConfig(n_subjects=4000, seed=0))
    train, val, test = split_dataset(data, seed=1)
    norm = NormalizationStats.fit(train.x)
    t_max = float(np.max(train.tau))
    model = ebm.initialize_energy_model(100, t_max, nodes_per_layer=64,
                                        dropout_rate=0.0, norm=norm, seed=0)
    efit, _ = ebm.train(train, val, model, ebm.TrainConfig(seed=0, **EBM_TRAIN))
    marginal = bl.MarginalHazardModel.fit(train, n_grid=15, t_max=t_max)
    return {"ebm": efit, "marginal": marginal, "test": test, "t_max": t_max}


# criterion 1: generator censoring rates


def test_criterion_1_censoring_rates():
    sim = gen_sim_dataset(SimConfig(n_subjects=20000, seed=0))
    sim_rate = 1.0 - float(np.mean(sim.delta))
    fleet = gen_fleet_like(FleetConfig(n_subjects=10000, seed=0))
    fleet_rate = 1.0 - float(np.mean(fleet.delta))
    ok = abs(sim_rate - 0.56) <= 0.03 and abs(fleet_rate - 0.74) <= 0.01
    assert _report(
        1, f"censoring rates (sim {sim_rate:.3f}, fleet {fleet_rate:.3f})", ok
    )


# criterion 2: survival-curve invariants for random and trained networks


def _survival_invariants(model, x) -> bool:
    integ = Integration("trapezoid", 200)
    grid = np.linspace(0.0, model.t_tail, 200)
    curve = model.survival_curve(grid, x, integ)
    z = np.exp(model.log_normalizer(x, integ))
    parts = model.trapezoid_partial_mass(0.0, x, 200) + model.tail_mass(x)
    return (
        curve[0] == 1.0
        and bool(np.all(np.diff(curve) <= 0.0))
        and curve[-1] == 0.0
        and abs(z - parts) <= 1e-12 * abs(z)
    )


def test_criterion_2_survival_invariants(sim_sweep, fleet_fit):
    rng = np.random.default_rng(5)
    checks = []
    for seed in (3, 4):
        m = ebm.initialize_energy_model(2, 2.0, nodes_per_layer=16, seed=seed)
        checks.append(_survival_invariants(m, rng.random(2)))
    trained = sim_sweep[0]["ebm_model"]
    checks.append(_survival_invariants(trained, sim_sweep[0]["test"].x[0]))
    checks.append(_survival_invariants(fleet_fit["ebm"], fleet_fit["test"].x[0]))
    ok = all(checks)
    assert _report(
        2, f"survival invariants on {len(checks)} random+trained networks", ok
    )


# criterion 3: analytic gradients against central finite differences


def _random_survival_data(rng, n, dim, t_max) -> SurvivalData:
    return SurvivalData(
        ids=np.arange(n),
        x=rng.random((n, dim)),
        tau=rng.uniform(0.0, t_max, n),
        delta=rng.integers(0, 2, n),
    )


def _offset_biases(params, rng) -> None:
    # Keeps hidden pre-activations away from the exact ReLU kink, where
    # central differences see only half the one-sided slope.
    for b in params.biases:
        b[...] = rng.uniform(-0.3, 0.3, size=b.shape)


def _ebm_grad_error(seed: int) -> float:
    rng = np.random.default_rng(100 + seed)
    m = ebm.initialize_energy_model(2, 1.0, nodes_per_layer=5, seed=seed)
    _offset_biases(m.params, rng)
    data = _random_survival_data(rng, 5, 2, 1.0)
    samples = ebm.draw_nll_samples(m, data, 6, rng)
    report = gradient_check(m.params, lambda pv: ebm.nll_var(pv, m, data, samples))
    return report.max_rel_error


def _grid_grad_error(kind: str, seed: int) -> float:
    rng = np.random.default_rng(200 + seed)
    m = bl.initialize_baseline(kind, 2, 1.0, n_grid=3, nodes_per_layer=5,
                               dropout_rate=0.0, seed=seed)
    _offset_biases(m.params, rng)
    data = _random_survival_data(rng, 6, 2, 1.0)
    loss = bl.pch_loss_var if kind == "pch" else bl.pmf_loss_var
    report = gradient_check(m.params, lambda pv: loss(pv, m, data))
    return report.max_rel_error


def test_criterion_3_gradient_checks():
    worst = 0.0
    for seed in range(5):
        worst = max(worst, _ebm_grad_error(seed))
        worst = max(worst, _grid_grad_error("pch", seed))
        worst = max(worst, _grid_grad_error("pmf", seed))
    ok = worst < 1e-4
    assert _report(3, f"gradient checks, 15 instances, max rel {worst:.1e}", ok)


# criterion 4: quadrature oracles


def _constant_energy_model():
    cfg = MlpConfig(input_dim=2, output_dim=1, nodes_per_layer=4, hidden_layers=2)
    return ebm.EnergyModel(cfg, ParameterSet.zeros(cfg), t_max=1.0, tail_factor=2.0)


def _linear_energy_model():
    cfg = MlpConfig(input_dim=2, output_dim=1, nodes_per_layer=4, hidden_layers=2)
    params = ParameterSet.zeros(cfg)
    params.weights[0][0, 0] = 1.0
    params.weights[1][0, 0] = 1.0
    params.weights[2][0, 0] = 1.0
    return ebm.EnergyModel(cfg, params, t_max=1.0, tail_factor=2.0)


def test_criterion_4_quadrature_oracles():
    x = np.array([0.5])
    flat = _constant_energy_model()
    z = np.exp(flat.log_normalizer(x, Integration("trapezoid", 20)))
    s_half = flat.survival(0.5, x, Integration("trapezoid", 20))
    closed = abs(z - 2.0) <= 2.0 * 1e-12 and abs(s_half - 0.75) <= 1e-12

    ramp = _linear_energy_model()
    exact = 1.0 - np.exp(-1.0)
    trap = ramp.trapezoid_partial_mass(0.0, x, 200)
    linear_ok = abs(trap - exact) / exact < 1e-4

    rng = np.random.default_rng(11)
    reps = np.array([ramp.mc_partial_mass(0.0, x, 16, rng) for _ in range(10000)])
    se = reps.std(ddof=1) / np.sqrt(reps.size)
    dev = abs(reps.mean() - exact)
    mc_ok = dev < 3.0 * se

    ok = closed and linear_ok and mc_ok
    assert _report(
        4,
        f"quadrature oracles (Z={z:.12f}, ramp rel {abs(trap-exact)/exact:.1e}, "
        f"mc dev {dev:.1e} vs 3se {3*se:.1e})",
        ok,
    )


# criterion 5: sensitivity to the number of training-time integration samples


def test_criterion_5_training_sample_count():
    data = gen_sim_dataset(SimConfig(n_subjects=200, seed=0))
    train, val, _ = split_dataset(data, seed=1)
    norm = NormalizationStats.fit(train.x)
    t_max = float(np.max(train.tau))

    def run(n_s, seed):
        m = ebm.initialize_energy_model(2, t_max, nodes_per_layer=64,
                                        dropout_rate=0.0, norm=norm, seed=seed)
        _, h = ebm.train(train, val, m,
                         ebm.TrainConfig(n_samples=n_s, seed=seed, **EBM_TRAIN))
        return h

    finals = {}
    converged = True
    for n_s in (3, 50, 100):
        h = run(n_s, 0)
        finals[n_s] = h.val_loss[h.best_epoch]
        converged = converged and np.isfinite(h.val_loss).all() \
            and finals[n_s] <= h.val_loss[0]

    seed_finals = []
    for s in range(1, 6):
        h = run(3, s)
        seed_finals.append(h.val_loss[h.best_epoch])
    spread3 = np.std(seed_finals, ddof=1)
    gap = abs(finals[50] - finals[100])
    ok = converged and gap < spread3
    assert _report(
        5, f"sample-count stability (gap {gap:.4f} < seed spread {spread3:.4f})", ok
    )


# criterion 6: integration method at prediction time


def test_criterion_6_prediction_integration(sim_sweep):
    model = sim_sweep[0]["ebm_model"]
    t_max = sim_sweep[0]["t_max"]
    points = integration_convergence_report(model, t_max, seed=7)
    trap = {p.n_points: p.mean_ks for p in points if p.method == "trapezoid"}
    mc = [p.mean_ks for p in points if p.method == "mc"]
    gap10 = abs(trap[10] - trap[200])
    gap20 = abs(trap[20] - trap[200])
    band = max(mc) - min(mc)
    ok = gap10 < 0.01 and gap20 < 0.01 and band > gap10
    assert _report(
        6,
        f"prediction integration (trap gaps {gap10:.1e}/{gap20:.1e}, "
        f"mc band {band:.1e})",
        ok,
    )


# criterion 7: model comparison over seed-replicated datasets


def test_criterion_7_model_comparison(sim_sweep):
    means = {k: float(np.mean([r[k] for r in sim_sweep]))
             for k in ("ebm", "pch", "pmf", "marginal")}
    ok = (
        means["ebm"] < 0.5
        and means["ebm"] < means["marginal"]
        and means["ebm"] <= means["pch"]
        and means["ebm"] <= means["pmf"]
    )
    assert _report(
        7,
        "seed-averaged mean-KS (ebm {ebm:.4f}, pch {pch:.4f}, pmf {pmf:.4f}, "
        "marginal {marginal:.4f})".format(**means),
        ok,
    )


# criterion 8: replacement ROC suite


def test_criterion_8_roc_suite(fleet_fit):
    rng = np.random.default_rng(2024)

    labels = np.array([1, 1, 1, 0, 0, 0])
    perfect = auc(roc_from_scores(np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9]), labels))

    n = 6000
    rand_labels = rng.integers(0, 2, n)
    rand = auc(roc_from_scores(rng.random(n), rand_labels))

    aucs = {}
    endpoints = True
    for h in (0.25, 0.5):
        c_ebm = roc_curve(fleet_fit["ebm"], fleet_fit["test"], h)
        c_mar = roc_curve(fleet_fit["marginal"], fleet_fit["test"], h)
        for c in (c_ebm, c_mar):
            pts = set(zip(c.fpr.tolist(), c.tpr.tolist()))
            endpoints = endpoints and (0.0, 0.0) in pts and (1.0, 1.0) in pts
        aucs[h] = (auc(c_ebm), auc(c_mar))

    ok = (
        endpoints
        and perfect == 1.0
        and abs(rand - 0.5) <= 0.02
        and all(e > m for e, m in aucs.values())
    )
    assert _report(
        8,
        f"roc suite (oracle {perfect:.2f}, random {rand:.3f}, fleet "
        + ", ".join(f"h={h}: {e:.3f}>{m:.3f}" for h, (e, m) in aucs.items()),
        ok,
    )


# criterion 9: brute-force likelihood and closed-form distribution checks


def _brute_bin(cuts, tau):
    for j in range(len(cuts) - 2, 0, -1):
        if tau > cuts[j]:
            return j
    return 0


def _brute_pch_nll(model, data):
    cuts = model.grid.cuts
    total = 0.0
    for rec in data.records():
        lam = model.hazards(rec.x)[0]
        for j in range(model.grid.n_grid):
            total += lam[j] * max(0.0, min(rec.tau, cuts[j + 1]) - cuts[j])
        if rec.delta == 1:
            total -= np.log(lam[_brute_bin(cuts, rec.tau)])
    return total


def _brute_pmf_nll(model, data):
    cuts = model.grid.cuts
    n_grid = model.grid.n_grid
    total = 0.0
    for rec in data.records():
        p = model.probabilities(rec.x)[0]
        k = _brute_bin(cuts, rec.tau)
        if rec.delta == 1:
            total -= np.log(p[k])
        else:
            s = p[n_grid]
            for j in range(k + 1, n_grid):
                s += p[j]
            frac = (rec.tau - cuts[k]) / model.grid.width
            total -= np.log(s + (1.0 - frac) * p[k])
    return total


def test_criterion_9_brute_force_and_weibull():
    worst = 0.0
    for n_grid in (1, 2, 3):
        rng = np.random.default_rng(40 + n_grid)
        data = _random_survival_data(rng, 12, 2, 2.0)
        pch = bl.initialize_baseline("pch", 2, 2.0, n_grid=n_grid,
                                     nodes_per_layer=6, dropout_rate=0.0,
                                     seed=n_grid)
        pmf = bl.initialize_baseline("pmf", 2, 2.0, n_grid=n_grid,
                                     nodes_per_layer=6, dropout_rate=0.0,
                                     seed=n_grid)
        worst = max(
            worst,
            abs(bl.pch_nll(pch, data) - _brute_pch_nll(pch, data)),
            abs(bl.pmf_nll(pmf, data) - _brute_pmf_nll(pmf, data)),
        )

    weib_ok = True
    for lam, k in ((1.0, 0.8), (2.0, 1.0), (1.3, 4.0)):
        params = WeibullParams(lam, k)
        total, _ = quad(lambda t: weibull_density(t, params), 0.0, np.inf)
        weib_ok = weib_ok and abs(total - 1.0) < 1e-6
        for t in (0.3, 1.0, 2.5):
            mass, _ = quad(lambda u: weibull_density(u, params), 0.0, t,
                           limit=200)
            weib_ok = weib_ok and abs((1.0 - mass) - weibull_survival(t, params)) < 1e-6

    ok = worst < 1e-10 and weib_ok
    assert _report(
        9, f"brute-force likelihoods (max dev {worst:.1e}) and closed forms", ok
    )
