"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail line
per criterion.  The end-to-end attack and sweep criteria train real models
and take a few minutes combined.
"""

import json

import numpy as np
import pytest

from sparsemia import datasets, imp, mia, resnet20
from sparsemia.butterfly import (
    OpCounter,
    butterfly_support,
    factorized_matvec,
    square_butterfly_chain,
    FactorizedMatrix,
    generalized_support,
)
from sparsemia.experiment import (
    ExperimentConfig,
    ExperimentReport,
    LevelAggregate,
    compute_tradeoff,
    overfit_benchmark_config,
    parse_level,
    run_experiment,
    run_sweep,
    spearman_rho,
    build_dataset,
    _dense_param_total,
    _train_side,
    run_pipeline,
)
from sparsemia.nn import (
    ButterflyLinear,
    Conv2d,
    Dense,
    Flatten,
    Network,
    Parameter,
    ReLU,
    TrainConfig,
    cross_entropy,
    cross_entropy_grad,
)
from sparsemia.rng import seed_stream


def criterion(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] {name}: {status} {detail}")
    assert ok, f"{name}: {detail}"


# -- butterfly correctness ----------------------------------------------------


def scatter_dense_oracle(spec, values):
    p, r, s, q = spec
    out = np.zeros((p * r * q, p * s * q))
    for (i, j), v in zip(sorted(generalized_support(*spec).entries), values):
        out[i, j] = v
    return out


def test_butterfly_correctness():
    rng = np.random.default_rng(2024)
    worst = 0.0
    instances = 0
    for depth in (2, 4, 6, 8, 10):  # N in {4, 16, 64, 256, 1024}
        n = 2 ** depth
        chain = square_butterfly_chain(depth)
        repeats = 30 if n <= 64 else 5
        dense = None
        for _ in range(repeats):
            fm = FactorizedMatrix(chain, [rng.standard_normal(k) for k in chain.factor_nnz])
            dense = scatter_dense_oracle(chain.factor_specs[0], fm.factor_values[0])
            for spec, vals in zip(chain.factor_specs[1:], fm.factor_values[1:]):
                dense = dense @ scatter_dense_oracle(spec, vals)
            x = rng.standard_normal(n)
            counter = OpCounter()
            got = factorized_matvec(fm, x, counter=counter)
            want = dense @ x
            bound = 1e-12 * (1 + np.abs(x).max() * max(np.abs(v).max() for v in fm.factor_values))
            worst = max(worst, np.abs(got - want).max() / bound)
            assert counter.madds == 4 * n * depth  # 4 N log2(N), exactly
            instances += 1
        assert np.abs(got - want).max() <= bound
    criterion("butterfly matvec vs dense oracle (N up to 1024)",
              worst <= 1.0 and instances >= 100,
              f"worst error {worst:.3f}x bound over {instances} instances")


def test_support_structure():
    for depth in range(1, 7):
        n = 2 ** depth
        prod = np.eye(n, dtype=np.int64)
        for level in range(1, depth + 1):
            dense = butterfly_support(level, depth).to_dense()
            assert dense.sum() == 2 * n
            assert np.all(dense.sum(axis=0) == 2)
            assert np.all(dense.sum(axis=1) == 2)
            prod = prod @ dense
        ok = np.all(prod > 0)
        assert ok
    criterion("square supports: 2 nnz per row/col, dense product up to depth 6", True)


# -- parameter accounting -----------------------------------------------------


def test_parameter_accounting():
    total = resnet20.param_count()
    criterion("reference network parameter total", total == 272_474, f"got {total}")
    table = {(1, 2): 32.3, (1, 3): 29.6, (2, 2): 15.9,
             (2, 3): 12.9, (3, 2): 11.8, (3, 3): 8.5}
    worst = 0.0
    for (segments, depth), expected in table.items():
        got = resnet20.butterfly_fraction(segments, depth)
        worst = max(worst, abs(got - expected))
        assert abs(got - expected) <= 0.5, f"S={segments} L={depth}: {got:.2f} vs {expected}"
    criterion("butterfly fraction table within 0.5 points", True,
              f"worst deviation {worst:.3f}")


# -- pruning recurrence -------------------------------------------------------


def test_imp_recurrence_and_zero_persistence():
    rng = np.random.default_rng(7)
    n0 = 2000
    p = Parameter(rng.standard_normal(n0), prunable=True)
    expected = imp.survivor_counts(n0, 8, 0.2)
    masks = []
    for k in range(1, 9):
        (mask,) = imp.magnitude_prune([p], 0.2)
        p.set_mask(mask)
        masks.append(mask)
        assert int(mask.sum()) == expected[k]
    for k in (1, 3, 8):
        assert abs(expected[k] / n0 - 0.8 ** k) <= 5 / n0
    for newer, older in zip(masks[1:], masks):
        assert np.all(newer <= older)

    # pruned weights stay bitwise zero through retraining
    data = datasets.make_synthetic("blobs", 240, 3, noise=0.6, seed=1)
    net = Network([Dense(2, 16, rng=rng), ReLU(), Dense(16, 3, rng=rng)])
    weights = [q for q in net.params() if q.prunable]
    new_masks = imp.magnitude_prune(weights, 0.5)
    for q, m in zip(weights, new_masks):
        q.set_mask(m)
    from sparsemia.nn import train
    train(net, data.subset(np.arange(200)), data.subset(np.arange(200, 240)),
          TrainConfig(epochs=5, batch_size=32, initial_lr=0.05,
                      weight_decay=0.001, seed=3))
    for q in weights:
        assert np.all(q.value[q.mask == 0] == 0.0)
    criterion("pruning recurrence exact, masks nested, zeros persist", True)


# -- gradients ----------------------------------------------------------------


def _max_gradient_error(net, x, labels, rng, probes=20):
    net.zero_grads()
    net.backward(cross_entropy_grad(net.forward(x, training=True), labels))
    worst = 0.0
    for p in net.params():
        grads = p.grad.copy()
        for idx in rng.choice(p.size, size=min(probes, p.size), replace=False):
            if p.mask is not None and p.mask.flat[idx] == 0:
                continue
            orig = p.value.flat[idx]
            h = 1e-5
            p.value.flat[idx] = orig + h
            up = cross_entropy(net.forward(x, training=True), labels)
            p.value.flat[idx] = orig - h
            down = cross_entropy(net.forward(x, training=True), labels)
            p.value.flat[idx] = orig
            num = (up - down) / (2 * h)
            ana = grads.flat[idx]
            worst = max(worst, abs(ana - num) / max(1e-8, abs(ana) + abs(num)))
    return worst


def test_gradient_suite():
    rng = np.random.default_rng(11)
    worst = {}

    net = Network([Dense(6, 10, rng=rng), ReLU(), Dense(10, 4, rng=rng)])
    worst["dense"] = _max_gradient_error(
        net, rng.standard_normal((5, 6)), rng.integers(0, 4, size=5), rng)

    net = Network([Conv2d(2, 4, 3, padding=1, rng=rng), ReLU(), Flatten(),
                   Dense(4 * 16, 3, rng=rng)])
    worst["conv"] = _max_gradient_error(
        net, rng.standard_normal((4, 2, 4, 4)), rng.integers(0, 3, size=4), rng)

    masked = Dense(8, 8, rng=rng)
    mask = (rng.random((8, 8)) < 0.6).astype(np.uint8)
    mask.flat[0] = 1
    masked.weight.set_mask(mask)
    net = Network([masked, ReLU(), Dense(8, 3, rng=rng)])
    worst["masked"] = _max_gradient_error(
        net, rng.standard_normal((5, 8)), rng.integers(0, 3, size=5), rng)

    net = Network([ButterflyLinear(square_butterfly_chain(4), rng=rng), ReLU(),
                   Dense(16, 3, rng=rng)])
    worst["butterfly"] = _max_gradient_error(
        net, rng.standard_normal((5, 16)), rng.integers(0, 3, size=5), rng)

    ok = all(v <= 1e-5 for v in worst.values())
    criterion("gradient suite vs central finite differences",
              ok, " ".join(f"{k}={v:.2e}" for k, v in worst.items()))


# -- sensitivity oracle -------------------------------------------------------


def test_sensitivity_oracle():
    a_mat = np.array([[3.0, 4.0], [1.0, -2.0], [-4.0, -2.0]])

    def predict(x):
        return 1.0 / 3.0 + x @ a_mat.T

    mc = 10_000
    feats = mia.extract_features(predict, np.zeros((1, 2)), np.array([0]), 3,
                                 eps=0.001, mc_samples=mc,
                                 rng=np.random.default_rng(5))
    norms = np.linalg.norm(a_mat, axis=1)
    want = norms * np.sqrt(2 / np.pi)
    se = norms * np.sqrt(1 - 2 / np.pi) / np.sqrt(mc)
    deviation = np.abs(feats.sensitivity[0] - want)
    ok = bool(np.all(deviation <= 3 * se))

    const_feats = mia.extract_features(
        lambda x: np.full((len(x), 3), 1.0 / 3.0), np.zeros((4, 2)),
        np.zeros(4, dtype=int), 3, rng=np.random.default_rng(6))
    ok = ok and bool(np.all(const_feats.sensitivity == 0.0))
    criterion("sensitivity matches folded-gaussian closed form at 10k samples",
              ok, f"max deviation {np.max(deviation / se):.2f} standard errors")


# -- defense metric -----------------------------------------------------------


def test_defense_metric():
    cases = {50.0: 100.0, 75.0: 50.0, 100.0: 0.0}
    for precision, want in cases.items():
        outcome = mia.AttackOutcome(precision=precision, discriminator={},
                                    scores=np.zeros(2), membership=np.array([0, 1]))
        assert outcome.defense == want
        assert outcome.defense + 2 * outcome.precision == 200.0
    criterion("defense metric D = 200 - 2P exact", True)


# -- end-to-end attack signal -------------------------------------------------


@pytest.fixture(scope="module")
def benchmark_models():
    """Target/shadow pairs of the overfit benchmark, one per seed."""
    config = overfit_benchmark_config()
    dataset = build_dataset(config)
    level = parse_level("dense")
    out = []
    for seed in config.seeds:
        split = mia.partition(len(dataset), master_seed=seed)
        target, _ = _train_side(config, level, seed, dataset,
                                split.target_train, split.target_val, "target")
        shadow, _ = _train_side(config, level, seed, dataset,
                                split.shadow_train, split.shadow_val, "shadow")
        out.append((seed, split, target, shadow))
    return config, dataset, out


def test_attack_signal_on_overfit_benchmark(benchmark_models):
    config, dataset, pairs = benchmark_models
    precisions = []
    for seed, split, target, shadow in pairs:
        grid = mia.train_discriminators(
            shadow.predict_proba, dataset, split,
            seed=int(seed_stream(seed, "dense-discriminator").integers(2 ** 31)),
            eps=config.eps, mc_samples=config.mc_samples,
            epochs=config.discriminator_epochs,
        )
        outcome = mia.attack(
            grid, target.predict_proba, dataset, split,
            seed=int(seed_stream(seed, "dense-attack").integers(2 ** 31)),
            eps=config.eps, mc_samples=config.mc_samples,
        )
        precisions.append(outcome.precision)
    mean_p = float(np.mean(precisions))
    criterion("mean attack precision on overfit benchmark >= 60",
              mean_p >= 60.0, f"mean P = {mean_p:.1f} over {len(precisions)} seeds")


def test_shuffled_membership_baseline(benchmark_models):
    config, dataset, pairs = benchmark_models
    precisions = []
    for seed, split, target, shadow in pairs:
        rng = seed_stream(seed, "shuffle-baseline")
        n_half = len(split.shadow_train)
        fake = rng.permutation(np.concatenate([
            np.ones(n_half, dtype=np.int64), np.zeros(n_half, dtype=np.int64)]))
        grid = mia.train_discriminators(
            shadow.predict_proba, dataset, split,
            seed=int(seed_stream(seed, "shuffle-discriminator").integers(2 ** 31)),
            eps=config.eps, mc_samples=config.mc_samples,
            epochs=config.discriminator_epochs, membership=fake,
        )
        outcome = mia.attack(
            grid, target.predict_proba, dataset, split,
            seed=int(seed_stream(seed, "shuffle-attack").integers(2 ** 31)),
            eps=config.eps, mc_samples=config.mc_samples,
        )
        precisions.append(outcome.precision)
    mean_p = float(np.mean(precisions))
    criterion("shuffled-label attack within 50 +/- 3",
              abs(mean_p - 50.0) <= 3.0,
              f"mean P = {mean_p:.1f} over {len(precisions)} seeds")


# -- trade-off trend ----------------------------------------------------------


def test_tradeoff_trend_over_sparsity_sweep():
    config = overfit_benchmark_config()
    report = run_sweep(config)
    dense = report.level_aggregate("dense")
    sparse = [a for a in report.aggregates if a.level != "dense"]
    assert len(sparse) >= 5
    rho = spearman_rho([-a.sparsity for a in sparse],
                       [a.defense_mean for a in sparse])
    max_drop = max(dense.accuracy_mean - a.accuracy_mean for a in sparse)
    ok = rho >= 0.0 and max_drop <= 15.0
    criterion("defense trend over sparsity sweep",
              ok, f"spearman rho = {rho:.3f}, max accuracy drop = {max_drop:.1f}")


def _aggregate(level, sparsity, acc, defense):
    return LevelAggregate(level=level, sparsity=sparsity, seeds=5,
                          accuracy_mean=acc, accuracy_std=1.0,
                          precision_mean=(200 - defense) / 2, precision_std=1.0,
                          defense_mean=defense, defense_std=1.0)


def test_tradeoff_analytic_fixtures():
    # two-point fixture forcing slope -3.25
    slope_report = ExperimentReport(aggregates=[
        _aggregate("dense", 1.0, 85.0, 30.0),
        _aggregate("imp:3", 0.5, 80.0, 40.0),
        _aggregate("imp:8", 0.2, 70.0, 72.5),
    ])
    slope = compute_tradeoff(slope_report, (0.0, 0.9)).slope
    ok_slope = abs(slope - (-3.25)) <= 1e-10

    # 10% relative accuracy loss for 36% relative defense gain: ratio 3.6
    ratio_report = ExperimentReport(aggregates=[
        _aggregate("dense", 1.0, 87.5, 50.0),
        _aggregate("imp:5", 0.3, 87.5 * 0.9, 50.0 * 1.36),
        _aggregate("imp:8", 0.2, 87.5 * 0.9, 50.0 * 1.36),
    ])
    ratio = compute_tradeoff(ratio_report, (0.0, 0.9)).ratio
    ok_ratio = abs(ratio - 3.6) <= 1e-10
    criterion("trade-off analytic fixtures (slope -3.25, ratio 3.6)",
              ok_slope and ok_ratio, f"slope {slope:.4f}, ratio {ratio:.4f}")


# -- determinism --------------------------------------------------------------


def test_determinism_bitwise_reports():
    config = ExperimentConfig(
        dataset_kind="blobs", dataset_size=400, classes=3, noise=2.0,
        dataset_dim=4, hidden=(16,), epochs=10, batch_size=32,
        initial_lr=0.05, discriminator_epochs=10, seeds=(0,), model="dense",
    )
    a = json.dumps(run_experiment(config).to_dict(), sort_keys=True)
    b = json.dumps(run_experiment(config).to_dict(), sort_keys=True)
    criterion("identical config and seed give bitwise-identical reports", a == b)
