"""Accuracy-versus-defense trade-off across sparsity levels.

A reduced version of the benchmark sweep (two seeds, a subset of levels) so
it finishes in about a minute.  The full five-seed benchmark is what the
acceptance suite runs; use `sparsemia sweep --config <cfg>` for that.
"""

from sparsemia.experiment import (
    compute_tradeoff,
    emit_figure,
    overfit_benchmark_config,
    run_sweep,
    spearman_rho,
)

config = overfit_benchmark_config(seeds=(0, 1))
config.sweep_levels = ("dense", "imp:3", "imp:8", "butterfly:1:2")
print(f"sweep over {config.sweep_levels} with seeds {config.seeds} ...")

report = run_sweep(config)

print(f"\n{'level':<16} {'nonzero %':>10} {'accuracy':>12} {'defense':>14} {'signif.':>8}")
for agg in report.aggregates:
    print(f"{agg.level:<16} {100 * agg.sparsity:>9.1f}% "
          f"{agg.accuracy_mean:>6.1f} ± {agg.accuracy_std:<4.1f} "
          f"{agg.defense_mean:>7.1f} ± {agg.defense_std:<4.1f} "
          f"{str(agg.significant):>8}")

sparse = [a for a in report.aggregates if a.level != "dense"]
rho = spearman_rho([-a.sparsity for a in sparse], [a.defense_mean for a in sparse])
print(f"\nSpearman correlation of defense with decreasing nonzero fraction: {rho:.3f}")

tradeoff = compute_tradeoff(report, (0.0, 0.9))
print(f"trade-off over the sparse window: slope {tradeoff.slope:.2f}, "
      f"relative gain ratio {tradeoff.ratio:.2f}")

emit_figure(report, "/tmp/demo_sweep.svg")
report.save_json("/tmp/demo_report.json")
print("\nwrote /tmp/demo_sweep.svg and /tmp/demo_report.json")
