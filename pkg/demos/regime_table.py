"""Five-row comparison for one generated network, then a small sweep.

    python demos/regime_table.py [N]
"""
import sys

from splitcast.evaluation import compare_regimes, make_trial, sweep

n = int(sys.argv[1]) if len(sys.argv) > 1 else 36
trial = make_trial(n, 0, seed=7)
for label, scenario in (("splitter on the conflict path", trial.on_path),
                        ("no splitter within reach", trial.off_path)):
    report = compare_regimes(scenario)
    print(f"-- N={n}, {label}: source {scenario.source}, members {' '.join(scenario.joins)}, "
          f"{len(scenario.topology.splitters)} splitters")
    print(report.to_text("table"))

print("-- mean join cost over 10 trials per size")
print(sweep([12, 24, 36], 10, seed=7).to_text("table"))
