"""Pareto analysis over a results ledger.

Simulates a budget sweep (many expansion sizes, efficiency up, quality
down), finds the non-dominated front, and writes the CSV + SVG report.
"""

import random
from pathlib import Path

from tokmend.candidates import budget_schedule
from tokmend.pipeline import ResultRow, pareto_front, write_report

rng = random.Random(3)
max_budget = 584
budgets = budget_schedule(max_budget, [1, 0.5, 0.25, 0.125, 0.0625, 0.03125])
print("budget schedule:", budgets)

rows = []
for budget in budgets:
    for seed in (42, 20, 1984):
        efficiency = 0.55 * (budget / max_budget) ** 0.7 + rng.uniform(-0.03, 0.03)
        quality = 1.0 - 0.35 * (budget / max_budget) ** 1.5 + rng.uniform(-0.02, 0.02)
        rows.append(
            ResultRow(
                fingerprint=f"b{budget}s{seed}",
                language="hin",
                method="bpe_extend",
                init="fvt",
                items_added=budget,
                token_reduction=round(efficiency, 4),
                performance=round(quality, 4),
                metric="performance_conservation",
            )
        )

front = pareto_front(rows)
print(f"{len(front)} of {len(rows)} runs are non-dominated:")
for r in front:
    print(f"  {r.fingerprint:12s} reduction={r.token_reduction:.3f} "
          f"performance={r.performance:.3f}")

out = Path("demo_output")
out.mkdir(exist_ok=True)
write_report(rows, front, out / "ledger.csv", out / "pareto.svg")
print(f"\nwrote {out / 'ledger.csv'} and {out / 'pareto.svg'}")
