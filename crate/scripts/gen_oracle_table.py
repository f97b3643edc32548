#!/usr/bin/env python3
"""Write the oracle scorer table for the shipped suites.

Each case contributes one rule per step of its first acceptable plan (exact
instruction, exact history) putting all mass on the next label, a final rule
for "done", and a canned plan generation.
"""

import json
import sys
from pathlib import Path

ASSETS = Path(__file__).resolve().parent.parent / "crates" / "core" / "assets"
SUITES = ["kitchen_suite.json", "kitchen_drawers_suite.json"]


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else ASSETS / "kitchen_oracle_table.json"
    rules, generations = [], []
    for name in SUITES:
        for case in json.loads((ASSETS / name).read_text()):
            text = case["instruction"]["text"]
            plan = case["acceptable_plans"][0]
            for t in range(len(plan) + 1):
                rule = {"instruction": text, "exact": True}
                if t:
                    rule["history_suffix"] = plan[:t]
                rule["history_len"] = t
                rule["distribution"] = {plan[t] if t < len(plan) else "done": 1.0}
                rules.append(rule)
            steps = plan + ["done"]
            generations.append({
                "instruction": text,
                "exact": True,
                "kind": "plan",
                "text": ", ".join(f"{i + 1}. {s}" for i, s in enumerate(steps)),
            })
    table = {"format_version": 1, "floor": 1e-6, "rules": rules, "generations": generations}
    out.write_text(json.dumps(table, indent=1) + "\n")
    print(f"wrote {len(rules)} rules to {out}")


if __name__ == "__main__":
    main()
