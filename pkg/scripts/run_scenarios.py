import argparse
import logging
import os
import sys

import yaml

# Add repository root to path so we can import config/pipeline
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from config import OUTPUT_DIR, load_config
from errors import ConfigError
from pipeline import run_pipeline


def run_scenarios(path: str, only: list[str]) -> int:
    with open(path, "r") as f:
        data = yaml.safe_load(f)

    worst = 0
    for entry in data.get("scenarios", []):
        name = entry.get("scenario", "default")
        if only and name not in only:
            continue
        entry.setdefault("output_dir", os.path.join(OUTPUT_DIR, f"{name}-seed{entry.get('seed', 0)}"))
        try:
            config = load_config(None, **entry)
        except ConfigError as exc:
            print(f"Scenario {name}: {exc}")
            worst = max(worst, exc.exit_code)
            continue
        print(f"Running scenario {name} -> {config.output_dir}...")
        result = run_pipeline(config)
        m = result.metrics
        print(f"  exit={result.exit_code} C={m.get('C')} D1={m.get('D1')} D2={m.get('D2')}")
        worst = max(worst, result.exit_code)
    print("Scenarios done.")
    return worst


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the pipeline scenarios listed in a YAML file.")
    parser.add_argument("--file", default=os.path.join(os.path.dirname(__file__), "scenarios.yml"))
    parser.add_argument("only", nargs="*", help="scenario names to run (default: all)")
    args = parser.parse_args()
    logging.basicConfig(level=os.getenv("BHD_LOG_LEVEL", "INFO").upper())
    sys.exit(run_scenarios(args.file, args.only))
