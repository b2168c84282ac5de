#!/usr/bin/env python3
"""Runs the CLI on small configs and validates each summary.json against the schema."""
import argparse
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

MUTATED = """\
name: schema_mutated
repeats: 2
scenario:
  env: gridworld
  width: 3
  height: 3
  gamma: 0.9
  r_max: 10
  mutation: {kind: intent_change, round: 3}
game:
  leader: reward
  loss: slk_auto
  rounds: 5
  mode: empirical
"""

UNKNOWN_REWARD = """\
name: schema_random
repeats: 1
scenario:
  env: random
  n_states: 4
  n_actions: 2
  gamma: 0.9
  r_max: 1
  expert_mode: exact
game:
  leader: policy
  loss: supremum
  rounds: 2
  mode: exact
"""


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--cli", required=True)
    parser.add_argument("--schema", required=True)
    parser.add_argument("--config", action="append", default=[])
    args = parser.parse_args()

    schema = json.loads(pathlib.Path(args.schema).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        configs = [pathlib.Path(c) for c in args.config]
        for name, text in (("mutated.yaml", MUTATED), ("random.yaml", UNKNOWN_REWARD)):
            path = tmp / name
            path.write_text(text)
            configs.append(path)
        for i, config in enumerate(configs):
            out = tmp / f"out{i}"
            subprocess.run([args.cli, "run", "--config", str(config), "--out", str(out)], check=True,
                           stdout=subprocess.DEVNULL)
            summary = json.loads((out / "summary.json").read_text())
            errors = sorted(validator.iter_errors(summary), key=lambda e: list(e.path))
            for e in errors:
                print(f"{config.name}: {'/'.join(map(str, e.path))}: {e.message}")
            failures += len(errors)
            print(f"{config.name}: {'valid' if not errors else 'INVALID'}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
