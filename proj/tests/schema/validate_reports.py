"""Validates every *report*.json under a directory against the report schema."""
import json
import pathlib
import sys

import jsonschema


def main() -> int:
    schema = json.loads(pathlib.Path(sys.argv[1]).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    files = sorted(pathlib.Path(sys.argv[2]).glob("*report*.json"))
    if not files:
        print(f"no reports under {sys.argv[2]}")
        return 1
    bad = 0
    for f in files:
        report = json.loads(f.read_text())
        errors = list(validator.iter_errors(report))
        for e in errors:
            print(f"{f.name}: {'/'.join(map(str, e.path))}: {e.message}")
        if not errors:
            for task, probs in report["probs"].items():
                if abs(sum(probs) - 1.0) > 1e-5:
                    print(f"{f.name}: {task} probabilities sum to {sum(probs)}")
                    errors.append(task)
        bad += bool(errors)
        print(f"{f.name}: {'ok' if not errors else 'INVALID'}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
