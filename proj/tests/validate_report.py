"""Runs `klap passivate` on the shipped fixtures and validates each report
against the JSON schema. Usage: validate_report.py KLAP SCHEMA DATA_DIR"""
import json
import math
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def numbers(node):
    if isinstance(node, bool):
        return
    if isinstance(node, (int, float)):
        yield node
    elif isinstance(node, dict):
        for v in node.values():
            yield from numbers(v)
    elif isinstance(node, list):
        for v in node:
            yield from numbers(v)


def main():
    klap, schema_path, data = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    with tempfile.TemporaryDirectory() as tmp:
        for model in ["acc.json", "acc_d0.json", "toy.json", "toy_d0125.json", "toy.txt"]:
            out = Path(tmp) / f"{model}.out.json"
            report = Path(tmp) / f"{model}.report.json"
            run = subprocess.run([klap, "passivate", str(data / model), "--out", str(out),
                                  "--report", str(report)], capture_output=True, text=True)
            if run.returncode != 0:
                sys.exit(f"{model}: passivate exited {run.returncode}: {run.stderr}")
            doc = json.loads(report.read_text())
            jsonschema.validate(doc, schema, cls=jsonschema.Draft202012Validator)
            bad = [x for x in numbers(doc) if not math.isfinite(x)]
            if bad:
                sys.exit(f"{model}: non-finite numbers in report")
            check = subprocess.run([klap, "check", str(out)], capture_output=True, text=True)
            if check.returncode != 0:
                sys.exit(f"{model}: output failed check ({check.returncode})")
            print(f"{model}: report valid, h2_error = {doc['h2_error']:.6g}")


if __name__ == "__main__":
    main()
