"""Report emission: schema-validated report.json plus CSV curve/confusion files.

curves.csv is the plotting contract (epoch, split, accuracy, loss) and is
byte-stable across reruns of the same config+seed; report.json additionally
carries wall-clock timings, which are not.
"""

import csv
import json
from importlib import resources

import jsonschema

from ..report import RunReport


def _schema():
    with resources.files("wavepnn.harness").joinpath(
            "schemas/report.schema.json").open() as f:
        return json.load(f)


def report_dict(report: RunReport, config: dict) -> dict:
    return {
        "method": report.method,
        "seed": int(report.seed),
        "config_hash": report.config_hash,
        "status": report.status,
        "config": config,
        "curves": [list(row) for row in report.curves],
        "loss_traces": [list(row) for row in report.loss_traces],
        "confusions": report.confusions,
        "diagnostics": report.diagnostics,
        "wall_clock": list(report.wall_clock),
        "extras": report.extras,
    }


def validate_report(doc: dict):
    jsonschema.validate(doc, _schema())


def write_artifacts(report: RunReport, config: dict, out_dir):
    """Write report.json, curves.csv and confusion.csv under out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = report_dict(report, config)
    validate_report(doc)
    with open(out_dir / "report.json", "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
    with open(out_dir / "curves.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "split", "accuracy", "loss"])
        for epoch, split, acc, loss in report.curves:
            w.writerow([epoch, split, repr(acc), repr(loss)])
    with open(out_dir / "confusion.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["split", "true_class", "counts..."])
        for split, matrix in report.confusions.items():
            for i, row in enumerate(matrix):
                w.writerow([split, i, *row])
    return out_dir / "report.json"
