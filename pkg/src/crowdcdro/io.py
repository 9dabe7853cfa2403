"""Dataset file formats and experiment outputs.

CSV schemas (labels and annotator ids are 1-based on disk, 0-based in
memory; the conversion happens here and only here):

* ``features.csv``: header ``instance_id,f0,...,f{d-1}``
* ``annotations.csv``: header ``instance_id,annotator_id,label``
* ``truth.csv``: header ``instance_id,label``

``manifest.json`` records the generator seed, preset and dimensions.
``metrics.jsonl`` holds one JSON record per epoch; ``summary.json`` the
final per-method numbers.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .core import AnnotationDataset

FEATURE_FMT = "%.10g"


def write_features(path, features):
    features = np.asarray(features, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id"] + [f"f{j}" for j in range(features.shape[1])])
        for i, row in enumerate(features):
            writer.writerow([i + 1] + [FEATURE_FMT % v for v in row])


def read_features(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 1
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            rows[int(row[0])] = [float(v) for v in row[1:]]
    ids = sorted(rows)
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError(f"{path}: instance ids must be 1..n without gaps")
    return np.array([rows[i] for i in ids], dtype=float)


def write_annotations(path, annotations):
    """``annotations``: (m, 3) 0-based triples; written 1-based."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "annotator_id", "label"])
        for inst, annot, lab in np.asarray(annotations, dtype=np.int64):
            writer.writerow([inst + 1, annot + 1, lab + 1])


def read_annotations(path):
    triples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            inst, annot, lab = (int(v) for v in row)
            if inst < 1 or annot < 1 or lab < 1:
                raise ValueError(f"{path}:{lineno}: ids and labels are 1-based")
            triples.append((inst - 1, annot - 1, lab - 1))
    return np.array(triples, dtype=np.int64)


def write_truth(path, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "label"])
        for i, lab in enumerate(np.asarray(labels, dtype=np.int64)):
            writer.writerow([i + 1, lab + 1])


def read_truth(path):
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            rows[int(row[0])] = int(row[1]) - 1
    ids = sorted(rows)
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError(f"{path}: instance ids must be 1..n without gaps")
    return np.array([rows[i] for i in ids], dtype=np.int64)


def write_dataset(outdir, dataset, manifest):
    os.makedirs(outdir, exist_ok=True)
    write_features(os.path.join(outdir, "features.csv"), dataset.features)
    write_annotations(os.path.join(outdir, "annotations.csv"), dataset.annotations)
    if dataset.true_labels is not None:
        write_truth(os.path.join(outdir, "truth.csv"), dataset.true_labels)
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dataset(datadir, num_classes=None, num_annotators=None):
    """Load a dataset directory; dimensions come from the manifest when
    present, otherwise from the data."""
    manifest_path = os.path.join(datadir, "manifest.json")
    manifest = {}
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    features = read_features(os.path.join(datadir, "features.csv"))
    triples = read_annotations(os.path.join(datadir, "annotations.csv"))
    truth_path = os.path.join(datadir, "truth.csv")
    truth = read_truth(truth_path) if os.path.exists(truth_path) else None

    k = num_classes or manifest.get("num_classes") or int(triples[:, 2].max()) + 1
    if truth is not None:
        k = max(k, int(truth.max()) + 1)
    r = num_annotators or manifest.get("num_annotators") or int(triples[:, 1].max()) + 1
    return AnnotationDataset(
        features=features,
        annotations=triples,
        num_classes=int(k),
        num_annotators=int(r),
        true_labels=truth,
    ), manifest


def write_metrics(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def write_summary(path, summary):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
