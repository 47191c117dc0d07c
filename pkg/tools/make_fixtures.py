"""Regenerate the committed CSV fixtures from scikit-learn's bundled copies.

Run once: python3 tools/make_fixtures.py data/
Sonar and Ionosphere are not bundled anywhere offline; drop sonar.csv /
ionosphere.csv (same layout: feature columns then a 'label' column) into the
data directory to enable them.
"""

import csv
import sys
from pathlib import Path

from sklearn.datasets import load_breast_cancer, load_iris, load_wine


def dump(path, X, labels, feature_names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*feature_names, "label"])
        for row, lab in zip(X, labels):
            w.writerow([repr(float(v)) for v in row] + [lab])


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    iris = load_iris()
    dump(out / "iris.csv", iris.data, [iris.target_names[t] for t in iris.target],
         [n.replace(" ", "_").replace("_(cm)", "") for n in iris.feature_names])
    wine = load_wine()
    dump(out / "wine.csv", wine.data, [wine.target_names[t] for t in wine.target], wine.feature_names)
    bc = load_breast_cancer()
    dump(out / "breast_cancer.csv", bc.data, [bc.target_names[t] for t in bc.target],
         [n.replace(" ", "_") for n in bc.feature_names])
    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
