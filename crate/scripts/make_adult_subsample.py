"""Build data/adult_subsample_8000.csv from the UCI Adult files.

Usage: python3 scripts/make_adult_subsample.py ADULT_DATA ADULT_TEST OUT_CSV

Both input files use the original UCI layout (no header, ", " separated,
test labels carry a trailing period). Rows are drawn uniformly without
replacement with a fixed seed so the output is reproducible.
"""
import csv
import random
import sys

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]


def read_rows(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != len(COLUMNS):
                continue
            parts[-1] = parts[-1].rstrip(".")
            rows.append(parts)
    return rows


def main():
    data_path, test_path, out_path = sys.argv[1:4]
    rows = read_rows(data_path) + read_rows(test_path)
    print(f"total rows: {len(rows)}")
    rng = random.Random(20250101)
    sample = rng.sample(rows, 8000)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        w.writerows(sample)
    pos = sum(r[-1] == ">50K" for r in sample)
    print(f"wrote {len(sample)} rows, positives {pos}")


if __name__ == "__main__":
    main()
