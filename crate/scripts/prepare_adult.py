#!/usr/bin/env python3
"""Build data/adult/adult.csv from the UCI Adult census files.

The raw files (adult.data, adult.test) are taken from a local directory if
given, otherwise from the `responsibly` wheel, which bundles them. Rows with
any missing value ("?") are dropped, leaving 45,222 rows. Capital gain and
loss are reduced to 0/1 indicators; native country and the survey weight
columns are dropped, giving 11 features.

Usage: prepare_adult.py [RAW_DIR] [OUT_CSV]
"""
import csv
import io
import os
import subprocess
import sys
import tempfile
import zipfile

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "gender",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]
KEEP = [
    "age", "workclass", "education", "marital_status", "occupation",
    "relationship", "race", "gender", "capital_gain", "capital_loss",
    "hours_per_week",
]


def raw_files(raw_dir):
    if raw_dir:
        for name in ("adult.data", "adult.test"):
            with open(os.path.join(raw_dir, name), "rb") as fh:
                yield name, fh.read()
        return
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "-d", tmp, "responsibly==0.1.2"],
            check=True,
        )
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        with zipfile.ZipFile(os.path.join(tmp, wheel)) as zf:
            for name in ("adult.data", "adult.test"):
                yield name, zf.read("responsibly/dataset/adult/" + name)


def rows(name, payload):
    text = io.StringIO(payload.decode("utf-8"))
    for i, rec in enumerate(csv.reader(text, skipinitialspace=True)):
        if name == "adult.test" and i == 0:
            continue  # "|1x3 Cross validator"
        if len(rec) != len(COLUMNS):
            continue
        rec = [c.strip() for c in rec]
        if any(c == "?" or c == "" for c in rec):
            continue
        yield dict(zip(COLUMNS, rec))


def main():
    raw_dir = sys.argv[1] if len(sys.argv) > 1 and sys.argv[1] != "-" else None
    out = sys.argv[2] if len(sys.argv) > 2 else "data/adult/adult.csv"
    n = 0
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(KEEP + ["income"])
        for name, payload in raw_files(raw_dir):
            for r in rows(name, payload):
                r["capital_gain"] = "1" if int(r["capital_gain"]) > 0 else "0"
                r["capital_loss"] = "1" if int(r["capital_loss"]) > 0 else "0"
                label = "1" if r["income"].rstrip(".") == ">50K" else "0"
                w.writerow([r[c] for c in KEEP] + [label])
                n += 1
    print(f"wrote {n} rows to {out}")


if __name__ == "__main__":
    main()
