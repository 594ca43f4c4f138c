#!/usr/bin/env python3
"""Stub: fetch the monthly sunspot series and write it in the univariate
CSV schema (Date,Value).

No third-party data ships with this repository. The monthly mean total
sunspot number (1749 onward) is published by WDC-SILSO, Royal Observatory
of Belgium: https://www.sidc.be/SILSO/datafiles (file SN_m_tot_V2.0.csv,
semicolon-separated: year; month; decimal year; value; ...).

Download that file manually, then convert it here:

    python3 scripts/fetch_sunspot.py SN_m_tot_V2.0.csv data/sunspot.csv

The output loads with `--dataset sunspot --csv-path data/sunspot.csv`.
"""

import csv
import sys


def convert(source: str, dest: str) -> int:
    rows = 0
    with open(source, newline="", encoding="utf-8") as src, \
            open(dest, "w", newline="", encoding="utf-8") as out:
        writer = csv.writer(out)
        writer.writerow(["Date", "Value"])
        for record in csv.reader(src, delimiter=";"):
            if len(record) < 4:
                continue
            year, month, value = record[0].strip(), record[1].strip(), \
                record[3].strip()
            if float(value) < 0:  # SILSO marks missing months as -1
                continue
            writer.writerow([f"{int(year):04d}-{int(month):02d}-01", value])
            rows += 1
    return rows


if __name__ == "__main__":
    if len(sys.argv) != 3:
        print(__doc__)
        sys.exit(1)
    count = convert(sys.argv[1], sys.argv[2])
    print(f"wrote {count} monthly rows to {sys.argv[2]}")
