"""Regenerate ``src/ddikit/data/elements.csv`` from the mendeleev database.

Only needed when the bundled table is refreshed; the package itself reads the CSV.
"""
import csv
from pathlib import Path

from mendeleev import element
from mendeleev.fetch import fetch_ionization_energies, fetch_table

OUT = Path(__file__).resolve().parents[1] / "src" / "ddikit" / "data" / "elements.csv"
MAX_Z = 100


def main():
    table = fetch_table("elements").set_index("atomic_number")
    ie = fetch_ionization_energies(degree=1)["IE1"]
    rows = []
    for z in range(1, MAX_Z + 1):
        rec = table.loc[z]
        el = element(int(z))

        def opt(x):
            return "" if x is None or x != x else f"{float(x):.6g}"

        rows.append({
            "z": z,
            "symbol": rec["symbol"],
            # f-block elements carry no group id; they sit in group 3
            "group": int(rec["group_id"]) if rec["group_id"] == rec["group_id"] else 3,
            "period": int(rec["period"]),
            "block": rec["block"],
            "electronegativity": opt(rec["en_pauling"]),
            "covalent_radius": opt(rec["covalent_radius_pyykko"]),
            "valence_electrons": int(el.nvalence()),
            "ionization_energy": opt(ie.loc[z]),
            "electron_affinity": opt(rec["electron_affinity"]),
            "atomic_volume": opt(rec["atomic_weight"] / rec["density"]),
        })
    with open(OUT, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} elements to {OUT}")


if __name__ == "__main__":
    main()
