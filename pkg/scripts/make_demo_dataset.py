"""Write the bundled demo consultation dataset (CSV + schema descriptor).

The demo emulates the shape of the public pediatric trial export: 3,192
consultations, questionnaire-driven missingness, eight diagnosis labels.
"""

import argparse

from modn.data import write_dataset_csv
from modn.demo import make_demo_table


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-data", default="demo_consultations.csv")
    parser.add_argument("--out-schema", default="demo_consultations.schema.json")
    parser.add_argument("--records", type=int, default=None,
                        help="record count (defaults to the full 3,192)")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    kwargs = {}
    if args.records is not None:
        kwargs["n_records"] = args.records
    if args.seed is not None:
        kwargs["seed"] = args.seed
    table = make_demo_table(**kwargs)
    write_dataset_csv(table, args.out_data, args.out_schema)
    sets = {tuple(sorted(r.feature_ids())) for r in table.records}
    print(f"{len(table.records)} records, {len(sets)} distinct feature sets "
          f"-> {args.out_data}")


if __name__ == "__main__":
    main()
