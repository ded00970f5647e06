"""Run the feature-overlap porting experiment at the default desk scale.

Equivalent to `modn iio --config <file>`; this script builds the config in
code so the knobs are easy to edit.  Writes results + per-cell models to the
output directory and prints the mean-per-cell summary.
"""

import argparse
import time

import modn


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="iio_results", help="output directory")
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds")
    parser.add_argument("--records", type=int, default=2000)
    parser.add_argument("--epochs", type=int, default=60)
    args = parser.parse_args()

    config = modn.ExperimentConfig(
        overlaps=[0.6, 0.8, 1.0],
        sizes=(args.records * 2 // 5, args.records // 10, args.records // 4),
        scenarios=["static", "local", "global", "fine_tune", "modular_update"],
        seeds=list(range(args.seeds)),
        train=modn.TrainConfig(
            epochs=args.epochs, batch_size=32, state_dim=16,
            optimizer=modn.OptimizerConfig(lr=5e-3), patience=12,
        ),
        synthetic=modn.SyntheticSpec(
            n_records=args.records, n_continuous=6, n_binary=3, n_categorical=1,
            n_targets=3, label_mode="threshold", missing_rate=0.1, seed=7,
        ),
        output_dir=args.out,
    )

    start = time.perf_counter()
    table = modn.run_iio_experiment(config)
    print(f"finished in {time.perf_counter() - start:.0f}s; results in {args.out}/")
    for overlap in table.overlaps:
        cells = {s: table.cell(s, overlap) for s in table.scenarios}
        print(f"overlap {overlap}:")
        for scenario, cell in cells.items():
            if cell.mean is None:
                print(f"  {scenario:16s} FAILED ({cell.errors})")
            else:
                print(f"  {scenario:16s} {cell.mean:.4f}  [{cell.ci_lo:.4f}, {cell.ci_hi:.4f}]")


if __name__ == "__main__":
    main()
