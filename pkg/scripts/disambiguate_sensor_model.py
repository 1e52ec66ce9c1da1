"""Grid posterior mean of the sensor model under each reading of its
observation equation (sign of the path-loss slope, log base, and whether the
noise parameter 5 is a variance or a standard deviation).

    python scripts/disambiguate_sensor_model.py [--resolution 800]
"""

import argparse

import numpy as np

from mtm.experiments import POSTERIOR_MEAN, SensorModel, grid_posterior_mean


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--resolution", type=int, default=800)
    parser.add_argument("--half-width", type=float, default=10.0)
    args = parser.parse_args()

    box = ((-args.half_width, args.half_width),) * 2
    ref = np.asarray(POSTERIOR_MEAN)
    print(f"reference mean {ref}")
    print(f"{'slope':>6} {'base':>8} {'noise var':>9}   {'mean':>22}   {'max |delta|':>11}")
    for slope in (-10.0, 10.0):
        for base in ("natural", "base-10"):
            for var in (5.0, 25.0):
                model = SensorModel(slope=slope, log_base=base, noise_variance=var)
                mean = grid_posterior_mean(model, box, args.resolution)
                gap = np.abs(mean - ref).max()
                flag = "  <- match" if gap <= 0.05 else ""
                print(f"{slope:6.0f} {base:>8} {var:9.0f}   [{mean[0]: .4f}, {mean[1]: .4f}]   {gap:11.4f}{flag}")


if __name__ == "__main__":
    main()
