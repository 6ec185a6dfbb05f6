"""Noise assumption checking on three model families.

The checker fits growth and Lipschitz constants of a noise map over a
seeded cloud of state pairs, attributes gradient-looking residuals, and
compares the gradient-sensitivity constants against the closure thresholds
of the energy estimates.  Three models make the verdicts concrete: purely
additive noise (all slopes vanish), a projected multiplicative map (bounded
slopes, no gradient dependence) and an adversarial map whose amplitude is
||d1 u|| (correctly flagged).
"""

import numpy as np

from ansflow import (
    GridSpec,
    NoiseModel,
    field_from_modes,
    horizontal_shear,
    make_probe_pairs,
    verify_assumptions,
)

SHOWN = ("K0", "K1", "K2", "K2_tilde", "L0", "L1", "L2")


def multiplicative_model(grid):
    x1, x2 = grid.collocation_axes()
    zero = np.zeros(grid.shape)
    b = np.stack(
        [
            np.stack([np.cos(x1) + zero, 0.3 * np.sin(x2) + zero]),
            np.stack([0.5 * np.sin(2 * x1) * np.cos(x2) + zero, zero.copy()]),
        ]
    )
    return NoiseModel.multiplicative(grid, b)


def main():
    grid = GridSpec(16, 16)
    pairs = make_probe_pairs(grid, np.random.default_rng(3), n_pairs=24)
    half = 1.0 / np.sqrt(2.0)
    models = {
        "additive": NoiseModel.additive(
            [
                field_from_modes(grid, {(1, 0): (0.0, -1j * half)}),
                field_from_modes(grid, {(0, 1): (-1j * half, 0.0)}),
            ]
        ),
        "multiplicative": multiplicative_model(grid),
        "gradient probe": NoiseModel.gradient_probe(
            [horizontal_shear(grid, np.sqrt(2.0))]
        ),
    }

    header = " ".join(f"{name:>9}" for name in SHOWN)
    print(f"{'model':<15} {header} {'flagged':>8} {'passes':>7}")
    for label, model in models.items():
        rep = verify_assumptions(model, pairs, dt_grid=(0.1, 0.01))
        row = " ".join(f"{rep.constants[name]:9.4f}" for name in SHOWN)
        flagged = "yes" if rep.flags["gradient_dependence_detected"] else "no"
        passes = "yes" if rep.passes_closure_thresholds else "no"
        print(f"{label:<15} {row} {flagged:>8} {passes:>7}")


if __name__ == "__main__":
    main()
