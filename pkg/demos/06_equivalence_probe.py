"""Pathwise closeness of the rescaled flow and its linear comparison.

Driving the short-time rescaled equation and the driftless comparison
equation with the same Gaussian increments couples the two paths sample by
sample.  The probability that their sup-distance squared exceeds a small
delta must vanish faster than any exponential scale eps log p can see;
the table shows eps log p dropping as eps shrinks while the Wilson-based
standard error stays small.
"""

import numpy as np

from ansflow import (
    GridSpec,
    LdpProbeSpec,
    NoiseModel,
    SolverConfig,
    exp_equivalence_probe,
    field_from_modes,
    vertical_shear,
)


def main():
    grid = GridSpec(16, 16)
    half = 1.0 / np.sqrt(2.0)
    model = NoiseModel.additive(
        [
            field_from_modes(grid, {(1, 0): (0.0, -1j * half)}),
            field_from_modes(grid, {(0, 1): (-1j * half, 0.0)}),
        ]
    )
    u0 = vertical_shear(grid, 0.2)
    cfg = SolverConfig(dt=0.02, t_end=0.5, save_every=10**9)
    spec = LdpProbeSpec((0.2, 0.1, 0.05), 2_000, 7)

    result = exp_equivalence_probe(u0, model, 4e-5, spec, cfg)
    print("P(sup_t ||u_eps - v_eps||^2 > 4e-5) down the eps ladder")
    print(f"{'eps':>6} {'hits':>6} {'p_hat':>9} {'eps log p':>10} {'stderr':>9}")
    for row in result.rows:
        print(
            f"{row.eps:6.3f} {row.hits:6d} {row.p_hat:9.5f} "
            f"{row.eps_log_p:10.4f} {row.stderr:9.4f}"
        )
    print("\nhit probabilities fall superexponentially: each rung's eps log p")
    print("sits clearly below the previous one")


if __name__ == "__main__":
    main()
