"""Single trajectories under the microscope, both process forms.

The ensemble estimators hide the actual stochastic process, so this
walks a few raw trajectories for the one-bath-spin model: when the jumps
fire, which term and which pair they hit, and what they do to the state.
"""

import numpy as np

from spinpdp import (
    Form2Config,
    Form2State,
    InteractionHamiltonian,
    InteractionTerm,
    ProductPairState,
    SpinStarParams,
)
from spinpdp.engine import run_trajectory_form1, run_trajectory_form2
from spinpdp.numerics import RngStream
from spinpdp.oracle import spinstar_terms

UP = np.array([1.0, 0.0], dtype=np.complex128)
DOWN = np.array([0.0, 1.0], dtype=np.complex128)
SEED = 11


def build_hamiltonian() -> InteractionHamiltonian:
    terms = spinstar_terms(SpinStarParams(n_bath=1, coupling=1.0))
    return InteractionHamiltonian(tuple(InteractionTerm(a, b) for a, b in terms))


def main() -> None:
    h = build_hamiltonian()
    grid = np.array([2.0])

    print("form 1: three trajectories from (up, down), both pairs")
    print("  the only open channel alternates raising/lowering, so the")
    print("  term index goes 1, 0, 1, 0, ... deterministically")
    for i in range(3):
        records: list = []
        init = ProductPairState((UP, UP), (DOWN, DOWN))
        final = run_trajectory_form1(h, init, grid, RngStream(SEED, 8 * i), records)[-1]
        events = " ".join(f"(t={r.time:.3f} nu={r.nu} a={r.alpha})" for r in records)
        print(f"  #{i}: counts {final.jump_counts}  {events or 'no jumps'}")
        phase = final.psi[0][np.argmax(np.abs(final.psi[0]))]
        print(f"      pair-1 phase after {final.jump_counts[0]} jumps: {phase:+.3f}")

    print()
    print("form 2: the environment operator is a matrix, jumps multiply it")
    print("  from either side; each jump halves the trajectory weight here")
    cfg = Form2Config(const_rates=np.full((2, 2), 1.0))
    for i in range(3):
        init = Form2State((UP, UP), np.eye(2, dtype=np.complex128) / 2.0)
        final = run_trajectory_form2(h, init, cfg, grid, RngStream(SEED + 1, 8 * i))[-1]
        n1, n2 = final.jump_counts
        print(f"  #{i}: counts ({n1}, {n2})  weight {final.weight}  (exactly 0.5^{n1 + n2})")

    print()
    print("jump counts over 20000 form-1 trajectories at constant rate 2A:")
    counts = []
    for i in range(20_000):
        init = ProductPairState((UP, UP), (DOWN, DOWN))
        final = run_trajectory_form1(h, init, np.array([1.0]), RngStream(SEED + 2, 8 * i))[-1]
        counts.append(final.jump_counts[0])
    arr = np.array(counts)
    print(f"  mean {arr.mean():.4f}  variance {arr.var():.4f}  (Poisson: both 2.0)")


if __name__ == "__main__":
    main()
