"""Jump-process Monte Carlo for a central spin in a spin bath.

Two stochastic representations of the exact interaction-picture
dynamics (product-pair vectors and system-vectors-with-environment-
operator), their specialized spin-star samplers, the matching closed
forms, and a small exact-diagonalization oracle to hold everything to
account.
"""

from .engine import (
    Form2Config,
    Form2State,
    InteractionHamiltonian,
    InteractionTerm,
    ProductPairState,
)
from .mc_finite import ObservableKind, estimate_curve, fluctuation_curve_mc
from .mc_infinite import estimate_v3_inf_mc, estimate_vpm_inf_mc
from .modelfile import ModelSpec, load_bundled, load_model, save_model
from .oracle import build_spinstar, evolve_exact, reduced_bloch, reduced_states
from .runner import run_form1_ensemble, run_form2_ensemble
from .spinstar import (
    BathSector,
    SpinStarParams,
    closed_form_coherence,
    closed_form_population,
    g_inf,
    gamma_jm,
    prob_jm,
    sector_distribution,
    v3_finite,
    v3_inf,
    vpm_finite,
    vpm_inf,
)
from .stats import BlochCurve, EnsembleAccumulator

__version__ = "0.1.0"

__all__ = [
    "BathSector",
    "BlochCurve",
    "EnsembleAccumulator",
    "Form2Config",
    "Form2State",
    "InteractionHamiltonian",
    "InteractionTerm",
    "ModelSpec",
    "ObservableKind",
    "ProductPairState",
    "SpinStarParams",
    "build_spinstar",
    "closed_form_coherence",
    "closed_form_population",
    "estimate_curve",
    "estimate_v3_inf_mc",
    "estimate_vpm_inf_mc",
    "evolve_exact",
    "fluctuation_curve_mc",
    "g_inf",
    "gamma_jm",
    "load_bundled",
    "load_model",
    "prob_jm",
    "reduced_bloch",
    "reduced_states",
    "run_form1_ensemble",
    "run_form2_ensemble",
    "save_model",
    "sector_distribution",
    "v3_finite",
    "v3_inf",
    "vpm_finite",
    "vpm_inf",
    "__version__",
]
