"""Additive nonparametric regression for right-censored responses.

Inverse-probability-of-censoring weighted kernel regression, marginal
integration into additive components, and simultaneous confidence bands.
"""

from .asymptotics import ConditionReport, PowerLawSpec, check_power_law
from .bands import (
    ConfidenceBand,
    H_psi_oracle,
    band_halfwidth,
    component_band,
    grid_coverage,
    sigma_oracle,
    sigma_total,
    tau_hat_plugin,
    tau_sq_oracle,
    write_band_csv,
)
from .data_model import (
    CensoredObservation,
    CensoredSample,
    PsiFunction,
    Region,
    SimulationModel,
    SimulationTruth,
    generate_simulation,
    load_csv,
    two_covariate_model,
    write_csv,
)
from .errors import (
    CensaddError,
    ConsistencyError,
    DegenerateDensityError,
    DivergenceError,
    QuadratureError,
    SchemaError,
    ValidationError,
)
from .ipcw import (
    BandwidthPlan,
    EstimatorConfig,
    GModel,
    IPCWRegression,
    ipcw_weight,
    ipcw_weights,
    kde,
    m_tilde_star,
    synthetic_transform,
)
from .kernels import Kernel, QuadratureRule, get_kernel, l2_norm_sq, verify_order
from .marginal import (
    AdditiveFit,
    AdditiveStub,
    IntegrationDensity,
    eta_hat,
    fit_additive,
    mu_hat,
    true_eta,
    write_fit_csv,
)
from .survival import SurvivalCurve, km_censoring_survival

__version__ = "0.1.0"
