"""granulite: particle simulator and quadrature toolkit for a diffusively
driven inelastic hard-sphere gas on the unit 3-torus."""

__version__ = "0.1.0"

from .restitution import (CappedPowerLaw, Constant, ExpansionParams,
                          RestitutionModel, Viscoelastic, check_assumptions,
                          eval_restitution, eval_scaled, expansion_params)
from .kinematics import (CollisionOutcome, energy_loss, post_collision_n,
                         post_collision_sigma, sigma_from_n)
from .collision_oracle import (KAPPA, DissipationEstimate, QuadratureSpec,
                               I_functional, dissipation, loss_operator,
                               psi_e, psi_e_batch, weak_Q, zeta, zeta_0)
from .ensemble import (InitSpec, Maxwellian, Modulated, ParticleEnsemble,
                       TwoTemperature, init_ensemble, merge)
from .dsmc import (CellGrid, ObservableSchedule, SimConfig, Simulation,
                   auto_dt, build_grid, collision_step, run, thermostat_step,
                   transport_step)
from .observables import (MomentReport, SpectralFit, fit_exponential_rate,
                          maxwellian_distance, moments, spatial_mode,
                          stretched_tail_moment)
from .spectral_probe import (EnergyEigenfunctionSpec, MuEstimate, build_phi0,
                             closure_mu, first_order_kernel,
                             haff_cooling_probe, measure_mu, mu_first_order,
                             phi0_checks, predict_mu_first_order,
                             predict_theta_bar, predict_theta_inf, scaling_fit,
                             steady_state, theta_bar_for_model)
from .checkpoint import (CheckpointData, load_checkpoint, resume_simulation,
                         save_checkpoint)
from .scenario import Scenario, parse_scenario, parse_scenario_file, serialize_scenario
from .errors import (CheckpointError, ConfigError, ConvergenceError,
                     DegeneratePairError, GranuliteError, InputError,
                     MeasurementQualityError, ScenarioError)
