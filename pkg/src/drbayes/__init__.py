"""Bayesian demand-response analytics for smart-meter data.

Quantifies, per residential consumer, the probability of responding to each
demand-response price level per hour (Dirichlet-multinomial inference) and a
functional elasticity-vs-price behavior model (robust Student-T regression),
both fed by a g-formula causal estimator and sampled with a built-in
gradient-based MCMC engine.
"""

from .causal import (CausalEstimate, CausalQuery, ElasticityProfile, WeightMatrix,
                     derive_elasticity, estimate_all_prices, g_formula_effect,
                     kernel_regress, rank_weights, z_interval)
from .diagnostics import (DiagnosticsSummary, emit_figure_data, ess_bulk,
                          hpd_interval, kde, r_hat, summarize_chains)
from .glm import (GlmDesign, GlmPosterior, PredictiveSummary, PriorSpec,
                  build_design, fit, log_posterior, predict_elasticity,
                  regression_lines)
from .ingestion import (Dataset, FeatureRow, MeterReading, ParseError, TariffLevel,
                        WeatherRecord, aggregate_hourly, engineer_features,
                        parse_meter_csv, parse_weather_csv)
from .mcmc import SamplerConfig, Trace, dirichlet_direct_sample, run_chains
from .scoring import (DirichletMultinomialModel, ResponseScore,
                      build_per_consumer_model, build_pooled_model,
                      marginal_likelihood, posterior_mean, sample_posterior,
                      score_conjugate, summarize_scores)
from .synthetic import (SyntheticConsumerSpec, compare_truth, flat_spec,
                        generate_population, load_truth, rotating_schedule)

__version__ = "0.1.0"
