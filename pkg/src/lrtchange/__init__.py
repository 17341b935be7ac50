"""Likelihood-ratio scan for a recent multivariate mean change, with p-values
from the asymptotic tail formula, a normal approximation of the scan vector,
and direct simulation."""

from .competitors import (CompetitorResult, McusumConfig, calibrate_threshold, hotelling_scan,
                          mcusum_scan, residuals_h0)
from .mvn import OrthantResult, critical_value, mvn_orthant, pvalue_from_sigma
from .nullcov import CovarianceModel, sigma_empirical, sigma_first_order
from .pvalues import (Budgets, CaEstimate, PValueReport, asymp_pvalue, estimate_ca, full_report,
                      mc_pvalue)
from .scan import ScanResult, ScanWindow, scan, u_stat, z_stat
from .simulate import AlternativeSpec, SeedSpec, gen_alt, gen_null
from .specfun import chisq_cdf, norm_cdf, norm_quantile

__version__ = "0.1.0"
