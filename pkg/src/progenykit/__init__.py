"""Total progeny of multitype Galton-Watson processes and first-passage times of walks."""

from .errors import ConvergenceError, DomainError, HonestyWarning, SpecError
from .gwmodel import (
    Condition1Report,
    GWModel,
    OffspringSpec,
    check_condition1,
    extinction_prob,
    mean_matrix,
    perron_root,
)
from .progeny import (
    closed_form_21,
    closed_form_stay,
    progeny_pgf_point,
    progeny_series_21,
    progeny_series_bivariate,
    progeny_series_stay,
)
from .series import TruncatedSeries, TruncatedSeries2, substitute_weighted
from .walks import (
    HittingTimeDist,
    WalkSpec,
    alpha_sequence,
    hitting_pmf,
    lemma_convolution,
    lemma_limit,
    tail_constant_hitting,
    tail_constant_progeny,
    theta_sequence,
)

__version__ = "0.1.0"
