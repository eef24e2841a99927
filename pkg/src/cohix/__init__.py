"""cohix: one-shot coherence distillation and incoherent randomness
extraction — entropic quantities, certified protocol constructions, and
second-order asymptotics."""

__version__ = "1.0.0"

from .errors import (CohixError, DimensionError, DomainError,
                     InfiniteDivergence, LayoutError, NumericalError,
                     PreconditionError, SolverError, WitnessError)
from .linalg import (DensityMatrix, PureState, SystemLayout, fidelity,
                     partial_trace, purified_distance, purify)
from .entropy import (EntropyReport, NPResult, dh, dmax, rel_entropy,
                      rel_entropy_variance, second_order_estimate, theta)
from .channels import (ClassCertificate, KrausChannel, check_DIIO, check_DIO,
                       check_IO_given_kraus, check_MIO, check_QIP, dephase,
                       dephase_channel, mcs)
from .protocols import (DistillerReport, DsecResult, ExtractionOutcome,
                        HashFunction, build_assisted_distiller,
                        build_distiller_from_extraction, compose_and_certify,
                        d_sec, extractable_randomness_exhaustive,
                        hashing_sandwich, run_alternative_assisted_extraction,
                        run_assisted_extraction, run_extraction)
from .asymptotics import (CurvePoint, curve_to_csv, iid_dh,
                          sandwich_check_unassisted, second_order_curve,
                          strong_converse_curve)
from .nsdist import (JointDistribution, classical_D_V, dephased_tripartite,
                     ns_pair, verify_reduction_connections)
