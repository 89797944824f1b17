"""Whitney-cube decompositions of C^{1,α} graph domains and numerical
checks of boundary W^{2,p} estimates for the Laplacian."""

__version__ = "0.1.0"

from .geometry import (GraphDomainSpec, Domain, build_domain, flat_spec, bump_spec,  # noqa: F401
                       cusp_spec, table_spec, load_domain_spec, shipped_specs)
from .whitney import WhitneyDecomposition, DyadicCube, decompose  # noqa: F401
from .fdsolver import (build_grid, assemble_poisson, solve, second_differences,  # noqa: F401
                       cut_second_differences)
