"""mesh -> spaces -> assemble -> solve -> errors, for one mesh level."""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ErrorReport, compute_errors
from .forms import SchemeParams, SystemBlocks, assemble_system
from .linsolve import DEFAULT_TOL, SolveReport, solve_saddle
from .mesh import Mesh, generate_cube_mesh
from .spaces import FESpace, build_hcurl_space, build_lagrange_space

log = logging.getLogger(__name__)


@dataclass
class LevelResult:
    mesh: Mesh
    espace: FESpace
    qspace: FESpace
    blocks: SystemBlocks
    u: np.ndarray
    p: np.ndarray
    solve: SolveReport
    errors: ErrorReport


def build_spaces(mesh, k):
    return build_hcurl_space(mesh, k + 1), build_lagrange_space(mesh, k + 2)


def run_level(case, params=None, n=None, mesh=None, tol=DEFAULT_TOL, method="direct",
              split_load=True):
    """Solve one manufactured case on a generated (``n``) or given mesh.

    ``split_load`` assembles the load as (w, curl v) + (grad p, v) with
    curl w = curl^4 u, which keeps the discrete multiplier exactly zero for
    divergence-free loads; otherwise (f, v) is integrated directly.
    """
    if params is None:
        params = SchemeParams()
    if mesh is None:
        if n is None:
            raise ValueError("need a mesh or a subdivision count n")
        mesh = generate_cube_mesh(n)
    E, Q = build_spaces(mesh, params.k)
    split = case.load_split() if split_load else None
    blocks = assemble_system(E, Q, params, case.f, split=split)
    u, p, rep = solve_saddle(blocks.A, blocks.B, blocks.F, tol=tol, method=method,
                             symmetric=params.variant == "symmetric")
    err = compute_errors(mesh, E, Q, params, case, u, p, n=n)
    log.info("level n=%s: dofs %d+%d, e_L2_u=%.3e", n, E.nfree, Q.nfree, err.e_L2_u)
    return LevelResult(mesh, E, Q, blocks, u, p, rep, err)
