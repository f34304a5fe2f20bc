"""Convergence-study driver and command line front end.

A study solves one configuration (problem, domain, boundary layout, test-norm
scaling) on a sequence of uniformly refined meshes and reports per level the
free unknown count, the L2 field errors, and the energy residual, as CSV.

Manufactured solutions: on (0,R1)x(0,R2) with homogeneous Dirichlet data the
Poisson study uses sin(pi x/R1) sin(pi y/R2); with Dirichlet data only on the
x = 0 and x = R1 sides it uses sin(pi x/R1) (zero Neumann data elsewhere).
The plate studies use the squared sines sin(pi x/R1)^2 sin(pi y/R2)^2
(clamped) and sin(pi x/R1)^2 (clamped/free strip), driven by their
bilaplacian.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import fem_core as fc
from . import mesh as msh
from . import plate_uw as plw
from . import poisson_uw as pw
from . import solver as slv

POISSON = "poisson"
PLATE = "plate"
BC_DIRICHLET = "dirichlet"  # all-Dirichlet (Poisson) / clamped (plate)
BC_MIXED = "mixed"          # Dirichlet/clamped on x = 0 and x = R1, natural elsewhere
NORM_STANDARD = "standard"
NORM_SCALED = "scaled"

CSV_HEADER = "dofDPG,errU,errSigma,err"
ERROR_QUAD_DEGREE = 10


class ConfigError(ValueError):
    """Invalid study configuration."""


@dataclass(frozen=True)
class StudyConfig:
    problem: str
    gamma: float = 0.0
    r1: float = 1.0
    r2: float = 1.0
    bc: str = BC_DIRICHLET
    norm: str = NORM_STANDARD
    d_override: Optional[float] = None
    levels: int = 5
    ny0: int = 2
    out: Optional[str] = None

    def validate(self) -> None:
        if self.problem not in (POISSON, PLATE):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.bc not in (BC_DIRICHLET, BC_MIXED):
            raise ConfigError(f"unknown boundary layout {self.bc!r}")
        if self.norm not in (NORM_STANDARD, NORM_SCALED):
            raise ConfigError(f"unknown norm mode {self.norm!r}")
        if not (self.r1 > 0 and self.r2 > 0):
            raise ConfigError("domain sides must be positive")
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        if self.problem == PLATE and self.gamma != 0:
            raise ConfigError("the plate model has no reaction term")
        if self.levels < 1:
            raise ConfigError("need at least one refinement level")
        if self.ny0 < 1:
            raise ConfigError("coarsest resolution ny0 must be >= 1")
        if self.d_override is not None:
            if self.norm == NORM_STANDARD:
                raise ConfigError("--d overrides the scaled norm; "
                                  "it conflicts with --norm standard")
            if self.d_override <= 0:
                raise ConfigError("scaling override must be positive")


def pick_d(cfg: StudyConfig) -> float:
    """Test-norm scaling length: 1 for the standard norm; otherwise the
    Poincare length of the essential boundary layout (min side for all-around
    Dirichlet/clamped, the span R1 between the two Dirichlet sides for the
    mixed layout), unless explicitly overridden."""
    if cfg.d_override is not None:
        return float(cfg.d_override)
    if cfg.norm == NORM_STANDARD:
        return 1.0
    if cfg.bc == BC_DIRICHLET:
        return float(min(cfg.r1, cfg.r2))
    return float(cfg.r1)


@dataclass(frozen=True)
class ExactBundle:
    """Vectorized evaluators of the manufactured solution.

    grad returns (..., 2); hess returns the (xx, xy, yy) components as
    (..., 3); f is the matching load (-lap u + gamma u, or the bilaplacian).
    """

    u: Callable
    grad: Callable
    hess: Callable
    f: Callable


def exact_bundle(cfg: StudyConfig) -> ExactBundle:
    a = np.pi / cfg.r1
    b = np.pi / cfg.r2
    gamma = cfg.gamma
    if cfg.problem == POISSON and cfg.bc == BC_DIRICHLET:
        return ExactBundle(
            u=lambda x, y: np.sin(a * x) * np.sin(b * y),
            grad=lambda x, y: np.stack([a * np.cos(a * x) * np.sin(b * y),
                                        b * np.sin(a * x) * np.cos(b * y)], axis=-1),
            hess=lambda x, y: np.stack([-a ** 2 * np.sin(a * x) * np.sin(b * y),
                                        a * b * np.cos(a * x) * np.cos(b * y),
                                        -b ** 2 * np.sin(a * x) * np.sin(b * y)], axis=-1),
            f=lambda x, y: (a ** 2 + b ** 2 + gamma) * np.sin(a * x) * np.sin(b * y),
        )
    if cfg.problem == POISSON:
        return ExactBundle(
            u=lambda x, y: np.sin(a * x) + 0.0 * y,
            grad=lambda x, y: np.stack([a * np.cos(a * x), 0.0 * y], axis=-1),
            hess=lambda x, y: np.stack([-a ** 2 * np.sin(a * x), 0.0 * y, 0.0 * y],
                                       axis=-1),
            f=lambda x, y: (a ** 2 + gamma) * np.sin(a * x) + 0.0 * y,
        )
    if cfg.bc == BC_DIRICHLET:
        return ExactBundle(
            u=lambda x, y: np.sin(a * x) ** 2 * np.sin(b * y) ** 2,
            grad=lambda x, y: np.stack(
                [a * np.sin(2 * a * x) * np.sin(b * y) ** 2,
                 b * np.sin(a * x) ** 2 * np.sin(2 * b * y)], axis=-1),
            hess=lambda x, y: np.stack(
                [2 * a ** 2 * np.cos(2 * a * x) * np.sin(b * y) ** 2,
                 a * b * np.sin(2 * a * x) * np.sin(2 * b * y),
                 2 * b ** 2 * np.sin(a * x) ** 2 * np.cos(2 * b * y)], axis=-1),
            f=lambda x, y: (-8 * a ** 4 * np.cos(2 * a * x) * np.sin(b * y) ** 2
                            + 8 * a ** 2 * b ** 2 * np.cos(2 * a * x) * np.cos(2 * b * y)
                            - 8 * b ** 4 * np.sin(a * x) ** 2 * np.cos(2 * b * y)),
        )
    return ExactBundle(
        u=lambda x, y: np.sin(a * x) ** 2 + 0.0 * y,
        grad=lambda x, y: np.stack([a * np.sin(2 * a * x), 0.0 * y], axis=-1),
        hess=lambda x, y: np.stack([2 * a ** 2 * np.cos(2 * a * x), 0.0 * y, 0.0 * y],
                                   axis=-1),
        f=lambda x, y: -8 * a ** 4 * np.cos(2 * a * x) + 0.0 * y,
    )


def _congruence_key(amap: fc.AffineMap) -> bytes:
    """Cache key identifying elements equal up to translation (plus edge
    orientation): rounded Jacobian entries and the orientation signs."""
    scale = np.abs(amap.jac).max()
    q = np.rint(amap.jac / scale * 1e12).astype(np.int64)
    return q.tobytes() + amap.edge_signs.tobytes()


def condense_mesh(mesh: msh.Mesh, cfg: StudyConfig, d: float, f):
    """Condensed local systems for every element.

    Structured meshes contain only a handful of element shapes, so Gram and
    trial-to-test matrices are condensed once per congruence class; only the
    load depends on the element position.
    """
    if cfg.problem == POISSON:
        def matrices(amap):
            return (pw.local_gram_poisson(amap, d),
                    pw.local_b_poisson(amap, cfg.gamma))

        def load(amap):
            return pw.local_load_poisson(amap, f)
    else:
        def matrices(amap):
            return plw.local_gram_plate(amap, d), plw.local_b_plate(amap)

        def load(amap):
            return plw.local_load_plate(amap, f)

    cache = {}
    condensed = []
    for t in range(mesh.n_triangles):
        amap = fc.map_affine(mesh, t)
        key = _congruence_key(amap)
        base = cache.get(key)
        if base is None:
            gram, b = matrices(amap)
            try:
                base = slv.condense_local(slv.LocalSystem(gram, b, np.zeros(len(gram))))
            except slv.NotSPDError as exc:
                raise slv.NotSPDError(f"element {t}, d = {d}: {exc}") from exc
            cache[key] = base
        condensed.append(slv.condense_rhs(base, load(amap)))
    return condensed


@dataclass(frozen=True)
class LevelSolution:
    dofmap: object
    condensed: list
    element_dofs: np.ndarray
    x: np.ndarray
    eta_per_element: np.ndarray
    eta: float


def solve_level(mesh: msh.Mesh, cfg: StudyConfig, d: float, f) -> LevelSolution:
    if cfg.problem == POISSON:
        dofmap = pw.dof_map_poisson(mesh)
    else:
        bc = plw.CLAMPED if cfg.bc == BC_DIRICHLET else plw.MIXED_FREE
        dofmap = plw.dof_map_plate(mesh, bc)
    condensed = condense_mesh(mesh, cfg, d, f)
    system = slv.assemble_global(mesh, dofmap, condensed)
    x = slv.solve_spd(system)
    dofs = dofmap.all_element_dofs(mesh)
    eta_t, eta = slv.energy_residual(condensed, dofs, x)
    return LevelSolution(dofmap, condensed, dofs, x, eta_t, eta)


def compute_errors(mesh: msh.Mesh, dofmap, x: np.ndarray, exact: ExactBundle,
                   condensed) -> tuple:
    """(errU, errSigma, errEnergy): L2 errors of the piecewise-constant field
    variables by degree-10 quadrature, and the energy residual."""
    rule = fc.quad_triangle(ERROR_QUAD_DEGREE)
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    phys = np.einsum("qr,trd->tqd", rule.points, jac.transpose(0, 2, 1)) + p[:, None, 0]
    xq, yq = phys[..., 0], phys[..., 1]

    u_h = x[dofmap.u]
    err_u_sq = np.einsum("tq,q,t->", (exact.u(xq, yq) - u_h[:, None]) ** 2,
                         rule.weights, det)
    if isinstance(dofmap, pw.PoissonDofMap):
        flux_h = slv.gather_local(dofmap.sigma, x)
        diff = exact.grad(xq, yq) - flux_h[:, None, :]
        err_flux_sq = np.einsum("tqc,tqc,q,t->", diff, diff, rule.weights, det)
    else:
        moment_h = slv.gather_local(dofmap.m, x)
        diff = -exact.hess(xq, yq) - moment_h[:, None, :]
        weight = np.array(plw.COMPONENT_WEIGHT)
        err_flux_sq = np.einsum("tqc,tqc,c,q,t->", diff, diff, weight,
                                rule.weights, det)

    dofs = dofmap.all_element_dofs(mesh)
    _, eta = slv.energy_residual(condensed, dofs, x)
    return float(np.sqrt(err_u_sq)), float(np.sqrt(err_flux_sq)), eta


def run_study(cfg: StudyConfig):
    """One row (dofDPG, errU, errSigma, err) per refinement level.

    The errSigma column carries the moment error for the plate so both
    problems share one CSV schema.
    """
    cfg.validate()
    layout = msh.ALL_DIRICHLET if cfg.bc == BC_DIRICHLET else msh.LEFT_RIGHT_DIRICHLET
    mesh = msh.classify_boundary(msh.make_rect_mesh(cfg.r1, cfg.r2, cfg.ny0), layout)
    d = pick_d(cfg)
    exact = exact_bundle(cfg)
    rows = []
    for level in range(cfg.levels):
        try:
            sol = solve_level(mesh, cfg, d, exact.f)
        except slv.SolverError as exc:
            raise slv.SolverError(f"level {level}: {exc}") from exc
        err_u, err_flux, err_energy = compute_errors(mesh, sol.dofmap, sol.x,
                                                     exact, sol.condensed)
        rows.append((sol.dofmap.n_free, err_u, err_flux, err_energy))
        if level + 1 < cfg.levels:
            mesh = msh.refine_uniform(mesh)
    return rows


def flag_echo(cfg: StudyConfig) -> str:
    parts = [f"--problem {cfg.problem}", f"--gamma {cfg.gamma!r}",
             f"--r1 {cfg.r1!r}", f"--r2 {cfg.r2!r}", f"--bc {cfg.bc}",
             f"--norm {cfg.norm}"]
    if cfg.d_override is not None:
        parts.append(f"--d {cfg.d_override!r}")
    parts += [f"--levels {cfg.levels}", f"--ny0 {cfg.ny0}"]
    return " ".join(parts)


def write_csv(cfg: StudyConfig, rows, stream) -> None:
    """Fixed CSV schema: a flag-echo comment, the header, one row per level,
    floats in shortest round-trip form."""
    stream.write(f"# dpg-lock study: {flag_echo(cfg)}\n")
    stream.write(CSV_HEADER + "\n")
    for dof, err_u, err_flux, err in rows:
        stream.write(f"{dof},{err_u!r},{err_flux!r},{err!r}\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we reserve 2 for solver failures
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpg-lock",
                     description="Convergence studies for minimum-residual "
                                 "schemes with domain-scaled test norms.")
    parser.add_argument("--problem", choices=(POISSON, PLATE), required=True)
    parser.add_argument("--gamma", type=float, default=0.0,
                        help="reaction coefficient (poisson only, default 0)")
    parser.add_argument("--r1", type=float, default=1.0, help="domain width")
    parser.add_argument("--r2", type=float, default=1.0, help="domain height")
    parser.add_argument("--bc", choices=(BC_DIRICHLET, BC_MIXED),
                        default=BC_DIRICHLET)
    parser.add_argument("--norm", choices=(NORM_STANDARD, NORM_SCALED),
                        default=NORM_STANDARD)
    parser.add_argument("--d", type=float, default=None, dest="d_override",
                        help="override the scaling length of the scaled norm")
    parser.add_argument("--levels", type=int, default=5)
    parser.add_argument("--ny0", type=int, default=2,
                        help="cell rows of the coarsest mesh (default 2)")
    parser.add_argument("--out", type=str, default=None,
                        help="CSV output path (default: stdout)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = StudyConfig(problem=args.problem, gamma=args.gamma, r1=args.r1,
                          r2=args.r2, bc=args.bc, norm=args.norm,
                          d_override=args.d_override, levels=args.levels,
                          ny0=args.ny0, out=args.out)
        cfg.validate()
    except ConfigError as exc:
        print(f"dpg-lock: configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        rows = run_study(cfg)
    except slv.SolverError as exc:
        print(f"dpg-lock: solver failure: {exc}", file=sys.stderr)
        return 2
    if cfg.out is None:
        write_csv(cfg, rows, sys.stdout)
    else:
        with open(cfg.out, "w") as stream:
            write_csv(cfg, rows, stream)
    return 0


if __name__ == "__main__":
    sys.exit(main())
