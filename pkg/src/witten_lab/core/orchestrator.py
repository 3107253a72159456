"""
Experiment orchestration: builds the mesh, the complex and the Morse function a configuration
describes, drives one experiment and collects its artifacts and summary.
"""
import logging
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from witten_lab.config import ExperimentConfig
from witten_lab.core.complexes import CellComplex, build_icosphere, build_torus_grid
from witten_lab.core.inner_product import InnerProductComplex, de_rham_complex
from witten_lab.derham.lattice import lattice_covolumes, lattice_volumes, volume_product
from witten_lab.derham.spectral import betti_numbers, spectral_package
from witten_lab.errors import MorseError, UnrepresentableCellError
from witten_lab.morse.complex import (
    MorseData,
    cohomology_ranks,
    compute_morse_data,
    manifold_betti,
    manifold_diameter,
    morse_inequalities,
)
from witten_lab.morse.critical import CriticalPoint, find_critical_points
from witten_lab.morse.flow import FlowControls
from witten_lab.morse.functions import MorseFunction, build_function
from witten_lab.morse.integration import chain_map_defect
from witten_lab.oscillator.model import cross_check_symbols, eigenform_residual, richardson_oscillator
from witten_lab.oscillator.placement import chart_radius, default_eta
from witten_lab.oscillator.symbols import cluster_cardinalities, enumerate_symbols
from witten_lab.torsion.algebra import identity_corpus
from witten_lab.torsion.comparison import (
    a_functions,
    isometry_bounded,
    isometry_table,
    multiplicity_one_check,
    nonvanishing_check,
    torsion_rhs,
)
from witten_lab.utils.export import ArtifactWriter, write_complex, write_vectors
from witten_lab.witten.branches import (
    BranchFamily,
    classify_clusters,
    label_counts,
    track_branches,
    virtually_small_package,
)
from witten_lab.witten.diagnostics import (
    geometric_constants,
    is_monotone_localized,
    localization_profile,
    witten_duality_defect,
)
from witten_lab.witten.gaps import detect_gap

logger = logging.getLogger(__name__)

# Cluster orders compared against the oscillator symbol counts
MAX_CLUSTER = 2
# Grid spacing, in √t x, of the finite-difference eigenform residuals
RESIDUAL_SPACING = 0.05


class ExperimentRunner:
    """
    Runs the experiments of one configuration and writes their artifacts.

    The mesh, the de Rham complex, the Morse function and the Morse data are built on first use
    and shared by every experiment of the run.
    """

    def __init__(self, config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None):
        """
        Args:
            config: Validated configuration (seed and thread overrides already applied)
            out_dir: Artifact directory, defaulting to config.output or ./<name>
        """
        self.config = config
        target = out_dir or config.output or config.name
        self.writer = ArtifactWriter(target, config.config_hash())
        self.summary: Dict[str, Any] = {"experiment": config.name}
        self.warnings: List[str] = []

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    @cached_property
    def mesh(self) -> CellComplex:
        spec = self.config.manifold
        if spec.topology == "sphere":
            complex_ = build_icosphere(spec.resolution)
        else:
            complex_ = build_torus_grid(spec.dimension, spec.resolution, spec.periods)
        self.config.check_resolution_cap(complex_.spacing)
        logger.info("built %s mesh with cell counts %s", spec.topology, complex_.counts)
        return complex_

    @cached_property
    def ipc(self) -> InnerProductComplex:
        return de_rham_complex(self.mesh, self.config.manifold.normalization)

    @cached_property
    def function(self) -> MorseFunction:
        spec, manifold = self.config.function, self.config.manifold
        return build_function(spec.name, manifold.topology, manifold.dimension, manifold.periods, spec.params)

    @cached_property
    def f_samples(self) -> List[np.ndarray]:
        return self.function.sample_on(self.mesh)

    @cached_property
    def morse_data(self) -> MorseData:
        settings = self.config.morse
        controls = FlowControls.for_diameter(
            manifold_diameter(self.function),
            settings.r_cap_rel,
            settings.r_shoot_rel,
            rtol=settings.rtol,
            atol=settings.atol,
        )
        return compute_morse_data(
            self.function, settings.seed_resolution, controls, settings.circle_samples, settings.verify_samples
        )

    @property
    def degrees(self) -> range:
        return range(self.mesh.dimension + 1)

    def _track(self, q: int, m: int) -> BranchFamily:
        solver, grid = self.config.solver, self.config.t_grid
        bf = track_branches(
            self.ipc,
            self.f_samples,
            q,
            grid.values(),
            min(m, self.ipc.dim(q)),
            overlap_min=solver.overlap_min,
            tol_group=solver.tol_group,
            max_depth=solver.max_depth if grid.adaptive else 0,
            seed=solver.seed,
            threads=solver.threads,
            cluster_gap=solver.cluster_gap,
        )
        bf = classify_clusters(bf)
        if bf.unresolved_count():
            self.warn(f"degree {q}: {bf.unresolved_count()} unresolved branches")
        return bf

    def run_spectra(self) -> Dict[str, Any]:
        """Spectral packages per degree, Betti numbers, Euler characteristic and lattice volumes."""
        solver = self.config.solver
        write_complex(self.writer, self.mesh)
        for q in self.degrees:
            count = min(solver.eigencount, self.ipc.dim(q))
            package = spectral_package(self.ipc, q, count, solver.tol_group, solver.seed)
            self.writer.write_csv(
                f"spectrum_{q}.csv", ("degree", "index", "eigenvalue", "multiplicity_group"), package.rows()
            )
        betti = betti_numbers(self.ipc, solver.tol_zero, solver.seed)
        volumes = lattice_volumes(self.ipc, self.mesh)
        self.summary.update(
            betti=betti,
            euler=int(sum((-1) ** q * b for q, b in enumerate(betti))),
            cell_euler=self.mesh.euler_characteristic,
            lattice_volumes=volumes,
            lattice_covolumes=lattice_covolumes(self.ipc, self.mesh),
            volume_product=volume_product(volumes),
        )
        return self.summary

    def _critical_points(self) -> Optional[List[CriticalPoint]]:
        try:
            return find_critical_points(self.function, self.config.morse.seed_resolution)
        except MorseError as exc:
            self.warn(f"no oscillator comparison: {exc.message}")
            return None

    def _localization_radius(self, points: List[CriticalPoint]) -> float:
        eta = self.config.torsion.eta or default_eta(self.function, points)
        return max(chart_radius(cp, eta) for cp in points)

    def _snapshot_indices(self, bf: BranchFamily) -> List[int]:
        """Grid indices of the requested snapshot times, each moved to the nearest grid point."""
        chosen = set()
        for t in self.config.t_grid.sample_points():
            j = int(np.argmin(np.abs(bf.t_grid - t)))
            if not np.isclose(bf.t_grid[j], t):
                logger.info("snapshot at t=%g taken at the nearest grid point t=%g", t, bf.t_grid[j])
            chosen.add(j)
        return sorted(chosen)

    def run_branches(self) -> Dict[str, Any]:
        """Branch families over the t-grid, gap reports and cluster counts against the oscillator model."""
        solver = self.config.solver
        grid = self.config.t_grid.values()
        rows, gap_rows, local_rows = [], [], []
        labels, below_gap, no_gap = {}, [], []
        points = self._critical_points()
        cardinalities, localized = {}, {}
        radius = self._localization_radius(points) if points else None
        for q in self.degrees:
            bf = self._track(q, solver.eigencount)
            rows += bf.rows()
            counts = label_counts(bf)
            labels[q] = {("unresolved" if k is None else str(k)): v for k, v in sorted(counts.items(), key=str)}
            small = [b for b, label in enumerate(bf.labels) if label == 0]
            for j in self._snapshot_indices(bf):
                name = f"vectors_{q}_t{bf.t_grid[j]:g}.csv"
                write_vectors(self.writer, name, bf.vectors[j], range(bf.m))
            if small and radius is not None:
                profile = localization_profile(bf, self.mesh, self.ipc, self.function, points, radius, small)
                for b, row in zip(small, profile):
                    local_rows += [(q, b, float(t), float(v)) for t, v in zip(bf.t_grid, row)]
                localized[q] = [is_monotone_localized(row, bf.t_grid, float(np.median(grid))) for row in profile]
            for t in self.config.t_grid.sample_points():
                report = detect_gap(self.ipc, self.f_samples, q, t, solver.eigencount, solver.min_ratio, solver.seed)
                gap_rows.append(report.row())
                if report.no_gap:
                    no_gap.append([q, t])
            below_gap.append(gap_rows[-1][2])
            if points is not None:
                expected = cluster_cardinalities([cp.index for cp in points], self.mesh.dimension, q, MAX_CLUSTER)
                observed = [counts.get(k, 0) for k in range(MAX_CLUSTER + 1)]
                cardinalities[q] = {"oscillator": expected, "branches": observed, "match": expected == observed}
                if expected != observed:
                    self.warn(f"degree {q}: cluster counts {observed} differ from oscillator counts {expected}")
        if no_gap:
            self.warn(f"no spectral gap at {len(no_gap)} (degree, t) samples")
        self.writer.write_csv(
            "branches.csv", ("degree", "branch_id", "t", "eigenvalue", "cluster_label", "min_overlap"), rows
        )
        self.writer.write_csv("gaps.csv", ("degree", "t", "count", "lower", "upper", "ratio", "no_gap"), gap_rows)
        self.writer.write_json("clusters.json", {"labels": labels, "cardinalities": cardinalities})
        if local_rows:
            self.writer.write_csv("localization.csv", ("degree", "branch_id", "t", "outside_mass"), local_rows)
        self.summary.update(
            below_gap_counts=below_gap,
            cluster_labels=labels,
            no_gap=no_gap,
            localized={str(q): v for q, v in localized.items()},
            duality_defects=self._duality_defects(float(grid[-1])),
        )
        if points:
            # About 4096 sample points whatever the dimension
            per_axis = int(round(4096 ** (1.0 / self.function.dimension)))
            constants = geometric_constants(self.function, points, radius, per_axis)
            self.summary["geometric_constants"] = {
                "min_gradient": constants.min_gradient,
                "max_hessian": constants.max_hessian,
                "samples": constants.samples,
            }
        return self.summary

    def _duality_defects(self, t: float) -> Optional[List[float]]:
        """Spectral distance of Δ^q(t) for f and Δ^{n-q}(t) for -f per degree; tori only."""
        if self.mesh.topology != "torus":
            return None
        solver = self.config.solver
        negated = [-s for s in self.f_samples]
        n = self.mesh.dimension
        defects = []
        for q in self.degrees:
            count = min(solver.eigencount, self.ipc.dim(q), self.ipc.dim(n - q))
            defects.append(witten_duality_defect(self.ipc, self.f_samples, negated, q, t, count, solver.seed))
        return defects

    def run_morse(self) -> Dict[str, Any]:
        """Critical points, signed incidences, trajectories and the cohomology of the Morse complex."""
        md = self.morse_data
        n = md.dimension
        header = ("index", *[f"x{i}" for i in range(md.critical_points[0].location.size)], "value")
        self.writer.write_csv("critical_points.csv", header, [cp.row() for cp in md.critical_points])
        self.writer.write_csv("incidence.csv", ("degree", "source", "target", "incidence"), md.incidence_rows())
        trajectories = [
            {"source": c.source, "target": c.target, "sign": c.sign, "points": c.trajectory.points}
            for c in md.connections
        ]
        self.writer.write_json("trajectories.json", {"trajectories": trajectories})
        betti = manifold_betti(self.function)
        ranks = cohomology_ranks(md)
        square = [int(np.max(np.abs(md.incidence[k + 1] @ md.incidence[k]), initial=0)) for k in range(n - 1)]
        self.summary.update(
            counts=md.counts,
            cohomology_ranks=ranks,
            manifold_betti=betti,
            morse_inequalities=morse_inequalities(md, betti),
            boundary_square_max=square,
        )
        gradient, asymmetry = self.function.derivative_defect(np.random.default_rng(self.config.solver.seed))
        self.summary["derivative_check"] = {"gradient": gradient, "hessian_asymmetry": asymmetry}
        if self.mesh.topology == "torus":
            rng = np.random.default_rng(self.config.solver.seed)
            try:
                defects = [chain_map_defect(self.mesh, self.ipc, md, q, rng) for q in range(n)]
            except UnrepresentableCellError as exc:
                self.warn(f"no integration chain-map check: {exc.message}")
            else:
                self.summary["integration_defects"] = defects
        return self.summary

    def run_torsion(self) -> Dict[str, Any]:
        """Identity corpus, a^q(t) traces, the L·R isometry table and the torsion right-hand side."""
        settings, solver = self.config.torsion, self.config.solver
        corpus = identity_corpus(solver.seed, settings.corpus_cases)
        worst = max((c.relative_error for c in corpus), default=0.0)
        self.writer.write_json(
            "identity_corpus.json", {"seed": solver.seed, "worst": worst, "cases": [c.to_json() for c in corpus]}
        )
        self.summary["identity"] = {"worst": worst, "passed": worst <= settings.identity_tolerance}
        if self.mesh.topology != "torus" or self.function.name == "constant":
            self.warn("comparison maps need a Morse function on a torus; only the identity corpus was run")
            return self.summary

        md = self.morse_data
        betti = betti_numbers(self.ipc, solver.tol_zero, solver.seed)
        families = [self._track(q, md.counts[q] + settings.extra_branches) for q in self.degrees]
        trace = a_functions(self.mesh, self.ipc, md, families, betti)
        header = ("t", *[f"a{q}" for q in self.degrees], "a", "a_reciprocal_q")
        self.writer.write_csv("a_trace.csv", header, trace.rows())

        bounded = {}
        if settings.isometry_t:
            rows = isometry_table(self.mesh, self.ipc, self.function, md, settings.isometry_t, eta=settings.eta)
            self.writer.write_csv("isometry.csv", ("degree", "t", "defect", "t_defect"), [r.row() for r in rows])
            bounded = isometry_bounded(rows)
        nonvanishing = nonvanishing_check(trace)
        multiple = {q: multiplicity_one_check(bf, solver.tol_group) for q, bf in enumerate(families)}
        self.summary.update(
            isometry_bounded={str(q): v for q, v in bounded.items()},
            a_nonvanishing={str(q): v for q, v in nonvanishing.items()},
            a_zeros=trace.zeros(),
            multiple_clusters={str(q): v for q, v in multiple.items() if v},
        )
        if self.config.t_grid.t_min != 0.0:
            self.warn("t_grid does not start at 0; the torsion right-hand side was skipped")
            return self.summary
        packages = [virtually_small_package(bf, 0.0, betti[q]) for q, bf in enumerate(families)]
        rhs = torsion_rhs(packages, trace.log_at(0.0), lattice_volumes(self.ipc, self.mesh))
        verdict = {"tolerance": settings.tolerance, "passed": rhs.within(settings.tolerance)}
        self.summary["torsion_rhs"] = dict(rhs.to_json(), **verdict)
        return self.summary

    def run_oscillator_tables(self) -> Dict[str, Any]:
        """Symbol tables, the brute-force cross-check and the Richardson-extrapolated 1-D levels."""
        settings = self.config.oscillator
        symbol_rows, oracle_rows = [], []
        for n in range(1, settings.max_dimension + 1):
            for q in range(n + 1):
                for k in range(n + 1):
                    symbols, _ = enumerate_symbols(n, q, k, settings.max_order)
                    symbol_rows += [(*s.row(), eigenform_residual(s, 1.0, RESIDUAL_SPACING)) for s in symbols]
                    oracle_rows.append(cross_check_symbols(n, q, k, settings.max_order).row())
        self.writer.write_csv("symbols.csv", ("n", "q", "k", "index_set", "p", "order", "fd_residual"), symbol_rows)
        self.writer.write_csv("oracle.csv", ("n", "q", "k", "enumerated", "brute_force", "agrees"), oracle_rows)
        levels = richardson_oscillator(settings.richardson_levels, settings.richardson_h)
        self.writer.write_csv(
            "richardson.csv",
            ("level", "coarse", "fine", "extrapolated", "exact", "error"),
            [(r.level, r.coarse, r.fine, r.extrapolated, r.exact, r.error) for r in levels],
        )
        disagreements = [row[:3] for row in oracle_rows if not row[5]]
        self.summary.update(
            oracle_agrees=not disagreements,
            oracle_disagreements=disagreements,
            richardson_max_error=max(r.error for r in levels),
            eigenform_residual_max=max((row[-1] for row in symbol_rows), default=0.0),
        )
        return self.summary

    def finish(self, command: str, generated_at: Optional[str] = None) -> Path:
        """Write summary.json with the command, warnings and collected results."""
        self.summary.update(command=command, warning_count=len(self.warnings), warnings=self.warnings)
        return self.writer.write_summary(self.summary, generated_at)
