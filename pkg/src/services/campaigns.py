"""Verification campaigns over resolution sweeps and seeds.

Each campaign returns a RunReport whose table columns are fixed in
``src.schemas.reports``. Timings are left out in deterministic-sum mode so
that repeated runs produce identical bytes. A campaign whose eigen solves
miss their residual bound raises EigenConvergenceError (exit code 3).
"""

import logging
import math
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager

import numpy as np

from src.config.experiment import ExperimentConfig
from src.config.settings import Settings, get_settings
from src.schemas.reports import (
    BETTI_COLUMNS,
    CONSTANTS_COLUMNS,
    CONVERGENCE_COLUMNS,
    KORN_COLUMNS,
    VERIFY_COLUMNS,
    ConstantsRow,
    ConvergenceRow,
    RunReport,
    finite_or_none,
)
from src.services.diff_ops import compatible_tensor
from src.services.grid_fields import (
    BCMode,
    DomainKind,
    DomainMask,
    TensorField,
    TensorKind,
    VectorField,
    make_domain,
    random_tensor,
    random_vector,
)
from src.services.korn_analysis import (
    KornMode,
    check_sharp_constant,
    describe_chain,
    korn_check,
    main_lemma_chain,
    norm_equivalence_check,
)
from src.services.spectral_constants import (
    ConstantsRecord,
    compute_constants,
    harmonic_dimension,
    sharp_constant,
)
from src.utils.error_handler import EigenConvergenceError, ExitCode

logger = logging.getLogger(__name__)

# Relative bound on the Korn identity residual.
KORN_IDENTITY_TOL = 1e-13
# Relative change between the two finest levels that counts as converged.
CONVERGENCE_FLAG = 0.05


def richardson_extrapolate(
    resolutions: list[int], values: list[float], default_order: float
) -> tuple[float | None, float | None]:
    """Limit and order from the finest levels of a refinement sweep.

    With three levels the order is estimated from successive differences;
    with two the ``default_order`` is assumed.
    """
    if len(values) < 2:
        return None, None
    spacing = [1.0 / (n - 1) for n in resolutions]
    order = default_order
    if len(values) >= 3:
        d1 = values[-2] - values[-3]
        d2 = values[-1] - values[-2]
        ratio = spacing[-2] / spacing[-1]
        if d1 != 0.0 and d2 != 0.0 and d1 / d2 > 1.0:
            order = math.log(d1 / d2) / math.log(ratio)
    factor = (spacing[-2] / spacing[-1]) ** order
    limit = values[-1] + (values[-1] - values[-2]) / (factor - 1.0)
    return limit, order


class CampaignService:
    """Runs the five campaigns on an ExperimentConfig."""

    @property
    def settings(self) -> Settings:
        return get_settings()

    @property
    def deterministic(self) -> bool:
        return self.settings.deterministic_sum

    def build_mask(self, config: ExperimentConfig, resolution: int) -> DomainMask:
        domain = config.domain
        return make_domain(
            domain.kind,
            (resolution,) * domain.dimension,
            domain.spacing(resolution),
            geometry=domain.geometry or None,
        )

    def _new_report(self, command: str, config: ExperimentConfig, columns: list[str]) -> RunReport:
        return RunReport(
            command=command,  # type: ignore[arg-type]
            tool_version=self.settings.app_version,
            config=config.echo(),
            columns=columns,
            timings=None if self.deterministic else {},
        )

    @contextmanager
    def _timed(self, report: RunReport, label: str) -> Iterator[None]:
        start = time.perf_counter()
        yield
        if report.timings is not None:
            report.timings[label] = round(time.perf_counter() - start, 6)

    def _constants_row(self, mask: DomainMask, record: ConstantsRecord) -> ConstantsRow:
        return ConstantsRow(
            resolution=mask.shape[0],
            h=mask.h,
            c_p=record.c_p,
            c_m=record.c_m,
            c_hat=record.c_hat,
            c_sharp=record.c_sharp,
            dim_H1=record.harmonic_dims.get(1, 0),
            harmonic_dims={str(q): d for q, d in record.harmonic_dims.items()},
            gap_ratios={str(q): finite_or_none(g) for q, g in record.gap_ratios.items()},
            boundary_components=mask.boundary_components,
            flagged=record.flagged,
        )

    def _finish(self, report: RunReport) -> RunReport:
        report.exit_code = int(ExitCode.VIOLATION if report.violations else ExitCode.OK)
        logger.info(
            f"Campaign {report.command} finished with exit code {report.exit_code}",
            extra={"checks": [c.model_dump() for c in report.checks]},
        )
        return report

    @staticmethod
    def _require_converged(converged: bool, what: str, n: int, notes: list[str] | None = None) -> None:
        if not converged:
            raise EigenConvergenceError(
                f"{what} at resolution {n} missed its eigen residual bound",
                details={"resolution": n, "notes": notes or []},
            )

    @staticmethod
    def _warn(report: RunReport, n: int, messages: list[str]) -> None:
        """Unreliable spectral gaps are reported, not counted as failed checks."""
        for message in messages:
            report.warnings.append(f"resolution {n}: {message}")

    def constants(self, config: ExperimentConfig) -> RunReport:
        """c_p, c_m, c_hat and harmonic dimensions per resolution."""
        report = self._new_report("constants", config, CONSTANTS_COLUMNS)
        for n in config.domain.resolutions:
            logger.info(f"constants: resolution {n}")
            with self._timed(report, f"resolution_{n}"):
                mask = self.build_mask(config, n)
                record = compute_constants(mask, config.bc_mode, config.degrees, config.tolerances.eig_tol)
            self._require_converged(record.converged, "constants", n, record.notes)
            self._warn(report, n, record.notes)
            row = self._constants_row(mask, record)
            report.constants.append(row)
            report.rows.append(row.table_row())
        return self._finish(report)

    def _tensor_for(self, config: ExperimentConfig, mask: DomainMask, seed: int) -> TensorField:
        if config.field_family == "compatible":
            return compatible_tensor(mask, seed)
        kind = TensorKind.SKEW if config.field_family == "skew" else TensorKind.GENERIC
        return random_tensor(mask, config.bc_mode, seed, kind)

    def verify(self, config: ExperimentConfig) -> RunReport:
        """Sharp constant against ĉ plus the proof chain over all seeds."""
        report = self._new_report("verify", config, VERIFY_COLUMNS)
        tol = config.tolerances
        dump_dir = config.output.directory if config.output.dump_counterexamples else None

        for n in config.domain.resolutions:
            logger.info(f"verify: resolution {n}, {len(config.seeds)} seeds")
            with self._timed(report, f"resolution_{n}"):
                mask = self.build_mask(config, n)
                record = compute_constants(mask, config.bc_mode, tol=tol.eig_tol)
                self._require_converged(record.converged, "constants", n, record.notes)
                self._warn(report, n, record.notes)
                sharp = sharp_constant(mask, config.bc_mode, tol=tol.eig_tol)
                self._require_converged(sharp.eigen.converged, "sharp constant", n, sharp.eigen.notes)
                record.c_sharp = sharp.c_sharp
                sharp_check = check_sharp_constant(sharp, record, tol.chain_tol)
                report.check("sharp_constant").record(
                    sharp_check.passed if sharp_check.hypothesis_met else None,
                    sharp.c_sharp / record.c_hat,
                )
                report.notes.append(
                    f"resolution {n}: c_hat/c_sharp = {sharp_check.gap:.6f}"
                )
                harmonic = None
                if not record.connected_boundary:
                    harmonic = harmonic_dimension(mask, 1, config.bc_mode, tol.eig_tol)
                    self._require_converged(harmonic.converged, "harmonic 1-forms", n)

                for seed in config.seeds:
                    t = self._tensor_for(config, mask, seed)
                    chain = main_lemma_chain(
                        t,
                        record,
                        tol.chain_tol,
                        harmonic,
                        dump_dir,
                        tag=f"n{n}_seed{seed}",
                        cg_tol=tol.cg_tol,
                    )
                    report.check("main_lemma_chain").record(
                        chain.passed if chain.hypothesis_met else None, chain.final_ratio
                    )
                    if chain.counterexample_path:
                        report.counterexamples.append(chain.counterexample_path)
                    equivalence = norm_equivalence_check(t, record.c_hat, tol.chain_tol)
                    report.check("norm_equivalence").record(
                        equivalence.passed if chain.hypothesis_met else None
                    )
                    if config.field_family == "compatible" and record.connected_boundary:
                        korn = korn_check(
                            self._constant_boundary_vector(mask, seed), KornMode.TANGENTIAL_VARIANT
                        )
                        report.check("korn_tangential_variant").record(korn.passed, korn.ratio)

                    row = {"resolution": n, "seed": seed, "family": config.field_family}
                    row.update(describe_chain(chain))
                    report.rows.append({column: row.get(column) for column in VERIFY_COLUMNS})

            report.constants.append(self._constants_row(mask, record))
        return self._finish(report)

    def _constant_boundary_vector(self, mask: DomainMask, seed: int) -> VectorField:
        """Random interior values with each row equal to a random constant on the inside boundary."""
        base = random_vector(mask, BCMode.FULL_DIRICHLET, seed)
        offsets = np.random.default_rng(seed + 1).uniform(-1.0, 1.0, size=mask.N)
        values = base.scalars + np.where(mask.inside, 1.0, 0.0)[np.newaxis] * offsets[
            (slice(None),) + (np.newaxis,) * mask.N
        ]
        return VectorField(mask, values[:, np.newaxis], BCMode.NONE)

    def korn(self, config: ExperimentConfig) -> RunReport:
        """Korn ratio and identity residual for Dirichlet and tangential-variant fields."""
        report = self._new_report("korn", config, KORN_COLUMNS)
        for n in config.domain.resolutions:
            logger.info(f"korn: resolution {n}, {len(config.seeds)} seeds")
            with self._timed(report, f"resolution_{n}"):
                mask = self.build_mask(config, n)
                fields: list[tuple[KornMode, Callable[[int], VectorField]]] = [
                    (KornMode.DIRICHLET, lambda s: random_vector(mask, BCMode.FULL_DIRICHLET, s)),
                ]
                if mask.boundary_components == 1:
                    fields.append((KornMode.TANGENTIAL_VARIANT, lambda s: self._constant_boundary_vector(mask, s)))
                else:
                    report.notes.append(
                        f"resolution {n}: tangential variant skipped, "
                        f"{mask.boundary_components} boundary components"
                    )
                for seed in config.seeds:
                    for mode, make in fields:
                        result = korn_check(make(seed), mode)
                        report.check(f"korn_{mode.value}").record(result.passed, result.ratio)
                        report.check("korn_identity").record(
                            result.identity_residual <= KORN_IDENTITY_TOL, result.identity_residual
                        )
                        report.rows.append(
                            {
                                "resolution": n,
                                "seed": seed,
                                "mode": mode.value,
                                "ratio": result.ratio,
                                "identity_residual": result.identity_residual,
                                "bound": result.bound,
                                "passed": result.passed,
                                "zero_field": result.zero_field,
                            }
                        )
        return self._finish(report)

    def betti(self, config: ExperimentConfig) -> RunReport:
        """Harmonic Dirichlet dimensions for every degree and resolution."""
        report = self._new_report("betti", config, BETTI_COLUMNS)
        n_dim = config.domain.dimension
        degrees = config.degrees if config.degrees is not None else list(range(n_dim + 1))
        for n in config.domain.resolutions:
            logger.info(f"betti: resolution {n}, degrees {degrees}")
            with self._timed(report, f"resolution_{n}"):
                mask = self.build_mask(config, n)
                for q in degrees:
                    harmonic = harmonic_dimension(mask, q, config.bc_mode, config.tolerances.eig_tol)
                    self._require_converged(harmonic.converged, f"harmonic {q}-forms", n)
                    if harmonic.warning:
                        self._warn(report, n, [harmonic.warning])
                    if q == 1:
                        connected = mask.boundary_components == 1
                        report.check("connected_boundary_no_h1").record(
                            (harmonic.dimension == 0) == connected
                        )
                    report.rows.append(
                        {
                            "domain": mask.kind.value,
                            "N": n_dim,
                            "resolution": n,
                            "q": q,
                            "dimension": harmonic.dimension,
                            "gap_ratio": finite_or_none(harmonic.gap_ratio),
                            "reliable": harmonic.reliable,
                            "boundary_components": mask.boundary_components,
                        }
                    )
        return self._finish(report)

    def convergence(self, config: ExperimentConfig) -> RunReport:
        """Dyadic sweep of c_p, c_m and c_sharp with Richardson-extrapolated limits."""
        report = self._new_report("convergence", config, CONVERGENCE_COLUMNS)
        resolutions = config.domain.resolutions
        series: dict[str, list[float]] = {"c_p": [], "c_m": [], "c_sharp": []}
        for n in resolutions:
            logger.info(f"convergence: resolution {n}")
            with self._timed(report, f"resolution_{n}"):
                mask = self.build_mask(config, n)
                record = compute_constants(mask, config.bc_mode, tol=config.tolerances.eig_tol)
                self._require_converged(record.converged, "constants", n, record.notes)
                self._warn(report, n, record.notes)
                sharp = sharp_constant(mask, config.bc_mode, tol=config.tolerances.eig_tol)
                self._require_converged(sharp.eigen.converged, "sharp constant", n, sharp.eigen.notes)
                record.c_sharp = sharp.c_sharp
            series["c_p"].append(record.c_p)
            series["c_m"].append(record.c_m)
            series["c_sharp"].append(record.c_sharp)
            report.constants.append(self._constants_row(mask, record))

        default_order = 2.0 if config.domain.kind == DomainKind.BOX else 1.0
        for name, values in series.items():
            limit, order = richardson_extrapolate(resolutions, values, default_order)
            change = abs(values[-1] - values[-2]) / abs(values[-1]) if len(values) >= 2 else None
            row = ConvergenceRow(
                constant=name,
                resolutions=list(resolutions),
                values=values,
                extrapolated=limit,
                order=order,
                relative_change=change,
                converged=change is not None and change < CONVERGENCE_FLAG,
            )
            report.convergence.append(row)
            report.rows.append(row.table_row())
        return self._finish(report)

    def run(self, command: str, config: ExperimentConfig) -> RunReport:
        """Dispatch ``command`` to its campaign."""
        campaigns: dict[str, Callable[[ExperimentConfig], RunReport]] = {
            "constants": self.constants,
            "verify": self.verify,
            "korn": self.korn,
            "betti": self.betti,
            "convergence": self.convergence,
        }
        return campaigns[command](config)


# Global instance
_campaign_service: CampaignService | None = None


def get_campaign_service() -> CampaignService:
    """Get the campaign service instance."""
    global _campaign_service
    if _campaign_service is None:
        _campaign_service = CampaignService()
    return _campaign_service
