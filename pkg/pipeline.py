"""
Full reconstruction run: simulate -> calibrate sigma0 -> P_D per set -> fit mu
-> ideal-LO P0 and w0 -> Fock inversion -> overlaps and Vogel verdicts ->
artifacts, manifest and run ledger.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np

from config import PipelineConfig, oracle_label
from errors import BhdError
from physics.densities import (
    MIN_SAMPLES_CORRELATION,
    Density1D,
    StatObject,
    estimate_density_1d,
    estimate_sigma0,
    joint_histogram,
)
from physics.inversion import (
    fit_mu,
    invert_single_mu,
    invert_two_mu,
    overlap_1d,
    overlap_2d,
    vogel_criterion,
)
from physics.reconstruction import (
    antidiagonal_marginal,
    correlation_density_empirical,
    negative_fraction,
    reconstruct_joint_ideal,
    reconstruct_w,
    reconstruct_w0,
    theoretical_joint,
    theoretical_w0,
)
from physics.simulator import (
    DetectorRecords,
    LOModel,
    effective_mu,
    shot_noise_curve,
    simulate,
    single_detector_marginal,
)
from physics.states import Fock, QuadratureConvention, prcs_label
from utils.artifacts import artifact_kind, read_json, save_artifact, save_records, sha256_file
from utils.ledger import record_run
from utils.manifest import write_manifest

logger = logging.getLogger(__name__)

PARTIAL_MARKER = ".partial"


@dataclass
class PipelineResult:
    exit_code: int
    out_dir: Path
    metrics: dict = field(default_factory=dict)
    manifest: Optional[Path] = None
    run_id: Optional[int] = None
    error: Optional[str] = None


class PipelineRun:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.stage = "setup"
        self.artifacts: list[tuple[Path, str]] = []
        self.metrics: dict = {}

    def save(self, obj: StatObject, name: str) -> None:
        kind = artifact_kind(obj)
        for path in save_artifact(obj, self.out_dir / "plots" / f"{name}.csv"):
            self.artifacts.append((path, kind))

    def _enter(self, stage: str) -> None:
        self.stage = stage
        logger.info("Pipeline: %s", stage)

    def simulate_sets(self) -> dict[str, DetectorRecords]:
        self._enter("simulate")
        out = {}
        for label, sim in self.config.state_configs().items():
            records = simulate(sim)
            path = save_records(records, self.out_dir / "records" / f"{label}.npz", {"label": label, **sim.model_dump(mode="json")})
            self.artifacts.append((path, "records"))
            out[label] = records
        return out

    def calibrate(self, records: dict[str, DetectorRecords]) -> tuple[QuadratureConvention, dict[str, Density1D], dict[float, float]]:
        self._enter("calibrate")
        cfg = self.config
        sigma0 = estimate_sigma0(records["vacuum"])
        self.metrics["sigma0_hat"] = sigma0
        conv = QuadratureConvention(sigma0=sigma0)
        q_axis = cfg.grids.quadrature.axis(sigma0)
        p_d = {}
        for label, rec in records.items():
            p_d[label] = estimate_density_1d(rec.d, q_axis)
            self.save(p_d[label], f"pd_{label}")
        mus: dict[float, float] = {}
        fitted = {}
        for mu in sorted(set(cfg.joint_mus) | set(cfg.correlation_mus)):
            if mu == 0:
                continue
            label = prcs_label(mu)
            fitted[label] = fit_mu(p_d[label], conv)
            mus[mu] = effective_mu(fitted[label], cfg.eta)
            logger.debug("Pipeline: %s fitted mu %.5f (used %.5f)", label, fitted[label], mus[mu])
        # ordered by nominal mu, matching mu_nominal
        self.metrics["mu_nominal"] = sorted(mus)
        self.metrics["mu_hat"] = [fitted[prcs_label(mu)] for mu in sorted(mus)]
        return conv, p_d, mus

    def single_detector(self, vacuum: DetectorRecords, conv: QuadratureConvention, scale: float) -> None:
        axis = self.config.grids.raw_joint.axis(scale)
        self.save(single_detector_marginal(vacuum, axis), "single_detector_vacuum")
        self.save(shot_noise_curve(conv, axis), "shot_noise")

    def joint_maps(self, records, conv, p_d, mus, scale: float) -> None:
        self._enter("joint maps")
        cfg = self.config
        sigma0 = conv.sigma0
        mu = cfg.joint_mus[1]
        label = prcs_label(mu)

        j_axis = cfg.grids.joint.axis(sigma0)
        p0_vac = reconstruct_joint_ideal(p_d["vacuum"], sigma0, j_axis)
        p0_mu = reconstruct_joint_ideal(p_d[label], sigma0, j_axis)
        inv = invert_single_mu(p0_vac, p0_mu, mus[mu])
        theory = theoretical_joint(Fock(n=1), j_axis, lo=LOModel(conv=conv))
        self.metrics["C"] = overlap_2d(inv.l1, theory)
        self.metrics["mass_p0_fock1"] = inv.total_mass_l1
        for obj, name in ((p0_vac, "p0_vacuum"), (p0_mu, f"p0_{label}"), (inv.l1, "p0_fock1"), (theory, "p0_fock1_theory")):
            self.save(obj, name)

        for n in cfg.fock_oracles:
            oracle = reconstruct_joint_ideal(p_d[oracle_label(n)], sigma0, j_axis)
            self.metrics[f"C_oracle_fock{n}"] = overlap_2d(oracle, theoretical_joint(Fock(n=n), j_axis, lo=LOModel(conv=conv)))
            self.save(oracle, f"p0_oracle_fock{n}")

        # same inversion on the noisy-LO histograms
        r_axis = cfg.grids.raw_joint.axis(scale)
        raw_vac = joint_histogram(records["vacuum"], r_axis)
        raw_mu = joint_histogram(records[label], r_axis)
        raw_inv = invert_single_mu(raw_vac, raw_mu, mus[mu])
        quadrature = antidiagonal_marginal(raw_inv.l1)
        self.metrics["raw_fock1_variance_ratio"] = quadrature.moment(2) / quadrature.total_mass / (3.0 * sigma0**2)
        for obj, name in ((raw_vac, "raw_vacuum"), (raw_mu, f"raw_{label}"), (raw_inv.l1, "raw_fock1"), (quadrature, "raw_fock1_quadrature")):
            self.save(obj, name)

    def correlations(self, conv, p_d, mus) -> dict[str, Density1D]:
        self._enter("correlation densities")
        cfg = self.config
        sigma0 = conv.sigma0
        m_axis = cfg.grids.correlation.axis(sigma0**2)
        eps = cfg.epsilon * sigma0**2
        positives = cfg.correlation_mus[1:]
        labels = ["vacuum"] + [prcs_label(mu) for mu in positives]

        w0 = {label: reconstruct_w0(p_d[label], sigma0, m_axis, epsilon=eps) for label in labels}
        for label, w in w0.items():
            self.save(w, f"w0_{label}")
        means = {label: w.mean() for label, w in w0.items()}

        self._enter("inversion")
        if len(positives) == 2:
            mu1, mu2 = positives
            inv = invert_two_mu(w0[labels[0]], w0[labels[1]], w0[labels[2]], mus[mu1], mus[mu2])
            pd_inv = invert_two_mu(p_d[labels[0]], p_d[labels[1]], p_d[labels[2]], mus[mu1], mus[mu2])
        else:
            inv = invert_single_mu(w0[labels[0]], w0[labels[1]], mus[positives[0]])
            pd_inv = invert_single_mu(p_d[labels[0]], p_d[labels[1]], mus[positives[0]])

        th1 = theoretical_w0(Fock(n=1), m_axis, conv, epsilon=eps)
        self.metrics["D1"] = overlap_1d(inv.l1, th1)
        self.metrics["mass_w0_fock1"] = inv.total_mass_l1
        means["fock1"] = inv.l1.mean()
        self.save(inv.l1, "w0_fock1")
        self.save(th1, "w0_fock1_theory")
        self.save(pd_inv.l1, "pd_fock1")
        inverted = {"fock1": pd_inv.l1}
        if inv.l2 is not None:
            th2 = theoretical_w0(Fock(n=2), m_axis, conv, epsilon=eps)
            self.metrics["D2"] = overlap_1d(inv.l2, th2)
            self.metrics["mass_w0_fock2"] = inv.total_mass_l2
            means["fock2"] = inv.l2.mean()
            self.save(inv.l2, "w0_fock2")
            self.save(th2, "w0_fock2_theory")
            self.save(pd_inv.l2, "pd_fock2")
            inverted["fock2"] = pd_inv.l2

        for n in cfg.fock_oracles:
            oracle = reconstruct_w0(p_d[oracle_label(n)], sigma0, m_axis, epsilon=eps)
            self.metrics[f"D_oracle_fock{n}"] = overlap_1d(oracle, theoretical_w0(Fock(n=n), m_axis, conv, epsilon=eps))
            self.save(oracle, f"w0_oracle_fock{n}")
        self.metrics["correlation_mean"] = means
        return inverted

    def noisy_correlations(self, records, p_d, scale: float) -> None:
        """Raw product histograms against the noisy-LO model built from the same P_D."""
        cfg = self.config
        self.metrics["negative_fraction"] = {label: negative_fraction(rec) for label, rec in records.items()}
        if len(records["vacuum"]) < MIN_SAMPLES_CORRELATION:
            logger.info("Pipeline: %d records per set, skipping raw product histograms", len(records["vacuum"]))
            return
        self._enter("raw correlation densities")
        m_axis = cfg.grids.correlation.axis(scale * scale)
        eps = cfg.epsilon * scale * scale
        sigma_s = float(np.std(records["vacuum"].s, ddof=1))
        noisy = {}
        for mu in cfg.correlation_mus:
            label = prcs_label(mu)
            empirical = correlation_density_empirical(records[label], m_axis, epsilon=eps)
            model = reconstruct_w(p_d[label], sigma_s, m_axis, epsilon=eps)
            noisy[label] = overlap_1d(empirical, model)
            self.save(empirical, f"w_raw_{label}")
            self.save(model, f"w_model_{label}")
        self.metrics["D_noisy"] = noisy

    def vogel(self, p_d: dict[str, Density1D], inverted: dict[str, Density1D], sigma0: float) -> None:
        self._enter("nonclassicality")
        verdicts = {label: vogel_criterion(p, sigma0).to_dict() for label, p in p_d.items()}
        verdicts.update({label: vogel_criterion(p, sigma0).to_dict() for label, p in inverted.items()})
        self.metrics["vogel"] = verdicts

    def execute(self) -> None:
        records = self.simulate_sets()
        conv, p_d, mus = self.calibrate(records)
        scale = float(np.std(records["vacuum"].i1, ddof=1))
        self.single_detector(records["vacuum"], conv, scale)
        self.joint_maps(records, conv, p_d, mus, scale)
        inverted = self.correlations(conv, p_d, mus)
        self.noisy_correlations(records, p_d, scale)
        self.vogel(p_d, inverted, conv.sigma0)


def config_echo(config: PipelineConfig) -> dict:
    """Config as recorded in the manifest; output location is not part of it."""
    return config.model_dump(mode="json", exclude={"output_dir", "ledger_url", "record_ledger"})


def _mark_partial(out_dir: Path, stage: str, message: str) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / PARTIAL_MARKER).write_text(f"stage: {stage}\nerror: {message}\n", encoding="utf-8")
    except OSError:
        logger.exception("Pipeline: cannot write the partial marker in %s", out_dir)


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """
    Run every stage and write artifacts under config.output_dir. Failures are
    reported through the exit code (BhdError codes, 1 otherwise) with the
    partial artifacts kept next to a `.partial` marker.
    """
    started = datetime.utcnow()
    run = PipelineRun(config)
    out_dir = run.out_dir
    marker = out_dir / PARTIAL_MARKER
    if marker.exists():
        marker.unlink()
    result = PipelineResult(exit_code=0, out_dir=out_dir)
    try:
        run.execute()
        run._enter("manifest")
        result.manifest = write_manifest(
            out_dir,
            scenario=config.scenario,
            seed=config.seed,
            config=config_echo(config),
            artifacts=run.artifacts,
            metrics=run.metrics,
        )
    except (BhdError, ValueError) as exc:
        logger.exception("Pipeline: stage %r failed", run.stage)
        result.exit_code = exc.exit_code if isinstance(exc, BhdError) else 1
        result.error = f"{run.stage}: {exc}"
        _mark_partial(out_dir, run.stage, str(exc))
    result.metrics = run.metrics

    if config.record_ledger:
        entries = read_json(result.manifest)["artifacts"] if result.manifest else []
        result.run_id = record_run(
            config.ledger_url,
            scenario=config.scenario,
            seed=config.seed,
            status="complete" if result.exit_code == 0 else "partial",
            exit_code=result.exit_code,
            output_dir=str(out_dir),
            n_samples=config.n_samples,
            excess_db=config.excess_db,
            metrics=run.metrics,
            artifacts=entries,
            manifest_sha256=sha256_file(result.manifest) if result.manifest else None,
            error=result.error,
            started_at=started,
        )
    logger.info("Pipeline: %s finished with exit code %d", config.scenario, result.exit_code)
    return result
