"""Refinement studies and their report files."""
from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ConvergenceTable, Row, dg_error, predict_orders
from .assembly import PenaltyConfig, assemble_system, write_matrix_market
from .cases import CASE_IDS, build_case, get_case, mesh_size, sobolev_regularity
from .geometry import read_geometry
from .linalg import solve

SOLVERS = {"lu": "direct_lu", "gmres": "gmres", "direct_lu": "direct_lu"}
_POWER = re.compile(r"^h\^([0-9.eE+-]+)$")


def parse_dg_token(token: str, h: float) -> tuple:
    """Gap value and exponent for a schedule token (a number or ``h^p``)."""
    token = token.strip()
    m = _POWER.match(token)
    if m:
        lam = float(m.group(1))
        return h ** lam, lam
    dg = float(token)
    if dg < 0:
        raise ValueError("gap distances must be non-negative")
    if dg == 0:
        return 0.0, math.inf
    return dg, math.log(dg) / math.log(h)


@dataclass
class RunConfig:
    """Settings of one refinement study; see ``gapdg run --help`` for defaults."""

    case: str = "ex1"
    gamma: float | None = None
    lam: float | None = None
    dg_schedule: list | None = None
    levels: tuple = (2, 4)
    degree: int = 2
    penalty: float | None = None
    solver: str = "lu"
    tol: float = 1e-10
    quad: int | None = None
    out: str | None = None
    dump_matrix: bool = False
    geometry: str | None = None
    rho_g: float | None = None

    def __post_init__(self):
        if self.case not in CASE_IDS:
            raise ValueError(f"unknown case {self.case!r}; expected one of {', '.join(CASE_IDS)}")
        if self.case == "ex3" and self.gamma is None:
            raise ValueError("ex3 requires gamma")
        L0, L1 = self.levels
        if not 0 <= L0 <= L1:
            raise ValueError("level range must satisfy 0 <= L0 <= L1")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.penalty is not None and self.penalty < 1:
            raise ValueError("penalty must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.lam is not None and self.dg_schedule is not None:
            raise ValueError("lambda and dg schedule are mutually exclusive")
        if self.geometry is not None and (self.lam is not None or self.dg_schedule is not None):
            raise ValueError("a geometry file fixes the gap; drop lambda and dg schedule")
        if self.geometry is None and self.lam is None and self.dg_schedule is None:
            self.lam = 1.0
        if self.dg_schedule is not None and len(self.dg_schedule) != L1 - L0 + 1:
            raise ValueError("dg schedule needs one entry per level")
        if self.quad is not None and not 1 <= self.quad <= 10:
            raise ValueError("quad must be between 1 and 10")

    @property
    def mu(self) -> float:
        return self.penalty if self.penalty is not None else PenaltyConfig.default(self.degree).mu

    def level_gaps(self):
        """``(level, h, dg, lam)`` for every level of the study."""
        out = []
        dim = get_case(self.case, self.gamma).dim
        for i, L in enumerate(range(self.levels[0], self.levels[1] + 1)):
            h = mesh_size(L, dim)
            if self.dg_schedule is not None:
                dg, lam = parse_dg_token(str(self.dg_schedule[i]), h)
            elif self.lam is not None:
                dg, lam = h ** self.lam, self.lam
            else:
                dg, lam = None, math.nan
            out.append((L, h, dg, lam))
        return out


@dataclass
class StudyResult:
    config: RunConfig
    table: ConvergenceTable
    predictions: list = field(default_factory=list)
    timings: list = field(default_factory=list)


def row_prediction(case, dim: int, degree: int, lam: float):
    """Predicted rate for one level, or ``None`` if the exponent is out of range."""
    l, p = sobolev_regularity(case, degree)
    if not lam >= 1:
        return None
    return predict_orders(lam, p, dim, l, degree)


def run_study(config: RunConfig, write: bool = True) -> StudyResult:
    """Build, assemble, solve and measure every level; optionally write reports."""
    case = get_case(config.case, config.gamma)
    domain = read_geometry(config.geometry) if config.geometry else None
    penalty = PenaltyConfig(config.mu)
    method = SOLVERS[config.solver]
    table = ConvergenceTable()
    result = StudyResult(config, table)
    out = Path(config.out) if config.out else None
    if write and out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for L, h, dg, lam in config.level_gaps():
        t0 = time.perf_counter()
        if domain is not None:
            inst = build_case(config.case, L, gamma=config.gamma, degree=config.degree,
                              rho_g=config.rho_g, domain=domain)
            dg = inst.dg
            lam = math.inf if dg == 0 else math.log(dg) / math.log(h)
        else:
            inst = build_case(config.case, L, dg=dg, gamma=config.gamma, degree=config.degree,
                              rho_g=config.rho_g)
        disc = inst.disc
        A, b = assemble_system(disc, case.f, case.u, penalty, config.quad)
        coef = solve(A, b, method=method, tol=config.tol)
        err = dg_error(disc, coef, case.u, case.grad)
        pred = row_prediction(case, case.dim, config.degree, lam)
        result.predictions.append(pred)
        table.add(Row(L, disc.h, dg, err.dg_total, err.l2_total,
                      predicted_rate=pred.predicted if pred else math.nan, breakdown=err))
        result.timings.append(time.perf_counter() - t0)
        if write and out is not None and config.dump_matrix and L == config.levels[1]:
            write_matrix_market(out / "system.mtx", A, comment=f"case {config.case} level {L}")
    if write and out is not None:
        write_reports(result, out)
    return result


def fmt(x) -> str:
    """Full-precision number; NaN and infinity become empty cells."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if not math.isfinite(x):
        return ""
    return "%.17g" % x


CSV_COLUMNS = ("level", "h", "dg", "dg_error", "l2_error", "rate", "predicted_rate")


def table_cells(table: ConvergenceTable) -> list:
    """Formatted cells shared by every report so all files agree."""
    return [[fmt(rec[c]) for c in CSV_COLUMNS] for rec in table.as_records()]


def write_reports(result: StudyResult, out: Path) -> None:
    cells = table_cells(result.table)
    with open(out / "errors.csv", "w", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in cells:
            fh.write(",".join(row) + "\n")
    (out / "report.md").write_text(render_markdown(result, cells))
    (out / "rates.json").write_text(json.dumps(rates_payload(result), indent=2, sort_keys=True) + "\n")


def _prediction_dict(pred):
    if pred is None:
        return None
    vals = {"lambda": pred.lam, "p": pred.p, "d": pred.d, "l": pred.l, "k": pred.k,
            "gamma_pd": pred.gamma, "zeta": pred.zeta, "beta": pred.beta,
            "delta_pi": pred.delta, "predicted": pred.predicted}
    return {k: _json_num(v) for k, v in vals.items()}


def _json_num(x):
    return x if x is not None and math.isfinite(x) else None


def rates_payload(result: StudyResult) -> dict:
    t = result.table
    cfg = asdict(result.config)
    cfg["levels"] = list(cfg["levels"])
    cfg["mu"] = result.config.mu
    cfg = {k: _json_num(v) if isinstance(v, float) else v for k, v in cfg.items()}
    return {
        "version": __version__,
        "config": cfg,
        "levels": [r.level for r in t.rows],
        "h": [r.h for r in t.rows],
        "dg": [r.dg for r in t.rows],
        "dg_error": [r.dg_error for r in t.rows],
        "l2_error": [r.l2_error for r in t.rows],
        "rates": [_json_num(r) for r in t.rates],
        "asymptotic_rate": _json_num(t.asymptotic_rate),
        "predictions": [_prediction_dict(p) for p in result.predictions],
    }


def render_markdown(result: StudyResult, cells) -> str:
    cfg = result.config
    case = get_case(cfg.case, cfg.gamma)
    lines = [f"# Convergence study: {cfg.case}", "",
             f"- problem: {case.description}",
             f"- degree k = {cfg.degree}, penalty mu = {fmt(cfg.mu)}, solver = {SOLVERS[cfg.solver]}",
             "- mesh size h = largest parametric element diameter of the refined spaces",
             "- gap profile: 4 t (1 - t)" if case.dim == 2 else
             "- gap profile: 16 t (1 - t) s (1 - s)",
             f"- gap coefficient rho_g = {fmt(cfg.rho_g if cfg.rho_g is not None else case.rho_r)}"
             + ("" if cfg.rho_g is not None else " (defaults to rho_r)"),
             "", "| " + " | ".join(CSV_COLUMNS) + " |", "|" + "---|" * len(CSV_COLUMNS)]
    lines += ["| " + " | ".join(c or "-" for c in row) + " |" for row in cells]
    lines += ["", "## Predicted orders", "",
              "| level | lambda | p | l | beta | delta_pi | predicted |", "|---|---|---|---|---|---|---|"]
    for r, p in zip(result.table.rows, result.predictions):
        if p is None:
            lines.append(f"| {r.level} | - | - | - | - | - | - |")
        else:
            lines.append(f"| {r.level} | {fmt(p.lam) or 'inf'} | {fmt(p.p)} | {fmt(p.l)} | "
                         f"{fmt(p.beta) or 'inf'} | {fmt(p.delta)} | {fmt(p.predicted)} |")
    lines += ["", f"Asymptotic rate (mean of the last two rates): {fmt(result.table.asymptotic_rate) or '-'}", ""]
    return "\n".join(lines)
