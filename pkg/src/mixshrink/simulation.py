"""Synthetic multicollinear mixtures of logistic regressions."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import Dataset, MixtureParams, inverse_link


@dataclass(frozen=True)
class SimScenario:
    name: str
    M: int
    pi0: tuple[float, ...]
    betas0: tuple[tuple[float, ...], ...]
    phi: float
    rho: float | None
    n_train: int
    n_valid: int = 100
    n_reps: int = 2000
    seed: int = 0
    tag: str = "table"

    def __post_init__(self):
        if len(self.pi0) != self.M or len(self.betas0) != self.M:
            raise ValueError(f"{self.name}: pi0 and betas0 must have {self.M} entries")
        if abs(sum(self.pi0) - 1.0) > 1e-12:
            raise ValueError(f"{self.name}: pi0 sums to {sum(self.pi0)}")
        for value in (self.phi, self.rho):
            if value is not None and not 0.0 <= value < 1.0:
                raise ValueError(f"{self.name}: collinearity parameters must lie in [0, 1)")

    @property
    def p(self) -> int:
        return len(self.betas0[0]) - 1

    @property
    def truth(self) -> MixtureParams:
        return MixtureParams(np.array(self.pi0), np.array(self.betas0))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GeneratedSample:
    dataset: Dataset
    true_labels: np.ndarray


def gen_covariates(n: int, phi: float, rho: float | None, p: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Covariates sharing one common standard-normal factor.

    With ``p == 4`` columns 1-2 load ``phi`` and columns 3-4 load ``rho`` on
    the shared factor; with ``p == 2`` both columns load ``phi``.
    """
    if p == 4:
        if rho is None:
            raise ValueError("the four-covariate design needs rho")
        loadings = np.array([phi, phi, rho, rho])
    elif p == 2:
        loadings = np.array([phi, phi])
    else:
        raise ValueError(f"unsupported covariate count {p}; expected 2 or 4")
    w = rng.standard_normal((n, p + 1))
    return np.sqrt(1.0 - loadings**2) * w[:, :p] + loadings * w[:, [p]]


def gen_covariates_4(n: int, phi: float, rho: float, rng: np.random.Generator) -> np.ndarray:
    return gen_covariates(n, phi, rho, 4, rng)


def gen_responses(X: np.ndarray, scenario: SimScenario, rng: np.random.Generator):
    """Draw a component per row from pi0, then y from that component's logistic model.

    ``X`` must already carry the intercept column.  Returns ``(y, labels)``.
    """
    pi0 = np.asarray(scenario.pi0)
    labels = rng.choice(scenario.M, size=X.shape[0], p=pi0)
    betas0 = np.asarray(scenario.betas0)
    eta = np.einsum("ij,ij->i", X, betas0[labels])
    y = (rng.random(X.shape[0]) < inverse_link(eta)).astype(float)
    return y, labels


def generate_sample(scenario: SimScenario, n: int, rng: np.random.Generator,
                    covariates: np.ndarray | None = None) -> GeneratedSample:
    """Generate ``n`` observations; pass ``covariates`` to hold X fixed."""
    Z = covariates if covariates is not None else gen_covariates(
        n, scenario.phi, scenario.rho, scenario.p, rng)
    X = np.column_stack([np.ones(Z.shape[0]), Z])
    y, labels = gen_responses(X, scenario, rng)
    return GeneratedSample(Dataset(X, y), labels)


STUDY1_PI0 = (0.7, 0.3)
STUDY1_BETAS0 = ((1.0, 3.0, 4.0, 5.0, 6.0), (-1.0, -1.0, -2.0, -3.0, -5.0))
STUDY2_PI0 = (0.3, 0.4, 0.3)
STUDY2_BETAS0 = ((2.85, -10.0, -5.11), (10.0, 9.90, 5.11), (-3.84, 9.90, 5.11))

# phi values heading the result tables, and the alternates listed in the prose.
STUDY1_PHI = {"table": (0.85, 0.95, 0.98), "prose": (0.8, 0.9, 0.99)}
STUDY1_RHO = (0.9, 0.99)
STUDY2_PHI = {"table": (0.85, 0.95, 0.99), "text": (0.85, 0.95, 0.98)}


def _fmt(x: float) -> str:
    return f"{x:g}"


def scenario_catalog(include_alternates: bool = True) -> list[SimScenario]:
    """Every simulation cell of both studies.

    Names look like ``s1-n25-phi0.85-rho0.9`` and ``s2-n50-phi0.85``.
    Alternate phi grids carry their tag as a suffix, e.g.
    ``s1-n25-phi0.8-rho0.9-prose``; cells present in both grids are listed once.
    """
    out: list[SimScenario] = []
    seen: set[str] = set()

    def add(s: SimScenario):
        if s.name not in seen:
            seen.add(s.name)
            out.append(s)

    s1_tags = ["table", "prose"] if include_alternates else ["table"]
    for tag in s1_tags:
        for n in (25, 100):
            for rho in STUDY1_RHO:
                for phi in STUDY1_PHI[tag]:
                    base = f"s1-n{n}-phi{_fmt(phi)}-rho{_fmt(rho)}"
                    name = base if tag == "table" else f"{base}-{tag}"
                    add(SimScenario(name, 2, STUDY1_PI0, STUDY1_BETAS0, phi, rho, n, tag=tag))
    s2_tags = ["table", "text"] if include_alternates else ["table"]
    for tag in s2_tags:
        for n in (50, 100):
            for phi in STUDY2_PHI[tag]:
                base = f"s2-n{n}-phi{_fmt(phi)}"
                if tag != "table" and phi in STUDY2_PHI["table"]:
                    continue
                name = base if tag == "table" else f"{base}-{tag}"
                add(SimScenario(name, 3, STUDY2_PI0, STUDY2_BETAS0, phi, None, n, tag=tag))
    return out


def get_scenario(name: str) -> SimScenario:
    for s in scenario_catalog():
        if s.name == name:
            return s
    raise KeyError(name)
