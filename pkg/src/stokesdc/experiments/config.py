"""Experiment configuration: a single JSON document."""

from dataclasses import dataclass, field, asdict
import json
from pathlib import Path

from .. import mesh
from ..multigrid import CycleParams


DATA_DIR = Path(__file__).resolve().parent.parent / "data"


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    domain: str = "square"
    n: int = 64
    bc: str = "dirichlet"
    refinement: int = None
    depth: int = 2

    def grid(self):
        """Grid descriptor (no DoF maps are built)."""
        try:
            if self.domain == "step":
                if self.refinement is None or self.refinement < 0:
                    raise ConfigError("the step domain needs a nonnegative refinement level")
                return mesh.StructuredGrid("step", 2 ** int(self.refinement), "step")
            return mesh.StructuredGrid(self.domain, int(self.n), self.bc)
        except mesh.MeshError as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self):
        g = self.grid()
        if self.depth < 1:
            raise ConfigError("depth must be at least 1")
        if g.n % 2 ** (self.depth - 1):
            raise ConfigError(f"{g.n} cells per unit length do not admit depth {self.depth}")


@dataclass
class SolverConfig:
    method: str = "stationary"
    rule: str = "relative"
    tol: float = 1e-10
    max_iter: int = None

    def validate(self):
        if self.method not in ("stationary", "fgmres"):
            raise ConfigError(f"unknown solver {self.method!r}")
        if self.rule not in ("relative", "absolute"):
            raise ConfigError(f"unknown stopping rule {self.rule!r}")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")

    @property
    def iteration_cap(self):
        if self.max_iter is not None:
            return self.max_iter
        return 100 if self.method == "stationary" else 200


@dataclass
class MeasurementConfig:
    num_runs: int = 100
    tail: int = 10
    seed: int = 20210
    batch: int = 50
    guess_range: tuple = (0.0, 1.0)

    def validate(self):
        if self.num_runs < 1 or self.tail < 2 or self.batch < 1:
            raise ConfigError("num_runs and batch must be >= 1 and tail >= 2")
        if len(self.guess_range) != 2 or not self.guess_range[0] < self.guess_range[1]:
            raise ConfigError("guess_range must be an increasing pair")
        self.guess_range = tuple(float(v) for v in self.guess_range)


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    cycle: CycleParams = field(default_factory=CycleParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    out_dir: str = "results"

    def validate(self):
        self.problem.validate()
        self.solver.validate()
        self.measurement.validate()
        try:
            self.cycle.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {"problem", "cycle", "solver", "measurement", "out_dir"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            return cls(problem=ProblemConfig(**d.get("problem", {})),
                       cycle=CycleParams.from_dict(d.get("cycle", {})),
                       solver=SolverConfig(**d.get("solver", {})),
                       measurement=MeasurementConfig(**d.get("measurement", {})),
                       out_dir=d.get("out_dir", "results")).validate()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = asdict(self)
        d["cycle"] = self.cycle.to_dict()
        return d

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def load_table(table_id):
    """Parameter rows shipped with the package for a reference table."""
    path = DATA_DIR / f"table{int(table_id)}.json"
    if not path.exists():
        raise ConfigError(f"no data for table {table_id}")
    return json.loads(path.read_text())


def table_cycles(table_id):
    """``{label: CycleParams}`` for the rows of table 2 or 3."""
    return {row["label"]: CycleParams.from_dict(row["cycle"]) for row in load_table(table_id)["rows"]}
