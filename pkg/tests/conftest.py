"""Fixtures and helpers shared by the test modules."""

# Global imports
from pathlib import Path

# 3rd party imports
import pytest
from hypothesis import HealthCheck, settings

# local imports
from analysis_parallel import EnumerationConfig
from frontend_cilk import build_pspdg_cilk
from frontend_openmp import build_pspdg_omp
from mini_pir import Program, parse
from pdg_builder import build_pdg
from pspdg_core import PsPdg

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
CONFIG = Path(__file__).resolve().parent.parent / "config" / "pspdg.ini"

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("default")


def corpus_files() -> list[Path]:
    return sorted(CORPUS.rglob("*.pir"))


def model_of(path: Path) -> str:
    """Files with 'cilk' in their name use the cilk model."""
    return "cilk" if "cilk" in path.stem else "openmp"


def load(path: Path) -> Program:
    return parse(path.read_text(encoding="utf-8"))


def pspdg(p: Program | str, model: str = "openmp") -> PsPdg:
    """The PS-PDG of a program or of program text."""
    program = parse(p) if isinstance(p, str) else p
    builder = build_pspdg_cilk if model == "cilk" else build_pspdg_omp
    return builder(program, build_pdg(program))


@pytest.fixture
def small_config() -> EnumerationConfig:
    """A plan space small enough for exhaustive checks."""
    return EnumerationConfig(cores=4, chunk_sizes=2)


@pytest.fixture
def is_kernel() -> Program:
    return load(CORPUS / "is_kernel.pir")
