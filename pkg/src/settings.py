"""Read config/pspdg.ini and merge it with environment and command line values."""

# pylint: disable=logging-fstring-interpolation

# Global imports
import logging
import os
from configparser import ConfigParser
from dataclasses import dataclass, field
from pathlib import Path

# local imports
import param
from analysis_parallel import EnumerationConfig


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs, with defaults from param.py."""

    inputs: tuple[Path, ...] = ()
    model: str = "openmp"
    cores: int = param.default_cores
    chunk_sizes: int = param.default_chunk_sizes
    coverage: float = param.default_coverage
    output_format: str = "text"
    ablate: str | None = None
    baseline: str = "source"
    trace_cap: int = param.default_trace_cap
    seed: int = param.default_seed
    extensions: int = param.default_extensions
    corpus: Path = field(default_factory=lambda: Path(param.default_corpus))

    def enumeration(self) -> EnumerationConfig:
        """The enumeration part of the run configuration."""
        return EnumerationConfig(
            cores=self.cores,
            chunk_sizes=self.chunk_sizes,
            coverage_threshold=self.coverage,
        )


# ------------------------------------------------------------------------
#
# ------------------------------------------------------------------------
def find_ini_file(filename: str = param.ini_filename) -> Path | None:
    """Find the given configuration file in the current folder, its parents, or its subfolders

    :param filename: Name of the file to look for
    :return: Path to the file, or None when it does not exist anywhere nearby
    """

    current_dir = Path.cwd()

    # Check the current folder and upwards first
    for folder in (current_dir, *current_dir.parents):
        for search_path in (folder / filename, folder / "config" / filename):
            if search_path.is_file():
                return search_path

    # If not found in higher directories, check in lower (sub) directories
    for child in sorted(current_dir.glob(f"**/{filename}")):
        if child.is_file() and "examples" not in child.parts:
            return child

    return None


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def read_ini(configfile: Path | None) -> dict[str, str]:
    """Read the ini file into a flat dictionary of 'section.key' entries.

    :param configfile: Path to the ini file, may be None
    :return: dictionary with lowercase 'section.key' names

    The ini file looks like::

        [ENUMERATION]
        cores = 56
        chunk_sizes = 8
        coverage = 0.01

        [EMULATOR]
        trace_cap = 1000000
        seed = 1
        extensions = 3

        [CORPUS]
        root = corpus
    """

    if not configfile:
        return {}

    ini = ConfigParser()
    ini.read(configfile, encoding="utf-8")

    values: dict[str, str] = {}
    for section in ini.sections():
        for key, value in ini.items(section):
            values[f"{section.lower()}.{key.lower()}"] = value.strip()
    logging.debug(f"{values=}")
    return values


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def load_run_config(
    configfile: Path | None = None, **overrides: object
) -> RunConfig:
    """Build a RunConfig. Precedence is command line, environment, ini file, defaults.

    :param configfile: ini file to read. When None, find_ini_file() is used
    :param overrides: values given on the command line. None means 'not given'
    :return: the merged RunConfig

    >>> load_run_config(Path("does-not-exist.ini"), cores=4).cores
    4
    """

    if configfile is None:
        configfile = find_ini_file()
    ini = read_ini(configfile) if configfile and configfile.is_file() else {}

    def pick(name: str, key: str, convert, default):  # type: ignore[no-untyped-def]
        given = overrides.get(name)
        if given is not None:
            return given
        if key in ini:
            try:
                return convert(ini[key])
            except ValueError:
                logging.error(f"Invalid value {ini[key]!r} for {key} in {configfile}")
        return default

    corpus_default = Path(ini.get("corpus.root", param.default_corpus))
    env_corpus = os.environ.get(param.corpus_env_var)
    if env_corpus:
        corpus_default = Path(env_corpus)

    known = {f.name for f in RunConfig.__dataclass_fields__.values()}
    plain = {k: v for k, v in overrides.items() if k in known and v is not None}
    for name in ("cores", "chunk_sizes", "coverage", "trace_cap", "seed", "extensions", "corpus"):
        plain.pop(name, None)

    return RunConfig(
        cores=pick("cores", "enumeration.cores", int, param.default_cores),
        chunk_sizes=pick("chunk_sizes", "enumeration.chunk_sizes", int, param.default_chunk_sizes),
        coverage=pick("coverage", "enumeration.coverage", float, param.default_coverage),
        trace_cap=pick("trace_cap", "emulator.trace_cap", int, param.default_trace_cap),
        seed=pick("seed", "emulator.seed", int, param.default_seed),
        extensions=pick("extensions", "emulator.extensions", int, param.default_extensions),
        corpus=Path(overrides["corpus"]) if overrides.get("corpus") else corpus_default,  # type: ignore[arg-type]
        **plain,  # type: ignore[arg-type]
    )
