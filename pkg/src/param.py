"""File for global defaults and constants"""

# Program version, shown by --version
version: str = "0.1.0"

# Enumeration defaults. 56 cores times 8 chunk sizes gives the 448 DOALL options per loop.
default_cores: int = 56
default_chunk_sizes: int = 8
default_coverage: float = 0.01

# Emulator defaults
default_trace_cap: int = 1_000_000
default_seed: int = 1
default_extensions: int = 3

# Oracle limit for the topological longest path
oracle_event_limit: int = 100_000

# Corpus root, relative to the current directory, overridden by PSPDG_CORPUS
default_corpus: str = "corpus"
corpus_env_var: str = "PSPDG_CORPUS"

# Name of the ini file searched for by settings.find_ini_file()
ini_filename: str = "pspdg.ini"

# JSON schema version written by every JSON export
json_schema: int = 1

# Process exit codes
exit_ok: int = 0
exit_input_error: int = 1
exit_property_violation: int = 2
exit_resource_cap: int = 3

# Feature names accepted by --ablate, mapped to pspdg_core.Feature values
ablate_names: dict[str, str] = {
    "hn-ue": "HN_UE",
    "nt": "NT",
    "ctx": "CTX",
    "dsde": "DSDE",
    "psv": "PSV",
}

# Necessity pairs and the feature whose removal makes fast and slow indistinguishable
necessity_pairs: dict[str, str] = {
    "A": "HN_UE",
    "B": "NT",
    "C": "CTX",
    "D": "DSDE",
    "E": "PSV",
}
