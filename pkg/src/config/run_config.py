# run_config.py
import os
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from dotenv import load_dotenv

from src.errors import InputError

load_dotenv()

DEFAULT_WORKERS = int(os.getenv("PHONOSIGNAL_WORKERS", "1"))
LOG_FILE = os.getenv("PHONOSIGNAL_LOG_FILE", "phonosignal.log")
ENV_SEED = os.getenv("PHONOSIGNAL_SEED")

# --- Defaults ---
N_PERM = 10_000
ALPHA = 0.05
MIN_NON_NA_D = 50
MIN_NON_NA_K = 20
CALIBRATION_N_PERM = 1_000


class SubsetMode(str, Enum):
    NONE = "none"
    EVERY_SECOND = "every-second"
    MIDDLE_50 = "middle-50"


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    tree: Optional[str] = None
    tree_dir: Optional[str] = None
    wordlist: Optional[str] = None
    classmap: Optional[str] = None
    characters: Optional[str] = None
    output: Optional[str] = None
    n_perm: int = N_PERM
    alpha: float = ALPHA
    min_non_na: Optional[int] = None
    seed: Optional[int] = None
    normalize: bool = False
    subset: SubsetMode = SubsetMode.NONE
    statistic: str = "auto"
    modes: tuple = ("binary", "fwd", "bwd", "class-fwd", "class-bwd")
    schemes: tuple = ("place", "major_place", "manner")
    workers: int = DEFAULT_WORKERS
    pseudocount: bool = False
    two_sided_d: bool = False
    max_skew: Optional[float] = None
    full_precision: bool = False
    tip_map: Optional[str] = None
    calibration_step: float = 1.0
    traits_per_step: int = 1000
    simulate_tips: Optional[int] = None
    reference_tree: Optional[str] = None
    default_length: Optional[float] = None
    kind: Optional[str] = None
    results: tuple = ()
    labels: tuple = ()
    progress: bool = True

    @property
    def d_alpha(self):
        # two nulls per character
        return self.alpha / 2

    def min_non_na_for(self, statistic):
        if self.min_non_na is not None:
            return self.min_non_na
        return MIN_NON_NA_D if statistic == "D" else MIN_NON_NA_K

    def require_seed(self):
        if self.seed is None:
            raise InputError(f"'{self.subcommand}' is stochastic: pass --seed or set PHONOSIGNAL_SEED")
        return self.seed

    @classmethod
    def from_namespace(cls, ns):
        values = {k: v for k, v in vars(ns).items() if k in cls.__dataclass_fields__ and v is not None}
        if "seed" not in values and ENV_SEED is not None:
            values["seed"] = int(ENV_SEED)
        if "subset" in values:
            values["subset"] = SubsetMode(values["subset"])
        for key in ("modes", "schemes", "results", "labels"):
            if key in values:
                values[key] = tuple(values[key])
        if values.get("n_perm", N_PERM) < 1:
            raise InputError("--n-perm must be at least 1")
        if not 0 < values.get("alpha", ALPHA) < 1:
            raise InputError("--alpha must lie in (0, 1)")
        if "default_length" in values and not 0 <= values["default_length"] < float("inf"):
            raise InputError("--default-length must be a non-negative number")
        return cls(**values)
