"""
Run manifests and artifacts

A manifest records everything a run depends on. Its hash is the SHA-256
of the canonical JSON (sorted keys, no whitespace) of every field except
``wall_time`` and ``manifest_hash``, and every artifact written for the
run carries it.
"""
import csv
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

from passage_lab import config
from passage_lab.errors import ConfigFileError, DataValidationError
from passage_lab.kernels import ProcessSpec
from passage_lab.passage import SurvivalCurve

logger = logging.getLogger("passage_lab")

UNHASHED_FIELDS = ("wall_time", "manifest_hash")
SURVIVAL_HEADER = ["u", "survivors", "trials", "f_hat", "ci_lo", "ci_hi"]
SURVIVAL_FILE = "survival.csv"
EXPONENT_FILE = "exponent.json"
BOUNDS_FILE = "bounds.json"
MANIFEST_FILE = "manifest.json"


def canonical_json(data) -> str:
    """Sorted keys, no whitespace"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


######################################################################
#  R U N   M A N I F E S T
######################################################################


@dataclass
class RunManifest:
    """Inputs, outputs and provenance of one command"""

    command: str
    kernel: dict
    passage: dict
    sampler: dict
    quadrature: dict
    outputs: Dict[str, str] = field(default_factory=dict)
    code_version: str = ""
    wall_time: Optional[float] = None
    schema_version: int = config.MANIFEST_SCHEMA_VERSION

    @property
    def manifest_hash(self) -> str:
        """SHA-256 of the hashed fields"""
        data = {key: value for key, value in asdict(self).items() if key not in UNHASHED_FIELDS}
        return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()

    @property
    def spec(self) -> ProcessSpec:
        """The process the manifest describes"""
        return ProcessSpec.deserialize(self.kernel)

    def serialize(self) -> dict:
        """Serializes a RunManifest into a dictionary"""
        data = asdict(self)
        data["manifest_hash"] = self.manifest_hash
        return data

    @classmethod
    def deserialize(cls, data: dict) -> "RunManifest":
        """
        Builds a RunManifest from a dictionary

        Args:
            data (dict): A dictionary as written by ``serialize``
        """
        try:
            version = data.get("schema_version", config.MANIFEST_SCHEMA_VERSION)
            if version != config.MANIFEST_SCHEMA_VERSION:
                raise DataValidationError(
                    f"manifest schema_version {version} is not {config.MANIFEST_SCHEMA_VERSION}"
                )
            manifest = cls(
                command=str(data["command"]),
                kernel=dict(data["kernel"]),
                passage=dict(data["passage"]),
                sampler=dict(data["sampler"]),
                quadrature=dict(data["quadrature"]),
                outputs=dict(data.get("outputs", {})),
                code_version=str(data.get("code_version", "")),
                wall_time=data.get("wall_time"),
                schema_version=version,
            )
        except KeyError as error:
            raise DataValidationError("Invalid manifest: missing " + error.args[0]) from error
        except (TypeError, ValueError, AttributeError) as error:
            raise DataValidationError(
                "Invalid manifest: body of request contained bad or no data " + str(error)
            ) from error
        stored = data.get("manifest_hash")
        if stored is not None and stored != manifest.manifest_hash:
            logger.warning("Manifest hash %s does not match its content", stored)
        return manifest

    def write(self, directory: str) -> str:
        """Writes manifest.json into the directory"""
        path = os.path.join(directory, MANIFEST_FILE)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.serialize(), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        """Loads a manifest from a JSON file"""
        try:
            with open(path, encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as error:
            raise DataValidationError(f"cannot read manifest {path}: {error}") from error
        except json.JSONDecodeError as error:
            raise ConfigFileError(f"{path} is not JSON: {error.msg}", error.lineno) from error
        if not isinstance(data, dict):
            raise DataValidationError(f"manifest {path} must hold a JSON object")
        return cls.deserialize(data)


######################################################################
#  A R T I F A C T S
######################################################################


def write_survival_csv(path: str, curve: SurvivalCurve, manifest_hash: str) -> str:
    """Survival curve as CSV, floats written with repr"""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# manifest_sha256={manifest_hash}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SURVIVAL_HEADER)
        for u, count, trials, fraction, low, high in curve.rows():
            writer.writerow([repr(u), count, trials, repr(fraction), repr(low), repr(high)])
    return path


def read_survival_csv(path: str) -> Tuple[str, SurvivalCurve]:
    """The manifest hash and counts of a survival CSV"""
    with open(path, encoding="utf-8") as handle:
        first = handle.readline().strip()
        if not first.startswith("# manifest_sha256="):
            raise ConfigFileError("missing manifest_sha256 header", 1)
        rows = list(csv.DictReader(handle))
    try:
        curve = SurvivalCurve(
            tuple(float(row["u"]) for row in rows),
            tuple(int(row["survivors"]) for row in rows),
            int(rows[0]["trials"]) if rows else 0,
        )
    except (KeyError, ValueError) as error:
        raise DataValidationError(f"malformed survival file {path}: {error}") from error
    return first.split("=", 1)[1], curve


def write_json(path: str, payload: dict, manifest_hash: str) -> str:
    """A JSON artifact stamped with the manifest hash"""
    document = dict(payload)
    document["manifest_hash"] = manifest_hash
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


######################################################################
#  O P T I O N   P A R S I N G
######################################################################


def _number(text: str, name: str) -> float:
    try:
        return float(text)
    except ValueError as error:
        raise DataValidationError(f"'{name}' must be a number, got '{text}'") from error


def parse_kernel_option(text: str) -> ProcessSpec:
    """
    Parses ``bm``, ``fbm:H=<h>[,slnd=<l>]`` or
    ``spde:d=<d>,gamma=<g>,beta=<b>,nu=<n>[,slnd=<l>]``
    """
    kind, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise DataValidationError(f"kernel parameter '{item}' is not key=value")
        params[key.strip()] = value.strip()
    allowed = {"bm": set(), "fbm": {"H", "slnd"}, "spde": {"d", "gamma", "beta", "nu", "slnd"}}
    if kind not in allowed:
        raise DataValidationError(f"unknown kernel '{kind}', expected bm, fbm or spde")
    unknown = set(params) - allowed[kind]
    if unknown:
        raise DataValidationError(f"unknown {kind} parameters: {', '.join(sorted(unknown))}")
    data = {"kind": kind}
    for key, value in params.items():
        data["slnd_constant" if key == "slnd" else key] = _number(value, key)
    return ProcessSpec.deserialize(data)


def parse_float_list(text: str, name: str = "list") -> List[float]:
    """``a,b,c`` or an inclusive range ``start:stop:step``"""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise DataValidationError(f"'{name}' range must be start:stop:step, got '{text}'")
        start, stop, step = (_number(part, name) for part in parts)
        if not step > 0 or stop < start:
            raise DataValidationError(f"'{name}' range {text} is empty")
        count = int(round((stop - start) / step)) + 1
        return [start + k * step for k in range(count)]
    values = [_number(part, name) for part in text.split(",") if part.strip()]
    if not values:
        raise DataValidationError(f"'{name}' is empty")
    return values


def parse_window(text: str) -> Tuple[float, float]:
    """``UMIN,UMAX``"""
    values = parse_float_list(text, "window")
    if len(values) != 2 or not values[0] < values[1]:
        raise DataValidationError(f"window must be UMIN,UMAX with UMIN < UMAX, got '{text}'")
    return values[0], values[1]


######################################################################
#  F L A T   C O N F I G   F I L E S
######################################################################

KERNEL_KEYS = ("kind", "H", "d", "gamma", "beta", "nu", "slnd_constant")
CONFIG_KEYS = {
    "kind": str,
    "H": float,
    "d": int,
    "gamma": float,
    "beta": float,
    "nu": float,
    "slnd_constant": float,
    "c": float,
    "boundary_beta": float,
    "delta": float,
    "horizons": parse_float_list,
    "paths": int,
    "seed": int,
    "workers": int,
    "rel_tol": float,
    "window": parse_window,
}


def parse_config_text(text: str) -> dict:
    """
    Parses ``key = value`` lines; ``#`` starts a comment

    Kernel keys are gathered under ``"kernel"`` as a ProcessSpec. Every
    error names the offending line.
    """
    values = {}
    kernel = {}
    kernel_line = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigFileError(f"expected 'key = value', got '{raw.strip()}'", number)
        if key not in CONFIG_KEYS:
            raise ConfigFileError(f"unknown key '{key}'", number)
        if key in values or key in kernel:
            raise ConfigFileError(f"duplicate key '{key}'", number)
        try:
            parsed = CONFIG_KEYS[key](value)
        except (ValueError, DataValidationError) as error:
            raise ConfigFileError(f"bad value for '{key}': {error}", number) from error
        if key in KERNEL_KEYS:
            kernel[key] = parsed
            kernel_line = kernel_line or number
        else:
            values[key] = parsed
    if kernel:
        try:
            values["kernel"] = ProcessSpec.deserialize(kernel)
        except DataValidationError as error:
            raise ConfigFileError(str(error), kernel_line) from error
    return values


def parse_config_file(path: str) -> dict:
    """Reads and parses a flat config file"""
    try:
        with open(path, encoding="utf-8") as handle:
            return parse_config_text(handle.read())
    except OSError as error:
        raise DataValidationError(f"cannot read config {path}: {error}") from error
