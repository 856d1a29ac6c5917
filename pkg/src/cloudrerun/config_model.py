"""Abstract request configuration: parse, validate, default-fill, serialize.

The user-facing input is three INI files:

* ``resources.ini``   -- sections ``[resources]``, ``[cloud.aws]``,
  ``[cloud.azure]``, ``[reproduce]``
* ``application.ini`` -- section ``[application]``
* ``personal.ini``    -- section ``[personal]``

Dialect: ``key = value`` pairs, ``#`` comments, lists comma-separated,
maps as comma-separated ``key:value`` pairs.  Canonical serialization is
byte-specified: UTF-8, LF line endings, fixed section order, keys sorted
inside each section, exactly one space around ``=``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional

from .errors import (
    MalformedValue,
    MissingRequiredKey,
    ProviderMismatch,
    UnknownEngine,
)

__all__ = [
    "Engine",
    "AwsBlock",
    "AzureBlock",
    "ReproduceBlock",
    "ResourcesSpec",
    "ApplicationSpec",
    "PersonalSpec",
    "AbstractRequest",
    "Finding",
    "ValidationReport",
    "parse_abstract_request",
    "parse_resources",
    "parse_application",
    "parse_personal",
    "validate",
    "canonical_serialize",
    "serialize_resources",
    "serialize_application",
    "serialize_personal",
    "fill_defaults",
    "DEFAULTS",
    "SECRET_KEY_MARKERS",
    "REDACTED",
    "CREDENTIAL_ENV_PREFIX",
]


class Engine(str, Enum):
    """Accepted analytics engines; the enumeration is closed."""

    NONE = "none"
    SPARK = "spark"
    HOROVOD = "horovod"
    DASK = "dask"


# Default values used to complete partially specified requests.  These are
# configuration choices, not measured facts.
DEFAULTS = {
    "bigdata_engine": "none",
    "instance_number": 1,
    "aws_region": "us-west-2",
    "azure_region": "westus2",
    "aws_instance_type": "c5d.4xlarge",
    "azure_instance_type": "F16s_v2",
    "subnet_id": "subnet-default",
    "vpc_id": "vpc-default",
    "resource_group_name": "analytics-rg",
    "reproduce_storage": "execution-history",
    "reproduce_database": "execution-records",
    "key_path": "~/.ssh/analytics.pem",
    "key_name": "analytics-key",
    "python_runtime": "3.8",
}

# Key-name fragments that mark a value as secret material.
SECRET_KEY_MARKERS = (
    "credential",
    "secret",
    "password",
    "token",
    "access_key",
    "private_key",
)

REDACTED = "<redacted>"

# Environment variables CLOUDRERUN_CREDENTIAL_<NAME> add or override entries
# of personal.cloud_credentials (NAME lowercased).
CREDENTIAL_ENV_PREFIX = "CLOUDRERUN_CREDENTIAL_"


@dataclass(frozen=True)
class AwsBlock:
    region: str
    instance_number: int
    subnet_id: str
    instance_type: str
    vpc_id: str


@dataclass(frozen=True)
class AzureBlock:
    region: str
    instance_number: int
    resource_group_name: str
    instance_type: str


@dataclass(frozen=True)
class ReproduceBlock:
    reproduce_storage: str
    reproduce_database: str


@dataclass(frozen=True)
class ResourcesSpec:
    bigdata_engine: Engine
    cloud_aws: Optional[AwsBlock]
    cloud_azure: Optional[AzureBlock]
    reproduce: ReproduceBlock
    # Unknown keys, kept per section for forward compatibility.
    extras: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = ()

    def provider_block(self, provider: str):
        if provider == "aws":
            return self.cloud_aws
        if provider == "azure":
            return self.cloud_azure
        return None


@dataclass(frozen=True)
class ApplicationSpec:
    docker_image: str
    data_uri: tuple[str, ...]
    command: str
    bootstrap: tuple[str, ...] = ()
    extras: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = ()


@dataclass(frozen=True)
class PersonalSpec:
    cloud_provider: str
    key_path: str
    key_name: str
    python_runtime: str
    cloud_credentials: tuple[tuple[str, str], ...] = ()
    extras: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = ()

    def redacted(self) -> "PersonalSpec":
        """Copy with every credential value replaced by a placeholder."""
        return replace(
            self,
            cloud_credentials=tuple((k, REDACTED) for k, _ in self.cloud_credentials),
        )


@dataclass(frozen=True)
class AbstractRequest:
    resources: ResourcesSpec
    application: ApplicationSpec
    personal: PersonalSpec


@dataclass(frozen=True)
class Finding:
    section: str
    key: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_RESOURCES_SECTIONS = ("resources", "cloud.aws", "cloud.azure", "reproduce")
_KNOWN_KEYS = {
    "resources": {"bigdata_engine"},
    "cloud.aws": {"region", "instance_number", "subnet_id", "instance_type", "vpc_id"},
    "cloud.azure": {"region", "instance_number", "resource_group_name", "instance_type"},
    "reproduce": {"reproduce_storage", "reproduce_database"},
    "application": {"docker_image", "data_uri", "command", "bootstrap"},
    "personal": {"cloud_provider", "key_path", "key_name", "python_runtime", "cloud_credentials"},
}


def _read_ini(text: str, label: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#",), strict=True
    )
    parser.optionxform = str  # keep key case as written
    try:
        parser.read_string(text, source=label)
    except configparser.Error as exc:
        raise MalformedValue(f"{label}: {exc}") from exc
    sections: dict[str, dict[str, str]] = {}
    for name in parser.sections():
        sections[name] = {k: v.strip() for k, v in parser.items(name)}
    return sections


def _split_list(value: str) -> tuple[str, ...]:
    if not value.strip():
        return ()
    return tuple(item.strip() for item in value.split(",") if item.strip())


def _split_map(value: str, label: str) -> tuple[tuple[str, str], ...]:
    pairs = []
    for item in _split_list(value):
        if ":" not in item:
            raise MalformedValue(f"{label}: expected key:value pair, got {item!r}")
        k, v = item.split(":", 1)
        pairs.append((k.strip(), v.strip()))
    return tuple(pairs)


def _positive_int(value: str, label: str) -> int:
    try:
        number = int(value)
    except ValueError as exc:
        raise MalformedValue(f"{label}: expected a positive integer, got {value!r}") from exc
    if number < 1:
        raise MalformedValue(f"{label}: must be >= 1, got {number}")
    return number


def _extras_of(section: str, data: Mapping[str, str], warnings: list[str]):
    unknown = {k: v for k, v in data.items() if k not in _KNOWN_KEYS.get(section, set())}
    for key in unknown:
        warnings.append(f"unknown key {key!r} in [{section}]")
    if not unknown:
        return None
    return (section, tuple(sorted(unknown.items())))


def parse_resources(text: str, warnings: Optional[list[str]] = None) -> ResourcesSpec:
    warnings = warnings if warnings is not None else []
    sections = _read_ini(text, "resources.ini")

    extras = []
    for name, data in sections.items():
        if name not in _RESOURCES_SECTIONS:
            warnings.append(f"unknown section [{name}] in resources.ini")
            extras.append((name, tuple(sorted(data.items()))))
            continue
        extra = _extras_of(name, data, warnings)
        if extra:
            extras.append(extra)

    res = sections.get("resources", {})
    engine_raw = res.get("bigdata_engine", DEFAULTS["bigdata_engine"])
    try:
        engine = Engine(engine_raw)
    except ValueError as exc:
        accepted = ", ".join(e.value for e in Engine)
        raise UnknownEngine(
            f"bigdata_engine {engine_raw!r} not one of: {accepted}"
        ) from exc

    aws = None
    if "cloud.aws" in sections:
        a = sections["cloud.aws"]
        aws = AwsBlock(
            region=a.get("region", DEFAULTS["aws_region"]),
            instance_number=_positive_int(
                a.get("instance_number", str(DEFAULTS["instance_number"])),
                "cloud.aws.instance_number",
            ),
            subnet_id=a.get("subnet_id", DEFAULTS["subnet_id"]),
            instance_type=a.get("instance_type", DEFAULTS["aws_instance_type"]),
            vpc_id=a.get("vpc_id", DEFAULTS["vpc_id"]),
        )

    azure = None
    if "cloud.azure" in sections:
        a = sections["cloud.azure"]
        azure = AzureBlock(
            region=a.get("region", DEFAULTS["azure_region"]),
            instance_number=_positive_int(
                a.get("instance_number", str(DEFAULTS["instance_number"])),
                "cloud.azure.instance_number",
            ),
            resource_group_name=a.get("resource_group_name", DEFAULTS["resource_group_name"]),
            instance_type=a.get("instance_type", DEFAULTS["azure_instance_type"]),
        )

    rep = sections.get("reproduce", {})
    reproduce = ReproduceBlock(
        reproduce_storage=rep.get("reproduce_storage", DEFAULTS["reproduce_storage"]),
        reproduce_database=rep.get("reproduce_database", DEFAULTS["reproduce_database"]),
    )

    return ResourcesSpec(
        bigdata_engine=engine,
        cloud_aws=aws,
        cloud_azure=azure,
        reproduce=reproduce,
        extras=tuple(sorted(extras)),
    )


def parse_application(text: str, warnings: Optional[list[str]] = None) -> ApplicationSpec:
    warnings = warnings if warnings is not None else []
    sections = _read_ini(text, "application.ini")

    extras = []
    for name, data in sections.items():
        if name != "application":
            warnings.append(f"unknown section [{name}] in application.ini")
            extras.append((name, tuple(sorted(data.items()))))
            continue
        extra = _extras_of(name, data, warnings)
        if extra:
            extras.append(extra)

    app = sections.get("application", {})
    image = app.get("docker_image", "").strip()
    if not image:
        raise MissingRequiredKey("application.docker_image is required")

    return ApplicationSpec(
        docker_image=image,
        data_uri=_split_list(app.get("data_uri", "")),
        command=app.get("command", "").strip(),
        bootstrap=_split_list(app.get("bootstrap", "")),
        extras=tuple(sorted(extras)),
    )


def parse_personal(
    text: str,
    env: Optional[Mapping[str, str]] = None,
    warnings: Optional[list[str]] = None,
) -> PersonalSpec:
    """Parse personal.ini; credentials may arrive or be overridden via
    CLOUDRERUN_CREDENTIAL_* environment variables."""
    warnings = warnings if warnings is not None else []
    sections = _read_ini(text, "personal.ini")

    extras = []
    for name, data in sections.items():
        if name != "personal":
            warnings.append(f"unknown section [{name}] in personal.ini")
            extras.append((name, tuple(sorted(data.items()))))
            continue
        extra = _extras_of(name, data, warnings)
        if extra:
            extras.append(extra)

    personal = sections.get("personal", {})
    provider = personal.get("cloud_provider", "").strip()
    if not provider:
        raise MissingRequiredKey("personal.cloud_provider is required")

    credentials = dict(_split_map(personal.get("cloud_credentials", ""), "personal.cloud_credentials"))
    for var, value in (env or {}).items():
        if var.startswith(CREDENTIAL_ENV_PREFIX):
            credentials[var[len(CREDENTIAL_ENV_PREFIX):].lower()] = value

    return PersonalSpec(
        cloud_provider=provider,
        key_path=personal.get("key_path", DEFAULTS["key_path"]),
        key_name=personal.get("key_name", DEFAULTS["key_name"]),
        python_runtime=personal.get("python_runtime", DEFAULTS["python_runtime"]),
        cloud_credentials=tuple(sorted(credentials.items())),
        extras=tuple(sorted(extras)),
    )


def fill_defaults(req: AbstractRequest) -> AbstractRequest:
    """Complete a request with default values; idempotent.

    Parsing already fills per-key defaults.  This adds the one structural
    default: when no provider block was given at all, the block for the
    provider named in personal.ini is created (known providers only).
    """
    res = req.resources
    if res.cloud_aws is None and res.cloud_azure is None:
        if req.personal.cloud_provider == "aws":
            res = replace(
                res,
                cloud_aws=AwsBlock(
                    region=DEFAULTS["aws_region"],
                    instance_number=DEFAULTS["instance_number"],
                    subnet_id=DEFAULTS["subnet_id"],
                    instance_type=DEFAULTS["aws_instance_type"],
                    vpc_id=DEFAULTS["vpc_id"],
                ),
            )
        elif req.personal.cloud_provider == "azure":
            res = replace(
                res,
                cloud_azure=AzureBlock(
                    region=DEFAULTS["azure_region"],
                    instance_number=DEFAULTS["instance_number"],
                    resource_group_name=DEFAULTS["resource_group_name"],
                    instance_type=DEFAULTS["azure_instance_type"],
                ),
            )
    return replace(req, resources=res)


def parse_abstract_request(
    resources_text: str,
    application_text: str,
    personal_text: str,
    env: Optional[Mapping[str, str]] = None,
) -> AbstractRequest:
    """Parse and jointly validate the three configuration texts.

    Raises exactly one of UnknownEngine, MissingRequiredKey, MalformedValue
    or ProviderMismatch on invalid input; anything else parses to a valid,
    default-filled request.
    """
    warnings: list[str] = []
    resources = parse_resources(resources_text, warnings)
    application = parse_application(application_text, warnings)
    personal = parse_personal(personal_text, env, warnings)

    req = fill_defaults(AbstractRequest(resources, application, personal))

    if req.resources.provider_block(personal.cloud_provider) is None:
        raise ProviderMismatch(
            f"personal.cloud_provider={personal.cloud_provider!r} has no matching "
            "provider block in resources.ini"
        )
    if req.resources.bigdata_engine is not Engine.NONE and not application.command:
        raise MissingRequiredKey(
            "application.command is required when bigdata_engine is not 'none'"
        )
    return req


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _looks_secret(key: str) -> bool:
    lowered = key.lower()
    return any(marker in lowered for marker in SECRET_KEY_MARKERS)


def _check_locator(value: str) -> Optional[str]:
    if not value:
        return "empty locator"
    if any(ch.isspace() for ch in value):
        return "locator contains whitespace"
    if "," in value:
        return "locator contains a comma"
    return None


def validate(req: AbstractRequest) -> ValidationReport:
    """Report every invariant violation; never mutates the request."""
    findings: list[Finding] = []
    warnings: list[str] = []

    res = req.resources
    if not isinstance(res.bigdata_engine, Engine):
        findings.append(Finding("resources", "bigdata_engine", "unknown engine"))
    if res.cloud_aws is None and res.cloud_azure is None:
        findings.append(Finding("resources", "cloud.*", "no provider block present"))
    for name, block in (("cloud.aws", res.cloud_aws), ("cloud.azure", res.cloud_azure)):
        if block is None:
            continue
        if block.instance_number < 1:
            findings.append(Finding(name, "instance_number", "instance_number must be >= 1"))
        for key, value in vars(block).items():
            if isinstance(value, str) and not value:
                findings.append(Finding(name, key, f"{key} must be non-empty"))
    for key in ("reproduce_storage", "reproduce_database"):
        if not getattr(res.reproduce, key):
            findings.append(Finding("reproduce", key, f"{key} must be non-empty"))

    app = req.application
    if not app.docker_image:
        findings.append(Finding("application", "docker_image", "docker_image must be non-empty"))
    for uri in app.data_uri:
        problem = _check_locator(uri)
        if problem:
            findings.append(Finding("application", "data_uri", f"{uri!r}: {problem}"))
    if res.bigdata_engine is not Engine.NONE and not app.command:
        findings.append(
            Finding("application", "command", "command required when an engine is selected")
        )

    personal = req.personal
    if not personal.cloud_provider:
        findings.append(Finding("personal", "cloud_provider", "cloud_provider must be non-empty"))
    elif res.provider_block(personal.cloud_provider) is None:
        findings.append(
            Finding(
                "personal",
                "cloud_provider",
                f"no resources block for provider {personal.cloud_provider!r}",
            )
        )

    # Secret material must live only in the personal section.
    for spec, origin in ((res, "resources"), (app, "application")):
        for section, pairs in spec.extras:
            for key, _ in pairs:
                if _looks_secret(key):
                    findings.append(
                        Finding(section, key, "credentials outside personal section")
                    )
                else:
                    warnings.append(f"unknown key {key!r} in [{section}] ({origin})")

    return ValidationReport(findings=tuple(findings), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------

def _render(sections: list[tuple[str, dict[str, str]]]) -> str:
    out = io.StringIO()
    first = True
    for name, data in sections:
        if not first:
            out.write("\n")
        first = False
        out.write(f"[{name}]\n")
        for key in sorted(data):
            out.write(f"{key} = {data[key]}\n")
    return out.getvalue()


def _extras_sections(extras, known_names) -> list[tuple[str, dict[str, str]]]:
    merged: dict[str, dict[str, str]] = {}
    for section, pairs in extras:
        merged.setdefault(section, {}).update(dict(pairs))
    return [(name, data) for name, data in sorted(merged.items()) if name not in known_names]


def serialize_resources(res: ResourcesSpec) -> str:
    extras_by_section: dict[str, dict[str, str]] = {}
    for section, pairs in res.extras:
        extras_by_section.setdefault(section, {}).update(dict(pairs))

    sections: list[tuple[str, dict[str, str]]] = []
    base = {"bigdata_engine": res.bigdata_engine.value}
    base.update(extras_by_section.get("resources", {}))
    sections.append(("resources", base))
    if res.cloud_aws is not None:
        data = {
            "region": res.cloud_aws.region,
            "instance_number": str(res.cloud_aws.instance_number),
            "subnet_id": res.cloud_aws.subnet_id,
            "instance_type": res.cloud_aws.instance_type,
            "vpc_id": res.cloud_aws.vpc_id,
        }
        data.update(extras_by_section.get("cloud.aws", {}))
        sections.append(("cloud.aws", data))
    if res.cloud_azure is not None:
        data = {
            "region": res.cloud_azure.region,
            "instance_number": str(res.cloud_azure.instance_number),
            "resource_group_name": res.cloud_azure.resource_group_name,
            "instance_type": res.cloud_azure.instance_type,
        }
        data.update(extras_by_section.get("cloud.azure", {}))
        sections.append(("cloud.azure", data))
    sections.append(
        (
            "reproduce",
            {
                "reproduce_storage": res.reproduce.reproduce_storage,
                "reproduce_database": res.reproduce.reproduce_database,
            },
        )
    )
    sections.extend(_extras_sections(res.extras, set(_RESOURCES_SECTIONS)))
    return _render(sections)


def serialize_application(app: ApplicationSpec) -> str:
    extras_by_section: dict[str, dict[str, str]] = {}
    for section, pairs in app.extras:
        extras_by_section.setdefault(section, {}).update(dict(pairs))

    data = {"docker_image": app.docker_image, "command": app.command}
    if app.data_uri:
        data["data_uri"] = ", ".join(app.data_uri)
    if app.bootstrap:
        data["bootstrap"] = ", ".join(app.bootstrap)
    data.update(extras_by_section.get("application", {}))
    sections = [("application", data)]
    sections.extend(_extras_sections(app.extras, {"application"}))
    return _render(sections)


def serialize_personal(personal: PersonalSpec, redact: bool = False) -> str:
    spec = personal.redacted() if redact else personal
    extras_by_section: dict[str, dict[str, str]] = {}
    for section, pairs in spec.extras:
        extras_by_section.setdefault(section, {}).update(dict(pairs))

    data = {
        "cloud_provider": spec.cloud_provider,
        "key_path": spec.key_path,
        "key_name": spec.key_name,
        "python_runtime": spec.python_runtime,
    }
    if spec.cloud_credentials:
        data["cloud_credentials"] = ", ".join(f"{k}:{v}" for k, v in spec.cloud_credentials)
    data.update(extras_by_section.get("personal", {}))
    sections = [("personal", data)]
    sections.extend(_extras_sections(spec.extras, {"personal"}))
    return _render(sections)


def canonical_serialize(req: AbstractRequest, redact_personal: bool = False) -> tuple[str, str, str]:
    """Deterministic (resources, application, personal) text triple.

    Serializing twice yields identical bytes; parsing the output yields a
    structurally equal request.
    """
    return (
        serialize_resources(req.resources),
        serialize_application(req.application),
        serialize_personal(req.personal, redact=redact_personal),
    )
