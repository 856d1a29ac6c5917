"""Cloud-agnostic application model: one abstract request, per-cloud
executable pipeline documents.

The provider-specific knowledge lives in two places only:

* a service mapping table (category -> concrete managed service per cloud),
* an adapter per provider that assembles the pipeline document.

Dispatch follows the adaptee-mapping convention: look the provider up in a
registry and delegate, raising for anything unregistered.  The table also
names services for a third cloud (gcloud); carrying the names costs nothing
and no adapter exists for it, so using it fails exactly like any other
unregistered provider.

A pipeline document is a JSON-serializable description with four cloud
function bindings (software setup, analytics, export, terminate), one
trigger rule per function, and a provisioning step that announces hardware
readiness.  The application and personal parts are provider-independent by
construction and are byte-identical across adapters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Protocol

from .config_model import (
    AbstractRequest,
    Engine,
    serialize_application,
    serialize_personal,
    serialize_resources,
)
from .engines import build_security_groups, capture_engine_config
from .errors import (
    UnmappedService,
    UnsupportedEngineOnProvider,
    UnsupportedProvider,
)

__all__ = [
    "SERVICE_CATEGORIES",
    "SERVICE_MAPPING",
    "lookup_service",
    "PipelineDocument",
    "CloudAdapter",
    "AwsAdapter",
    "AzureAdapter",
    "register_adapter",
    "unregister_adapter",
    "registered_providers",
    "get_adapter",
    "generate_pipeline",
    "FUNCTION_NAMES",
    "SCHEMA_VERSION",
    "EXPORT_PREFIX",
]

SCHEMA_VERSION = 1

SERVICE_CATEGORIES = (
    "cluster",
    "network",
    "container_registry",
    "storage",
    "database",
    "deployment_functions",
    "sdk",
    "identity",
)

# Concrete managed service per (provider, category).
SERVICE_MAPPING = {
    "aws": {
        "cluster": "EC2 Auto Scaling/EMR",
        "network": "VPN",
        "container_registry": "ECR",
        "storage": "S3",
        "database": "DynamoDB",
        "deployment_functions": "CloudFormation & Lambda Functions",
        "sdk": "Boto/Boto3",
        "identity": "AWS IAM",
    },
    "azure": {
        "cluster": "Virtual Machine Scale Set/HDInsight",
        "network": "Virtual Network",
        "container_registry": "Azure Container Registry",
        "storage": "Blob storage",
        "database": "CosmosDB",
        "deployment_functions": "Deployment Manager & Azure Functions",
        "sdk": ".NET Core",
        "identity": "Azure IAM",
    },
    "gcloud": {
        "cluster": "Autoscaling Groups/Dataproc",
        "network": "Virtual Private Cloud",
        "container_registry": "Artifact Registry",
        "storage": "Firebase",
        "database": "Firebase Realtime Database",
        "deployment_functions": "Cloud Deployment Manager & Cloud Functions",
        "sdk": "Cloud SDK",
        "identity": "Cloud IAM",
    },
}

FUNCTION_NAMES = (
    "software_env_setup",
    "run_analytics",
    "export_execution",
    "terminate_resources",
)

# Analytics results land under this key prefix; the export function is
# triggered by object-created events matching it.
EXPORT_PREFIX = "export/"


def lookup_service(provider: str, category: str) -> str:
    table = SERVICE_MAPPING.get(provider)
    if table is None or category not in table:
        raise UnmappedService(f"no service mapped for ({provider!r}, {category!r})")
    return table[category]


@dataclass(frozen=True)
class PipelineDocument:
    """Executable pipeline for one provider, JSON all the way down."""

    provider: str
    body: dict

    def to_json(self) -> str:
        return json.dumps(self.body, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineDocument":
        body = json.loads(text)
        return cls(provider=body["provider"], body=body)


class CloudAdapter(Protocol):
    provider: str

    def provisioning_doc(self, req: AbstractRequest) -> dict: ...

    def application_doc(self, req: AbstractRequest) -> dict: ...

    def personal_doc(self, req: AbstractRequest) -> dict: ...

    def assemble(self, req: AbstractRequest) -> PipelineDocument: ...


def _application_doc(req: AbstractRequest) -> dict:
    """Provider-independent application part; adapters share it verbatim."""
    captured = capture_engine_config(req)
    return {
        "docker_image": req.application.docker_image,
        "datasets": list(req.application.data_uri),
        "command": req.application.command,
        "bootstrap": list(req.application.bootstrap),
        "engine": captured["engine"],
        "engine_parameters": captured["parameters"],
    }


class _BaseAdapter:
    provider: str = ""
    unsupported_engines: frozenset[Engine] = frozenset()

    def _block(self, req: AbstractRequest):
        return req.resources.provider_block(self.provider)

    def _check_engine(self, req: AbstractRequest) -> None:
        engine = req.resources.bigdata_engine
        if engine in self.unsupported_engines:
            raise UnsupportedEngineOnProvider(
                f"{self.provider} cannot host the {engine.value} engine"
            )

    def provisioning_doc(self, req: AbstractRequest) -> dict:
        raise NotImplementedError

    def application_doc(self, req: AbstractRequest) -> dict:
        return _application_doc(req)

    def personal_doc(self, req: AbstractRequest) -> dict:
        personal = req.personal
        return {
            "cloud_provider": personal.cloud_provider,
            "key_name": personal.key_name,
            "key_path": personal.key_path,
            "python_runtime": personal.python_runtime,
            "authentication_service": lookup_service(self.provider, "identity"),
            # Secrets never enter the document; functions read them from the
            # execution environment at run time.
            "credentials_source": "environment",
        }

    def _functions(self, req: AbstractRequest) -> list[dict]:
        runtime = req.personal.python_runtime
        service = lookup_service(self.provider, "deployment_functions")
        return [
            {"name": name, "runtime": f"python{runtime}", "service": service}
            for name in FUNCTION_NAMES
        ]

    def _rules(self, req: AbstractRequest) -> list[dict]:
        """One trigger per function.  Sources are symbolic here; deployment
        binds them to a concrete execution instance."""
        storage_service = lookup_service(self.provider, "storage")
        return [
            {
                "function": "software_env_setup",
                "source_kind": "lifecycle",
                "event": "HardwareEnvReady",
                "match": "exact",
            },
            {
                "function": "run_analytics",
                "source_kind": "lifecycle",
                "event": "SoftwareEnvReady",
                "match": "exact",
            },
            {
                "function": "export_execution",
                "source_kind": "storage",
                "service": storage_service,
                "event": EXPORT_PREFIX,
                "match": "prefix",
            },
            {
                "function": "terminate_resources",
                "source_kind": "lifecycle",
                "event": "ExportComplete",
                "match": "exact",
            },
        ]

    def _security_groups(self, req: AbstractRequest) -> list[dict]:
        groups = build_security_groups(req.resources.bigdata_engine)
        return [
            {
                "group_id": g.group_id,
                "rules": [
                    {
                        "direction": r.direction,
                        "protocol": r.protocol,
                        "peer": r.peer,
                        "port_range": list(r.port_range),
                    }
                    for r in g.rules
                ],
            }
            for g in groups
        ]

    def assemble(self, req: AbstractRequest) -> PipelineDocument:
        self._check_engine(req)
        body = {
            "schema_version": SCHEMA_VERSION,
            "provider": self.provider,
            "executable": {
                "resources": self.provisioning_doc(req),
                "application": self.application_doc(req),
                "personal": self.personal_doc(req),
            },
            "functions": self._functions(req),
            "rules": self._rules(req),
            "security_groups": self._security_groups(req),
            # Canonical request texts ride along so deployment can archive
            # the exact configuration; the personal part is pre-redacted.
            "archive": {
                "resources_ini": serialize_resources(req.resources),
                "application_ini": serialize_application(req.application),
                "personal_ini": serialize_personal(req.personal, redact=True),
            },
        }
        return PipelineDocument(provider=self.provider, body=body)


class AwsAdapter(_BaseAdapter):
    provider = "aws"

    def provisioning_doc(self, req: AbstractRequest) -> dict:
        block = self._block(req)
        return {
            "cluster_service": lookup_service("aws", "cluster"),
            "network_service": lookup_service("aws", "network"),
            "registry_service": lookup_service("aws", "container_registry"),
            "region": block.region,
            "instance_type": block.instance_type,
            "instance_number": block.instance_number,
            "subnet_id": block.subnet_id,
            "vpc_id": block.vpc_id,
            "emits": "HardwareEnvReady",
        }


class AzureAdapter(_BaseAdapter):
    provider = "azure"
    # HDInsight offers no Docker-based engine deployment, so the
    # containerized engine path is unavailable on this provider.
    unsupported_engines = frozenset({Engine.SPARK})

    def provisioning_doc(self, req: AbstractRequest) -> dict:
        block = self._block(req)
        return {
            "cluster_service": lookup_service("azure", "cluster"),
            "network_service": lookup_service("azure", "network"),
            "registry_service": lookup_service("azure", "container_registry"),
            "region": block.region,
            "instance_type": block.instance_type,
            "instance_number": block.instance_number,
            "resource_group_name": block.resource_group_name,
            "emits": "HardwareEnvReady",
        }


_ADAPTERS: dict[str, CloudAdapter] = {}


def register_adapter(adapter: CloudAdapter) -> None:
    _ADAPTERS[adapter.provider] = adapter


def unregister_adapter(provider: str) -> Optional[CloudAdapter]:
    return _ADAPTERS.pop(provider, None)


def registered_providers() -> tuple[str, ...]:
    return tuple(sorted(_ADAPTERS))


def get_adapter(provider: str) -> CloudAdapter:
    adapter = _ADAPTERS.get(provider)
    if adapter is None:
        raise UnsupportedProvider(
            f"no adapter registered for provider {provider!r}; "
            f"registered: {', '.join(registered_providers()) or 'none'}"
        )
    return adapter


def generate_pipeline(req: AbstractRequest) -> PipelineDocument:
    """Dispatch on personal.cloud_provider and assemble the pipeline."""
    return get_adapter(req.personal.cloud_provider).assemble(req)


register_adapter(AwsAdapter())
register_adapter(AzureAdapter())
